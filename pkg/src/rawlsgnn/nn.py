"""GCN forward pass, hand-derived backward pass, loss, and Adam optimizer.

Every layer computes ``H_out = activation(P @ H_in @ W)`` for a sparse
propagation matrix ``P``. The backward pass assembles each weight gradient
as ``H_in^T @ G^T @ dE`` where ``dE`` is the loss gradient at the layer's
pre-activation and ``G`` is a caller-chosen gradient matrix: passing the
forward propagation matrix gives the true loss gradient, passing its doubly
stochastic form gives a gradient in which every node carries unit weight.
The signal flowing to earlier layers is always propagated with the forward
matrix; only the weight-gradient assembly is swapped.

``influence_decomposition`` recomputes the same gradient node by node, as a
degree-weighted sum of per-node influence matrices; it exists as an
independent cross-check of the matrix-form backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .graph import SparseMatrix, degrees, is_symmetric, spmm, spmm_transpose

__all__ = [
    "Activation",
    "GcnLayer",
    "GcnModel",
    "ForwardTape",
    "AdamState",
    "glorot_init",
    "forward",
    "softmax_cross_entropy",
    "per_node_cross_entropy",
    "backward",
    "layer_error_signals",
    "influence_decomposition",
    "adam_step",
]

Activation = Literal["relu", "none"]


@dataclass
class GcnLayer:
    weight: np.ndarray
    activation: Activation = "relu"


@dataclass
class GcnModel:
    """Ordered graph-convolution layers; the last layer emits raw logits."""

    layers: list[GcnLayer]

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError("model needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.weight.shape[1] != b.weight.shape[0]:
                raise ValueError(
                    f"layer dimensions do not chain: {a.weight.shape} -> {b.weight.shape}"
                )
        if self.layers[-1].activation != "none":
            raise ValueError("final layer must be linear (logits feed the loss)")

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def weights(self) -> list[np.ndarray]:
        return [layer.weight for layer in self.layers]

    @classmethod
    def create(cls, dims: list[int], seed: int) -> GcnModel:
        """Glorot-initialized model with ReLU between layers, linear output."""
        rng = np.random.default_rng(seed)
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
            activation = "none" if i == len(dims) - 2 else "relu"
            layers.append(GcnLayer(glorot_init((fan_in, fan_out), rng), activation))
        return cls(layers)


@dataclass
class ForwardTape:
    """Everything the backward pass needs: per-layer inputs and activations."""

    propagation: SparseMatrix
    inputs: list[np.ndarray] = field(repr=False)        # H^(l-1) per layer
    pre_activations: list[np.ndarray] = field(repr=False)
    outputs: list[np.ndarray] = field(repr=False)       # activation(pre)

    @property
    def logits(self) -> np.ndarray:
        return self.outputs[-1]


def glorot_init(shape: tuple[int, int], rng_seed: int | np.random.Generator) -> np.ndarray:
    """Uniform init on +-sqrt(6 / (fan_in + fan_out)), deterministic per seed."""
    rng = np.random.default_rng(rng_seed) if isinstance(rng_seed, int) else rng_seed
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


def _apply_activation(pre: np.ndarray, activation: Activation) -> np.ndarray:
    if activation == "relu":
        return np.maximum(pre, 0.0)
    if activation == "none":
        return pre
    raise ValueError(f"unknown activation {activation!r}")


def _activation_gradient(pre: np.ndarray, activation: Activation) -> np.ndarray:
    # ReLU subgradient at exactly 0 is taken as 0
    if activation == "relu":
        return (pre > 0.0).astype(np.float64)
    if activation == "none":
        return np.ones_like(pre)
    raise ValueError(f"unknown activation {activation!r}")


def forward(model: GcnModel, A_in: SparseMatrix, X: np.ndarray) -> ForwardTape:
    """Run the model over the graph, recording all intermediates."""
    X = np.asarray(X, dtype=np.float64)
    if A_in.n_rows != A_in.n_cols:
        raise ValueError("propagation matrix must be square")
    if X.shape[0] != A_in.n_rows:
        raise ValueError(
            f"feature rows ({X.shape[0]}) must match graph size ({A_in.n_rows})"
        )
    if X.shape[1] != model.layers[0].weight.shape[0]:
        raise ValueError(
            f"feature dim {X.shape[1]} does not match first layer "
            f"fan-in {model.layers[0].weight.shape[0]}"
        )
    inputs, pres, outs = [], [], []
    hidden = X
    for layer in model.layers:
        inputs.append(hidden)
        pre = spmm(A_in, hidden @ layer.weight)
        hidden = _apply_activation(pre, layer.activation)
        pres.append(pre)
        outs.append(hidden)
    return ForwardTape(propagation=A_in, inputs=inputs, pre_activations=pres, outputs=outs)


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray, mask: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross entropy over the masked rows and its gradient w.r.t. logits.

    Returns
    -------
    loss : float
        ``mean_{u in mask} -log softmax(logits[u])[labels[u]]``.
    dlogits : ndarray
        Same shape as ``logits``; masked rows hold
        ``(softmax - onehot) / |mask|``, all other rows are zero.
    """
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("mask must select at least one node")
    picked = logits[mask]
    picked_labels = np.asarray(labels)[mask]
    if picked_labels.min() < 0 or picked_labels.max() >= logits.shape[1]:
        raise ValueError("label out of range for logit width")
    shifted = picked - picked.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    rows = np.arange(len(mask))
    loss = float(-log_probs[rows, picked_labels].mean())
    grad_rows = np.exp(log_probs)
    grad_rows[rows, picked_labels] -= 1.0
    dlogits = np.zeros_like(logits)
    dlogits[mask] = grad_rows / len(mask)
    return loss, dlogits


def per_node_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Cross entropy of every node's prediction, as a length-n vector."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    return -log_probs[np.arange(logits.shape[0]), np.asarray(labels)]


def layer_error_signals(
    model: GcnModel, tape: ForwardTape, dlogits: np.ndarray
) -> list[np.ndarray]:
    """Loss gradient at each layer's pre-activation, by reverse chain rule.

    Propagation between layers always uses the tape's forward matrix.
    """
    if len(tape.inputs) != model.num_layers:
        raise ValueError("tape does not match model depth")
    signals: list[np.ndarray] = [np.empty(0)] * model.num_layers
    grad_out = np.asarray(dlogits, dtype=np.float64)
    if grad_out.shape != tape.logits.shape:
        raise ValueError("dlogits shape does not match the tape's logits")
    for idx in reversed(range(model.num_layers)):
        layer = model.layers[idx]
        signals[idx] = grad_out * _activation_gradient(
            tape.pre_activations[idx], layer.activation
        )
        if idx > 0:
            grad_out = spmm_transpose(tape.propagation, signals[idx]) @ layer.weight.T
    return signals


def backward(
    model: GcnModel,
    tape: ForwardTape,
    A_grad: SparseMatrix,
    dlogits: np.ndarray,
) -> list[np.ndarray]:
    """Per-layer weight gradients, assembled with ``A_grad``.

    Passing the tape's own propagation matrix yields the exact loss
    gradient; passing any other square matrix of the same size (typically
    the doubly stochastic form) swaps only the weight-gradient assembly,
    not the signal flowing to earlier layers.
    """
    if A_grad.shape != tape.propagation.shape:
        raise ValueError("gradient matrix must match the propagation matrix shape")
    signals = layer_error_signals(model, tape, dlogits)
    return [
        tape.inputs[idx].T @ spmm_transpose(A_grad, signals[idx])
        for idx in range(model.num_layers)
    ]


def influence_decomposition(
    tape: ForwardTape,
    A: SparseMatrix,
    dE: np.ndarray,
    layer: int,
    mode: Literal["row", "column"],
) -> np.ndarray:
    """Weight gradient rebuilt node by node as a degree-weighted influence sum.

    For each node the influence matrix is an outer product between its input
    embedding and an expectation of pre-activation gradients over its
    neighborhood distribution ``p(j) = A[i, j] / deg(i)`` (``row`` mode), or
    between the expected neighbor embedding and its own pre-activation
    gradient (``column`` mode). Summing influences weighted by weighted node
    degree reproduces the matrix-form gradient; this is deliberately the
    slow, explicit route used to cross-check ``backward``.
    """
    if mode not in ("row", "column"):
        raise ValueError(f"unknown mode {mode!r}")
    if not is_symmetric(A, tol=1e-6):
        raise ValueError("influence decomposition requires a symmetric matrix")
    H = tape.inputs[layer]
    dE = np.asarray(dE, dtype=np.float64)
    deg = degrees(A, "row")
    total = np.zeros((H.shape[1], dE.shape[1]))
    for node in range(A.n_rows):
        if deg[node] == 0.0:
            continue
        neighbors, weights = A.row(node)
        neighborhood = weights / deg[node]
        if mode == "row":
            expected_grad = neighborhood @ dE[neighbors]
            influence = np.outer(H[node], expected_grad)
        else:
            expected_embedding = neighborhood @ H[neighbors]
            influence = np.outer(expected_embedding, dE[node])
        total += deg[node] * influence
    return total


@dataclass
class AdamState:
    """Adam accumulators; weight decay enters as an L2 term on the gradient."""

    lr: float
    first_moment: list[np.ndarray] = field(repr=False)
    second_moment: list[np.ndarray] = field(repr=False)
    step: int = 0
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: GcnModel, lr: float, weight_decay: float = 5e-4) -> AdamState:
        return cls(
            lr=lr,
            first_moment=[np.zeros_like(w) for w in model.weights],
            second_moment=[np.zeros_like(w) for w in model.weights],
            weight_decay=weight_decay,
        )


def adam_step(state: AdamState, model: GcnModel, grads: list[np.ndarray]) -> None:
    """One bias-corrected Adam update, in place on the model and state."""
    if len(grads) != model.num_layers:
        raise ValueError("gradient count does not match model depth")
    state.step += 1
    bias1 = 1.0 - state.beta1**state.step
    bias2 = 1.0 - state.beta2**state.step
    for layer, m, v, grad in zip(
        model.layers, state.first_moment, state.second_moment, grads
    ):
        grad = grad + state.weight_decay * layer.weight
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / bias1
        v_hat = v / bias2
        layer.weight = layer.weight - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
