"""Dense feedforward network with manual backprop and masked weights.

Everything is plain numpy: forward caches activations for the backward
pass, gradients at masked-out weights are forced to zero, and snapshots
capture weights, masks, optimizer moments, and the learning rate exactly
so a later restore is bitwise.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .validation import check_labels, check_matrix

ACTIVATIONS = ("relu", "identity")
OPTIMIZERS = ("sgd", "adam")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class Layer:
    weights: np.ndarray   # (n_out, n_in)
    bias: np.ndarray      # (n_out,)
    activation: str

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match "
                f"{self.weights.shape[0]} output units"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(
                f"activation must be one of {ACTIVATIONS}, got {self.activation!r}"
            )
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("layer parameters must be finite")


class Network:
    """Ordered dense layers; the last layer's output feeds softmax CE."""

    def __init__(self, layers: list[Layer]):
        if not layers:
            raise ValueError("network needs at least one layer")
        for i in range(1, len(layers)):
            need = layers[i - 1].weights.shape[0]
            got = layers[i].weights.shape[1]
            if need != got:
                raise ValueError(
                    f"layer {i} expects {got} inputs but layer {i - 1} "
                    f"produces {need} outputs"
                )
        self.layers = layers

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[0]

    def clone(self) -> "Network":
        return Network(
            [
                Layer(l.weights.copy(), l.bias.copy(), l.activation)
                for l in self.layers
            ]
        )


def init_network(layer_sizes, activation: str = "relu", seed: int = 0) -> Network:
    """Network with hidden ``activation`` and an identity output layer.

    Weights are uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; biases
    start at zero.  Deterministic in ``seed``.
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ValueError("layer_sizes needs at least input and output dims")
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        bound = 1.0 / np.sqrt(fan_in)
        W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        act = activation if i < len(sizes) - 2 else "identity"
        layers.append(Layer(W, np.zeros(fan_out), act))
    return Network(layers)


class MaskedNetwork:
    """A network plus one binary weight mask per layer (biases unmasked).

    Weights at mask==0 positions are held at exactly zero.  ``version``
    increments on every parameter mutation so stale forward caches can
    be rejected.
    """

    def __init__(self, network: Network, masks: Optional[list[np.ndarray]] = None):
        self.network = network
        if masks is None:
            masks = [np.ones_like(l.weights, dtype=np.uint8) for l in network.layers]
        self.masks = []
        for i, (layer, mask) in enumerate(zip(network.layers, masks)):
            m = np.asarray(mask, dtype=np.uint8)
            if m.shape != layer.weights.shape:
                raise ValueError(
                    f"mask {i} shape {m.shape} does not match weights "
                    f"{layer.weights.shape}"
                )
            self.masks.append(m)
        if len(self.masks) != len(network.layers):
            raise ValueError("need exactly one mask per layer")
        self.version = 0
        self.apply_masks()

    @classmethod
    def dense(cls, network: Network) -> "MaskedNetwork":
        return cls(network)

    def apply_masks(self):
        for layer, mask in zip(self.network.layers, self.masks):
            layer.weights *= mask
        self.version += 1

    def set_masks(self, masks: list[np.ndarray]):
        if len(masks) != len(self.masks):
            raise ValueError("need exactly one mask per layer")
        for i, m in enumerate(masks):
            m = np.asarray(m, dtype=np.uint8)
            if m.shape != self.masks[i].shape:
                raise ValueError(
                    f"mask {i} shape {m.shape} does not match "
                    f"{self.masks[i].shape}"
                )
            self.masks[i] = m.copy()
        self.apply_masks()

    def touch(self):
        """Mark parameters as externally mutated."""
        self.version += 1

    def clone(self) -> "MaskedNetwork":
        return MaskedNetwork(self.network.clone(), [m.copy() for m in self.masks])


@dataclass
class OptimizerState:
    kind: str
    learning_rate: float
    step: int = 0
    m_w: list = field(default_factory=list)
    v_w: list = field(default_factory=list)
    m_b: list = field(default_factory=list)
    v_b: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in OPTIMIZERS:
            raise ValueError(f"kind must be one of {OPTIMIZERS}, got {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")


def init_optimizer(net: MaskedNetwork, kind: str, learning_rate: float) -> OptimizerState:
    opt = OptimizerState(kind=kind, learning_rate=learning_rate)
    if kind == "adam":
        for layer in net.network.layers:
            opt.m_w.append(np.zeros_like(layer.weights))
            opt.v_w.append(np.zeros_like(layer.weights))
            opt.m_b.append(np.zeros_like(layer.bias))
            opt.v_b.append(np.zeros_like(layer.bias))
    return opt


@dataclass
class KDConfig:
    """Distillation loss weights: hidden-state and logit mean-squared
    error terms added to cross-entropy when enabled."""

    enabled: bool = False
    hidden_weight: float = 1.0
    output_weight: float = 1.0

    def __post_init__(self):
        for name in ("hidden_weight", "output_weight"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass
class ForwardCache:
    inputs: np.ndarray
    labels: Optional[np.ndarray]
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]      # post-activation output per layer
    logits: np.ndarray
    probs: np.ndarray
    loss: Optional[float]
    version: int


class EvalResult(NamedTuple):
    accuracy: float
    loss: float


class Gradients(NamedTuple):
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(log_z - shifted[np.arange(len(labels)), labels]))


def forward(net: MaskedNetwork, X, y=None) -> ForwardCache:
    """Run the network, caching every intermediate activation.

    Loss is mean softmax cross-entropy over the batch when labels are
    given, else None.
    """
    X = check_matrix(X)
    if X.shape[1] != net.network.input_dim:
        raise ValueError(
            f"batch has {X.shape[1]} features but the network expects "
            f"{net.network.input_dim}"
        )
    if y is not None:
        y = check_labels(y, X.shape[0])
        if int(y.max()) >= net.network.output_dim:
            raise ValueError(
                f"label {int(y.max())} out of range for "
                f"{net.network.output_dim} outputs"
            )
    a = X
    pre, post = [], []
    for layer in net.network.layers:
        z = a @ layer.weights.T + layer.bias
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        pre.append(z)
        post.append(a)
    logits = post[-1]
    probs = _softmax(logits)
    loss = _cross_entropy(logits, y) if y is not None else None
    return ForwardCache(X, y, pre, post, logits, probs, loss, net.version)


def kd_loss_terms(
    kd: KDConfig, cache: ForwardCache, teacher_cache: ForwardCache
) -> tuple[float, float]:
    """(hidden, output) mean-squared-error penalties, already weighted."""
    n_hidden = len(cache.activations) - 1
    hidden = 0.0
    if n_hidden > 0:
        for a, t in zip(cache.activations[:-1], teacher_cache.activations[:-1]):
            hidden += float(np.mean((a - t) ** 2))
        hidden /= n_hidden
    output = float(np.mean((cache.logits - teacher_cache.logits) ** 2))
    return kd.hidden_weight * hidden, kd.output_weight * output


def backward(
    net: MaskedNetwork,
    cache: ForwardCache,
    kd: Optional[KDConfig] = None,
    teacher_cache: Optional[ForwardCache] = None,
) -> Gradients:
    """Gradients of the batch loss for every weight and bias.

    Includes the distillation penalties when ``kd.enabled``.  Gradients
    at masked-out weights are forced to zero.  Rejects caches produced
    before the parameters last changed.
    """
    if cache.version != net.version:
        raise ValueError(
            f"stale forward cache: parameters are at version {net.version}, "
            f"cache at {cache.version}"
        )
    if cache.labels is None:
        raise ValueError("backward needs a cache computed with labels")
    distill = kd is not None and kd.enabled
    if distill and teacher_cache is None:
        raise ValueError("distillation is enabled but no teacher cache given")

    y = cache.labels
    batch = len(y)
    d_logits = cache.probs.copy()
    d_logits[np.arange(batch), y] -= 1.0
    d_logits /= batch
    if distill:
        d_logits += (
            kd.output_weight
            * 2.0
            * (cache.logits - teacher_cache.logits)
            / cache.logits.size
        )

    layers = net.network.layers
    n_hidden = len(layers) - 1
    grads_w = [None] * len(layers)
    grads_b = [None] * len(layers)
    d_out = d_logits
    for li in range(len(layers) - 1, -1, -1):
        layer = layers[li]
        if distill and li < len(layers) - 1:
            a = cache.activations[li]
            t = teacher_cache.activations[li]
            d_out = d_out + kd.hidden_weight * 2.0 * (a - t) / (n_hidden * a.size)
        if layer.activation == "relu":
            d_z = d_out * (cache.pre_activations[li] > 0.0)
        else:
            d_z = d_out
        a_prev = cache.activations[li - 1] if li > 0 else cache.inputs
        grads_w[li] = (d_z.T @ a_prev) * net.masks[li]
        grads_b[li] = d_z.sum(axis=0)
        if li > 0:
            d_out = d_z @ layer.weights
    return Gradients(grads_w, grads_b)


def optimizer_step(net: MaskedNetwork, grads: Gradients, opt: OptimizerState):
    """Apply one SGD or Adam update in place.

    Aborts (no parameter touched) on a non-finite gradient, naming the
    layer.  Masked weights are re-multiplied by the mask afterwards so
    they stay exactly zero.
    """
    layers = net.network.layers
    if len(grads.weights) != len(layers) or len(grads.biases) != len(layers):
        raise ValueError("gradient count does not match layer count")
    for li, (gw, gb) in enumerate(zip(grads.weights, grads.biases)):
        if gw.shape != layers[li].weights.shape or gb.shape != layers[li].bias.shape:
            raise ValueError(f"gradient shapes for layer {li} do not match")
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise ValueError(f"non-finite gradient in layer {li}; step aborted")

    lr = opt.learning_rate
    if opt.kind == "sgd":
        for li, layer in enumerate(layers):
            layer.weights -= lr * grads.weights[li]
            layer.bias -= lr * grads.biases[li]
    else:
        opt.step += 1
        t = opt.step
        bc1 = 1.0 - ADAM_BETA1**t
        bc2 = 1.0 - ADAM_BETA2**t
        for li, layer in enumerate(layers):
            for param, grad, m, v in (
                (layer.weights, grads.weights[li], opt.m_w[li], opt.v_w[li]),
                (layer.bias, grads.biases[li], opt.m_b[li], opt.v_b[li]),
            ):
                m *= ADAM_BETA1
                m += (1.0 - ADAM_BETA1) * grad
                v *= ADAM_BETA2
                v += (1.0 - ADAM_BETA2) * grad**2
                param -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
    for layer, mask in zip(layers, net.masks):
        layer.weights *= mask
    net.version += 1


def batch_loss(
    net: MaskedNetwork,
    X,
    y,
    kd: Optional[KDConfig] = None,
    teacher: Optional[MaskedNetwork] = None,
) -> float:
    """Total training loss on one batch (cross-entropy plus penalties)."""
    cache = forward(net, X, y)
    total = cache.loss
    if kd is not None and kd.enabled:
        tcache = forward(teacher, X)
        h, o = kd_loss_terms(kd, cache, tcache)
        total += h + o
    return total


def train_one_epoch(
    net: MaskedNetwork,
    data,
    opt: OptimizerState,
    rng: np.random.Generator,
    batch_size: int = 32,
    kd: Optional[KDConfig] = None,
    teacher: Optional[MaskedNetwork] = None,
) -> float:
    """One pass over shuffled mini-batches; returns the mean training loss.

    With distillation enabled the loss per batch is cross-entropy plus
    the weighted hidden-state and logit penalties against ``teacher``,
    which must share the student's architecture.
    """
    if len(data) == 0:
        raise ValueError("dataset is empty")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    distill = kd is not None and kd.enabled
    if distill:
        if teacher is None:
            raise ValueError("distillation is enabled but no teacher given")
        for li, (s, t) in enumerate(
            zip(net.network.layers, teacher.network.layers)
        ):
            if s.weights.shape != t.weights.shape:
                raise ValueError(
                    f"teacher layer {li} shape {t.weights.shape} does not "
                    f"match student {s.weights.shape}"
                )

    order = rng.permutation(len(data))
    total = 0.0
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        Xb, yb = data.inputs[idx], data.labels[idx]
        cache = forward(net, Xb, yb)
        loss = cache.loss
        tcache = None
        if distill:
            tcache = forward(teacher, Xb)
            h, o = kd_loss_terms(kd, cache, tcache)
            loss += h + o
        grads = backward(net, cache, kd, tcache)
        optimizer_step(net, grads, opt)
        total += loss * len(idx)
    return total / len(order)


def evaluate(net: MaskedNetwork, data) -> EvalResult:
    """Accuracy (argmax, ties to the lowest class index) and mean CE loss."""
    if len(data) == 0:
        raise ValueError("dataset is empty")
    cache = forward(net, data.inputs, data.labels)
    preds = np.argmax(cache.logits, axis=1)
    return EvalResult(float(np.mean(preds == data.labels)), cache.loss)


@dataclass
class ModelSnapshot:
    """Exact copy of all trainable state for a later bitwise restore."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    masks: list[np.ndarray]
    optimizer: OptimizerState


def snapshot(net: MaskedNetwork, opt: OptimizerState) -> ModelSnapshot:
    return ModelSnapshot(
        weights=[l.weights.copy() for l in net.network.layers],
        biases=[l.bias.copy() for l in net.network.layers],
        masks=[m.copy() for m in net.masks],
        optimizer=copy.deepcopy(opt),
    )


def restore(net: MaskedNetwork, opt: OptimizerState, snap: ModelSnapshot):
    """Reset net and opt to the snapshot, rejecting shape mismatches."""
    layers = net.network.layers
    if len(snap.weights) != len(layers):
        raise ValueError(
            f"snapshot has {len(snap.weights)} layers, network has {len(layers)}"
        )
    for li, layer in enumerate(layers):
        if snap.weights[li].shape != layer.weights.shape:
            raise ValueError(
                f"snapshot layer {li} shape {snap.weights[li].shape} does "
                f"not match network {layer.weights.shape}"
            )
    if snap.optimizer.kind != opt.kind:
        raise ValueError(
            f"snapshot optimizer {snap.optimizer.kind!r} does not match "
            f"{opt.kind!r}"
        )
    for li, layer in enumerate(layers):
        layer.weights[...] = snap.weights[li]
        layer.bias[...] = snap.biases[li]
        net.masks[li][...] = snap.masks[li]
    opt.learning_rate = snap.optimizer.learning_rate
    opt.step = snap.optimizer.step
    for field_name in ("m_w", "v_w", "m_b", "v_b"):
        src = getattr(snap.optimizer, field_name)
        dst = getattr(opt, field_name)
        for li in range(len(dst)):
            dst[li][...] = src[li]
    net.version += 1
