"""Dense encoder/classifier network with hand-written reverse mode and Adam.

The network is ``f = h o phi``: an encoder ``phi`` mapping inputs to the
embedding space and a classifier head ``h`` mapping embeddings to logits.
Weights are stored as ``(out, in)`` so a layer computes ``x @ W.T + b``.
All arithmetic is float64.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .exceptions import ShapeError, ValidationError

ACTIVATIONS = ("relu", "tanh", "identity")


@dataclass
class Dense:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(f"bias shape {self.bias.shape} does not match weight {self.weight.shape}")

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]


@dataclass
class ModelParams:
    encoder: list[Dense]
    classifier: list[Dense]

    def __post_init__(self):
        layers = self.layers
        if not self.encoder or not self.classifier:
            raise ShapeError("encoder and classifier need at least one layer each")
        for a, b in zip(layers[:-1], layers[1:]):
            if a.n_out != b.n_in:
                raise ShapeError(f"layer widths do not chain: {a.n_out} -> {b.n_in}")

    @property
    def layers(self) -> list[Dense]:
        return list(self.encoder) + list(self.classifier)

    @property
    def input_dim(self) -> int:
        return self.encoder[0].n_in

    @property
    def embedding_dim(self) -> int:
        return self.encoder[-1].n_out

    @property
    def n_classes(self) -> int:
        return self.classifier[-1].n_out

    def arrays(self) -> list[np.ndarray]:
        """Parameter arrays in canonical order (W, b per layer, encoder first)."""
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "ModelParams":
        arrays = list(arrays)
        if len(arrays) != 2 * len(self.layers):
            raise ShapeError("wrong number of parameter arrays")
        for a, b in zip(arrays, self.arrays()):
            if np.shape(a) != b.shape:
                raise ShapeError(f"parameter shape {np.shape(a)} != {b.shape}")
        it = iter(arrays)
        rebuilt = [Dense(next(it), next(it), layer.activation) for layer in self.layers]
        n_enc = len(self.encoder)
        return ModelParams(rebuilt[:n_enc], rebuilt[n_enc:])

    def copy(self) -> "ModelParams":
        return self.with_arrays([a.copy() for a in self.arrays()])

    def zeros_like(self) -> "ModelParams":
        return self.with_arrays([np.zeros_like(a) for a in self.arrays()])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def from_flat(self, vec: np.ndarray) -> "ModelParams":
        arrays, pos = [], 0
        for a in self.arrays():
            arrays.append(np.asarray(vec[pos:pos + a.size], dtype=np.float64).reshape(a.shape))
            pos += a.size
        if pos != len(vec):
            raise ShapeError("flat vector length does not match parameter count")
        return self.with_arrays(arrays)

    def __add__(self, other: "ModelParams") -> "ModelParams":
        return self.with_arrays([a + b for a, b in zip(self.arrays(), other.arrays())])


def init_model(
    input_dim: int,
    encoder_widths: Sequence[int],
    n_classes: int,
    classifier_hidden: Sequence[int] = (),
    activation: str = "relu",
    embedding_activation: str | None = None,
    seed=None,
) -> ModelParams:
    """He-initialised network ``input_dim -> *encoder_widths -> [*classifier_hidden] -> n_classes``.

    The last encoder width is the embedding dimension. ``embedding_activation``
    defaults to ``activation``; the output layer is always linear.
    """
    rng = np.random.default_rng(seed)
    if not encoder_widths:
        raise ValidationError("encoder needs at least one layer")
    emb_act = activation if embedding_activation is None else embedding_activation

    def dense(n_in, n_out, act):
        scale = np.sqrt(2.0 / n_in) if act == "relu" else np.sqrt(1.0 / n_in)
        return Dense(rng.normal(0.0, scale, size=(n_out, n_in)), np.zeros(n_out), act)

    widths = [input_dim, *encoder_widths]
    encoder = []
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        encoder.append(dense(a, b, emb_act if i == len(widths) - 2 else activation))
    widths = [encoder_widths[-1], *classifier_hidden, n_classes]
    classifier = []
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        classifier.append(dense(a, b, "identity" if i == len(widths) - 2 else activation))
    return ModelParams(encoder, classifier)


def _act(name, x):
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "tanh":
        return np.tanh(x)
    return x


def _act_grad(name, pre, post, upstream):
    if name == "relu":
        return upstream * (pre > 0.0)
    if name == "tanh":
        return upstream * (1.0 - post * post)
    return upstream


@dataclass
class ForwardCache:
    """Layer inputs, pre-activations and outputs saved for :func:`backward`.

    ``has_encoder`` is False when only the classifier head was run.
    """

    inputs: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)
    has_encoder: bool = True


def _run(layers, x, cache):
    for layer in layers:
        z = x @ layer.weight.T + layer.bias
        y = _act(layer.activation, z)
        cache.inputs.append(x)
        cache.pre.append(z)
        cache.post.append(y)
        x = y
    return x


def _as_batch(x, width, what):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise ShapeError(f"{what} has shape {x.shape}, expected (n, {width})")
    return x


def forward(model: ModelParams, batch) -> tuple[np.ndarray, np.ndarray, ForwardCache]:
    """Return ``(embeddings, logits, cache)`` for an ``(n, d)`` batch."""
    x = _as_batch(batch, model.input_dim, "batch")
    cache = ForwardCache()
    emb = _run(model.encoder, x, cache)
    logits = _run(model.classifier, emb, cache)
    return emb, logits, cache


def classifier_forward(model: ModelParams, z) -> tuple[np.ndarray, ForwardCache]:
    z = _as_batch(z, model.embedding_dim, "embeddings")
    cache = ForwardCache(has_encoder=False)
    return _run(model.classifier, z, cache), cache


def classify_from_embedding(model: ModelParams, z) -> np.ndarray:
    """Logits of the classifier head applied directly to embeddings."""
    return classifier_forward(model, z)[0]


def softmax(logits) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def predict(model: ModelParams, x) -> np.ndarray:
    return forward(model, x)[1].argmax(axis=1)


def cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross entropy and its gradient with respect to the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} != ({n},)")
    if n == 0:
        raise ValidationError("cross entropy of an empty batch")
    if labels.dtype.kind not in "iu" or labels.min() < 0 or labels.max() >= k:
        raise ValidationError(f"labels must be integers in [0, {k})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_norm - shifted[rows, labels]))
    grad = np.exp(shifted - log_norm[:, None])
    grad[rows, labels] -= 1.0
    return loss, grad / n


def _back(layers, cache, offset, upstream, grads):
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        j = offset + i
        dz = _act_grad(layer.activation, cache.pre[j], cache.post[j], upstream)
        grads[i] = (dz.T @ cache.inputs[j], dz.sum(axis=0))
        upstream = dz @ layer.weight
    return upstream


def backward(model: ModelParams, cache: ForwardCache, dloss_dlogits=None, dloss_dembeddings=None) -> ModelParams:
    """Parameter gradient given upstream gradients at the logits and/or the embeddings.

    Either upstream gradient may be None (treated as zero). Contributions
    entering at the embeddings are added to the gradient flowing back from
    the classifier before descending into the encoder.
    """
    n_enc, n_cls = len(model.encoder), len(model.classifier)
    expected = n_cls + (n_enc if cache.has_encoder else 0)
    if len(cache.pre) != expected:
        raise ShapeError("cache does not belong to this model")
    off = n_enc if cache.has_encoder else 0
    n = cache.inputs[off].shape[0]
    for layer, j in zip(model.classifier, range(off, off + n_cls)):
        if cache.pre[j].shape != (n, layer.n_out):
            raise ShapeError("stale cache: shapes do not match the model")

    cls_grads = [None] * n_cls
    if dloss_dlogits is None:
        cls_grads = [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in model.classifier]
        d_emb = np.zeros((n, model.embedding_dim))
    else:
        dl = np.asarray(dloss_dlogits, dtype=np.float64)
        if dl.shape != (n, model.n_classes):
            raise ShapeError(f"dloss_dlogits shape {dl.shape} != {(n, model.n_classes)}")
        d_emb = _back(model.classifier, cache, off, dl, cls_grads)

    enc_grads = [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in model.encoder]
    if dloss_dembeddings is not None:
        if not cache.has_encoder:
            raise ShapeError("embedding gradient given for a classifier-only cache")
        de = np.asarray(dloss_dembeddings, dtype=np.float64)
        if de.shape != d_emb.shape:
            raise ShapeError(f"dloss_dembeddings shape {de.shape} != {d_emb.shape}")
        d_emb = d_emb + de
    if cache.has_encoder:
        enc_grads = [None] * n_enc
        _back(model.encoder, cache, 0, d_emb, enc_grads)

    arrays = [a for pair in enc_grads + cls_grads for a in pair]
    return model.with_arrays(arrays)


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_init(params: ModelParams, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8) -> AdamState:
    zeros = [np.zeros_like(a) for a in params.arrays()]
    return AdamState(zeros, [z.copy() for z in zeros], 0, learning_rate, beta1, beta2, epsilon)


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update. Inputs are not mutated."""
    p_arr, g_arr = params.arrays(), grads.arrays()
    if len(p_arr) != len(g_arr) or len(p_arr) != len(state.first_moment):
        raise ShapeError("params, grads and optimizer state do not match")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    m_new, v_new, p_new = [], [], []
    for p, g, m, v in zip(p_arr, g_arr, state.first_moment, state.second_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"shape mismatch {p.shape} / {g.shape} / {m.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p_new.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
        m_new.append(m)
        v_new.append(v)
    return params.with_arrays(p_new), replace(state, first_moment=m_new, second_moment=v_new, step_count=t)
