"""Minimal dense-network engine: MLP forward, exact backprop, Adam, soft updates.

All math is float64. Parameter containers are plain values; every operation
returns fresh arrays instead of mutating its inputs, so networks can be moved
between threads freely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

HIDDEN_ACTIVATIONS = ("relu",)
OUTPUT_ACTIVATIONS = ("identity", "softmax")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_CHECKPOINT_MAGIC = "expalign-net-v1"


@dataclass(frozen=True)
class MlpSpec:
    """Shape and activation description of a fully connected network."""

    layer_sizes: tuple[int, ...]
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("layer_sizes needs at least input and output dims")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be >= 1, got {sizes}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1


@dataclass
class MlpParams:
    """Per-layer dense weight matrices (out x in) and bias vectors."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.weights + self.biases])


@dataclass
class OptimState:
    """Adam accumulators matching an MlpParams layout."""

    learning_rate: float
    m_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_weights: list[np.ndarray]
    v_biases: list[np.ndarray]
    step_count: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    def copy(self) -> "OptimState":
        return OptimState(
            self.learning_rate,
            [a.copy() for a in self.m_weights],
            [a.copy() for a in self.m_biases],
            [a.copy() for a in self.v_weights],
            [a.copy() for a in self.v_biases],
            self.step_count,
            self.beta1,
            self.beta2,
            self.eps,
        )


def init_params(spec: MlpSpec, seed: int) -> MlpParams:
    """Deterministic init: W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        scale = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-scale, scale, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def init_optim(params: MlpParams, learning_rate: float) -> OptimState:
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    return OptimState(
        learning_rate,
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
    )


def _check_input(spec: MlpSpec, x: np.ndarray, batched: bool) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    want = spec.input_dim
    if batched:
        if x.ndim != 2 or x.shape[1] != want:
            raise ValueError(f"expected input shape (batch, {want}), got {x.shape}")
    else:
        if x.shape != (want,):
            raise ValueError(f"expected input of length {want}, got shape {x.shape}")
    return x


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _run_layers(params: MlpParams, spec: MlpSpec, x: np.ndarray):
    """Returns (pre-activations per layer, post-activations incl. input)."""
    acts = [x]
    pres = []
    n = spec.n_layers
    for l in range(n):
        z = acts[-1] @ params.weights[l].T + params.biases[l]
        pres.append(z)
        if l < n - 1:
            acts.append(np.maximum(z, 0.0))
        elif spec.output_activation == "softmax":
            acts.append(_softmax_rows(z))
        else:
            acts.append(z)
    return pres, acts


def forward(params: MlpParams, spec: MlpSpec, x: np.ndarray) -> np.ndarray:
    """Single-vector forward pass."""
    x = _check_input(spec, x, batched=False)
    _, acts = _run_layers(params, spec, x[None, :])
    return acts[-1][0]


def forward_batch(params: MlpParams, spec: MlpSpec, x: np.ndarray) -> np.ndarray:
    """Forward pass on a (batch, input_dim) matrix."""
    x = _check_input(spec, x, batched=True)
    _, acts = _run_layers(params, spec, x)
    return acts[-1]


def forward_logits_batch(params: MlpParams, spec: MlpSpec, x: np.ndarray) -> np.ndarray:
    """Pre-activation of the output layer; needed for stable log-prob math."""
    x = _check_input(spec, x, batched=True)
    pres, _ = _run_layers(params, spec, x)
    return pres[-1]


def backward_batch(
    params: MlpParams,
    spec: MlpSpec,
    x: np.ndarray,
    upstream: np.ndarray,
    at_logits: bool = False,
) -> tuple[MlpParams, np.ndarray]:
    """Reverse-mode gradients for a batch; parameter grads are summed over rows.

    `upstream` is d(loss)/d(output); with `at_logits` it is taken with respect
    to the output layer's pre-activation instead (skips the head's Jacobian).
    Returns (param gradients in MlpParams layout, d(loss)/d(input)).
    """
    x = _check_input(spec, x, batched=True)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (x.shape[0], spec.output_dim):
        raise ValueError(
            f"expected upstream shape {(x.shape[0], spec.output_dim)}, got {upstream.shape}"
        )
    pres, acts = _run_layers(params, spec, x)
    n = spec.n_layers

    if at_logits or spec.output_activation == "identity":
        dz = upstream
    else:  # softmax head: dz = p * (u - sum(u * p))
        p = acts[-1]
        dz = p * (upstream - (upstream * p).sum(axis=1, keepdims=True))

    d_weights: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    d_biases: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for l in range(n - 1, -1, -1):
        d_weights[l] = dz.T @ acts[l]
        d_biases[l] = dz.sum(axis=0)
        da = dz @ params.weights[l]
        if l > 0:
            dz = da * (pres[l - 1] > 0.0)
    return MlpParams(d_weights, d_biases), da


def backward(
    params: MlpParams, spec: MlpSpec, x: np.ndarray, upstream: np.ndarray
) -> tuple[MlpParams, np.ndarray]:
    """Exact reverse-mode gradients of `forward` for one input vector."""
    x = _check_input(spec, x, batched=False)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (spec.output_dim,):
        raise ValueError(f"expected upstream of length {spec.output_dim}, got {upstream.shape}")
    grads, dx = backward_batch(params, spec, x[None, :], upstream[None, :])
    return grads, dx[0]


def step(params: MlpParams, grads: MlpParams, opt: OptimState) -> tuple[MlpParams, OptimState]:
    """One Adam update. Returns fresh params and optimizer state."""
    for l, (gw, gb) in enumerate(zip(grads.weights, grads.biases)):
        if not np.all(np.isfinite(gw)):
            raise ValueError(f"non-finite gradient in layer {l} weights")
        if not np.all(np.isfinite(gb)):
            raise ValueError(f"non-finite gradient in layer {l} biases")
        if gw.shape != params.weights[l].shape or gb.shape != params.biases[l].shape:
            raise ValueError(f"gradient shape mismatch in layer {l}")

    t = opt.step_count + 1
    bc1 = 1.0 - opt.beta1**t
    bc2 = 1.0 - opt.beta2**t
    new_w, new_b = [], []
    m_w, m_b, v_w, v_b = [], [], [], []

    def _update(p, g, m, v):
        m2 = opt.beta1 * m + (1.0 - opt.beta1) * g
        v2 = opt.beta2 * v + (1.0 - opt.beta2) * g * g
        p2 = p - opt.learning_rate * (m2 / bc1) / (np.sqrt(v2 / bc2) + opt.eps)
        return p2, m2, v2

    for l in range(len(params.weights)):
        w2, mw2, vw2 = _update(params.weights[l], grads.weights[l], opt.m_weights[l], opt.v_weights[l])
        b2, mb2, vb2 = _update(params.biases[l], grads.biases[l], opt.m_biases[l], opt.v_biases[l])
        new_w.append(w2)
        new_b.append(b2)
        m_w.append(mw2)
        m_b.append(mb2)
        v_w.append(vw2)
        v_b.append(vb2)

    new_opt = OptimState(opt.learning_rate, m_w, m_b, v_w, v_b, t, opt.beta1, opt.beta2, opt.eps)
    return MlpParams(new_w, new_b), new_opt


def soft_update(target: MlpParams, online: MlpParams, coeff: float) -> MlpParams:
    """target <- (1 - coeff) * target + coeff * online, elementwise."""
    if not 0.0 < coeff <= 1.0:
        raise ValueError("coeff must be in (0, 1]")
    if len(target.weights) != len(online.weights):
        raise ValueError("layer count mismatch")
    new_w, new_b = [], []
    for tw, ow, tb, ob in zip(target.weights, online.weights, target.biases, online.biases):
        if tw.shape != ow.shape or tb.shape != ob.shape:
            raise ValueError("shape mismatch between target and online params")
        new_w.append((1.0 - coeff) * tw + coeff * ow)
        new_b.append((1.0 - coeff) * tb + coeff * ob)
    return MlpParams(new_w, new_b)


def save_checkpoint(path, spec: MlpSpec, params: MlpParams, opt: OptimState | None = None) -> None:
    """Write a network to disk: one JSON header line, then raw little-endian f64.

    Stream order: per-layer W then b; if an optimizer state is attached, the
    first and second moments follow in the same per-layer order. Round-trips
    are bit-exact.
    """
    header = {
        "format": _CHECKPOINT_MAGIC,
        "layer_sizes": list(spec.layer_sizes),
        "hidden_activation": spec.hidden_activation,
        "output_activation": spec.output_activation,
        "has_optimizer": opt is not None,
    }
    if opt is not None:
        header["optimizer"] = {
            "learning_rate": opt.learning_rate,
            "step_count": opt.step_count,
            "beta1": opt.beta1,
            "beta2": opt.beta2,
            "eps": opt.eps,
        }
    chunks = []
    for w, b in zip(params.weights, params.biases):
        chunks.append(w)
        chunks.append(b)
    if opt is not None:
        for group in (opt.m_weights, opt.m_biases, opt.v_weights, opt.v_biases):
            chunks.extend(group)
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in chunks)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)


def load_checkpoint(path) -> tuple[MlpSpec, MlpParams, OptimState | None]:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    header = json.loads(header_line.decode("utf-8"))
    if header.get("format") != _CHECKPOINT_MAGIC:
        raise ValueError(f"not a network checkpoint: {path}")
    spec = MlpSpec(
        tuple(header["layer_sizes"]),
        header["hidden_activation"],
        header["output_activation"],
    )
    flat = np.frombuffer(payload, dtype="<f8")
    pos = 0

    def take(shape):
        nonlocal pos
        n = int(np.prod(shape))
        out = flat[pos : pos + n].reshape(shape).astype(np.float64)
        pos += n
        return out

    shapes = list(zip(spec.layer_sizes[1:], spec.layer_sizes[:-1]))
    weights, biases = [], []
    for out_dim, in_dim in shapes:
        weights.append(take((out_dim, in_dim)))
        biases.append(take((out_dim,)))
    params = MlpParams(weights, biases)

    opt = None
    if header["has_optimizer"]:
        meta = header["optimizer"]
        groups = []
        for _ in range(2):  # m then v
            gw, gb = [], []
            for out_dim, in_dim in shapes:
                gw.append(take((out_dim, in_dim)))
            for out_dim, _ in shapes:
                gb.append(take((out_dim,)))
            groups.append((gw, gb))
        opt = OptimState(
            meta["learning_rate"],
            groups[0][0],
            groups[0][1],
            groups[1][0],
            groups[1][1],
            meta["step_count"],
            meta["beta1"],
            meta["beta2"],
            meta["eps"],
        )
    if pos != flat.size:
        raise ValueError(f"checkpoint payload size mismatch in {path}")
    return spec, params, opt
