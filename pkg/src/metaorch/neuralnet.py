"""Minimal feedforward network with hand-written backpropagation.

The trunk is a stack of dense -> ReLU -> dropout blocks (inverted dropout,
so inference needs no rescaling). Two linear heads share the trunk output:
a softmax selection head over agents and an optional sigmoid scalar
confidence head. Everything runs in float64; gradients are exact analytic
derivatives of the forward pass, including through the recorded ReLU and
dropout masks.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field

import numpy as np

from .rng import TAG_DROPOUT, TAG_INIT, substream

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable or incompatible checkpoint data."""


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    hidden_dims: tuple[int, ...] = (128, 64)
    n_agents: int = 3
    dropout_rate: float = 0.0
    confidence_head: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        if self.input_dim <= 0:
            raise ValueError(f"input_dim must be positive, got {self.input_dim}")
        if any(h <= 0 for h in self.hidden_dims):
            raise ValueError(f"hidden dims must be positive, got {self.hidden_dims}")
        if self.n_agents < 2:
            raise ValueError(f"n_agents must be >= 2, got {self.n_agents}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) of every trunk layer."""
        dims = [self.input_dim, *self.hidden_dims]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def trunk_out_dim(self) -> int:
        return self.hidden_dims[-1] if self.hidden_dims else self.input_dim


@dataclass
class Parameters:
    """Weights and biases; W matrices map row vectors (x @ W + b)."""

    config: NetworkConfig
    trunk: list[tuple[np.ndarray, np.ndarray]]
    sel_w: np.ndarray
    sel_b: np.ndarray
    conf_w: np.ndarray | None
    conf_b: np.ndarray | None

    def tensors(self):
        """Yield (name, array) for every parameter tensor."""
        for i, (w, b) in enumerate(self.trunk):
            yield f"trunk_w_{i}", w
            yield f"trunk_b_{i}", b
        yield "sel_w", self.sel_w
        yield "sel_b", self.sel_b
        if self.conf_w is not None:
            yield "conf_w", self.conf_w
            yield "conf_b", self.conf_b

    def copy(self) -> "Parameters":
        return Parameters(
            config=self.config,
            trunk=[(w.copy(), b.copy()) for w, b in self.trunk],
            sel_w=self.sel_w.copy(),
            sel_b=self.sel_b.copy(),
            conf_w=None if self.conf_w is None else self.conf_w.copy(),
            conf_b=None if self.conf_b is None else self.conf_b.copy(),
        )


@dataclass
class ForwardTrace:
    """Cached intermediates of one forward call, consumed by backward()."""

    mode: str
    inputs: list[np.ndarray] = field(default_factory=list)   # input to each trunk layer
    pre_acts: list[np.ndarray] = field(default_factory=list)  # z of each trunk layer
    masks: list[np.ndarray | None] = field(default_factory=list)
    trunk_out: np.ndarray | None = None
    sel_probs: np.ndarray | None = None
    conf: np.ndarray | None = None


def init_parameters(config: NetworkConfig, seed: int) -> Parameters:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    trunk = []
    for i, (fan_in, fan_out) in enumerate(config.layer_dims()):
        g = substream(seed, TAG_INIT, i)
        scale = 1.0 / np.sqrt(fan_in)
        trunk.append((g.uniform(-scale, scale, size=(fan_in, fan_out)), np.zeros(fan_out)))
    t = config.trunk_out_dim
    g = substream(seed, TAG_INIT, len(config.hidden_dims))
    scale = 1.0 / np.sqrt(t)
    sel_w = g.uniform(-scale, scale, size=(t, config.n_agents))
    sel_b = np.zeros(config.n_agents)
    conf_w = conf_b = None
    if config.confidence_head:
        g = substream(seed, TAG_INIT, len(config.hidden_dims) + 1)
        conf_w = g.uniform(-scale, scale, size=(t, 1))
        conf_b = np.zeros(1)
    return Parameters(config, trunk, sel_w, sel_b, conf_w, conf_b)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction stabilization."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def forward(
    params: Parameters,
    batch_inputs: np.ndarray,
    mode: str = "infer",
    dropout_seed: int = 0,
) -> tuple[np.ndarray, np.ndarray | None, ForwardTrace]:
    """Run the network on a (batch, input_dim) matrix.

    Returns (selection probabilities, per-row confidence in (0,1) or None,
    trace). Dropout is applied only in train mode; infer mode is a pure
    function of (params, inputs).
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(batch_inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.config.input_dim:
        raise ValueError(
            f"expected inputs of width {params.config.input_dim}, got shape {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite values in network input")

    trace = ForwardTrace(mode=mode)
    rate = params.config.dropout_rate
    a = x
    for i, (w, b) in enumerate(params.trunk):
        trace.inputs.append(a)
        z = a @ w + b
        trace.pre_acts.append(z)
        a = np.maximum(z, 0.0)
        mask = None
        if mode == "train" and rate > 0.0:
            g = substream(dropout_seed, TAG_DROPOUT, i)
            mask = (g.random(a.shape) >= rate) / (1.0 - rate)
            a = a * mask
        trace.masks.append(mask)
    trace.trunk_out = a

    sel_probs = softmax(a @ params.sel_w + params.sel_b)
    conf = None
    if params.conf_w is not None:
        conf = sigmoid(a @ params.conf_w + params.conf_b)[:, 0]
    trace.sel_probs = sel_probs
    trace.conf = conf
    return sel_probs, conf, trace


def backward(
    params: Parameters,
    trace: ForwardTrace,
    d_sel_logits: np.ndarray,
    d_conf_logit: np.ndarray | None = None,
) -> Parameters:
    """Gradients w.r.t. every parameter, given upstream gradients at the
    two heads' logits. Returned object mirrors Parameters' shapes."""
    if trace.trunk_out is None:
        raise ValueError("trace was not produced by forward()")
    h = trace.trunk_out
    d_sel = np.asarray(d_sel_logits, dtype=np.float64)
    if d_sel.shape != (h.shape[0], params.config.n_agents):
        raise ValueError(
            f"d_selection_logits shape {d_sel.shape} does not match "
            f"batch {h.shape[0]} x {params.config.n_agents}"
        )

    g_sel_w = h.T @ d_sel
    g_sel_b = d_sel.sum(axis=0)
    dh = d_sel @ params.sel_w.T

    g_conf_w = g_conf_b = None
    if params.conf_w is not None:
        if d_conf_logit is None:
            dc = np.zeros((h.shape[0], 1))
        else:
            dc = np.asarray(d_conf_logit, dtype=np.float64).reshape(h.shape[0], 1)
        g_conf_w = h.T @ dc
        g_conf_b = dc.sum(axis=0)
        dh = dh + dc @ params.conf_w.T
    elif d_conf_logit is not None:
        raise ValueError("confidence gradient given but network has no confidence head")

    g_trunk: list[tuple[np.ndarray, np.ndarray]] = [None] * len(params.trunk)
    for i in range(len(params.trunk) - 1, -1, -1):
        w, _ = params.trunk[i]
        mask = trace.masks[i]
        if mask is not None:
            dh = dh * mask
        dz = dh * (trace.pre_acts[i] > 0.0)
        g_trunk[i] = (trace.inputs[i].T @ dz, dz.sum(axis=0))
        dh = dz @ w.T

    return Parameters(params.config, g_trunk, g_sel_w, g_sel_b, g_conf_w, g_conf_b)


def sgd_step(params: Parameters, grads: Parameters, learning_rate: float) -> Parameters:
    """params - lr * grads, elementwise."""
    if learning_rate <= 0:
        raise ValueError(f"learning_rate must be positive, got {learning_rate}")
    for name, g in grads.tensors():
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient in {name}")
    new_trunk = [
        (w - learning_rate * gw, b - learning_rate * gb)
        for (w, b), (gw, gb) in zip(params.trunk, grads.trunk)
    ]
    return Parameters(
        config=params.config,
        trunk=new_trunk,
        sel_w=params.sel_w - learning_rate * grads.sel_w,
        sel_b=params.sel_b - learning_rate * grads.sel_b,
        conf_w=None if params.conf_w is None else params.conf_w - learning_rate * grads.conf_w,
        conf_b=None if params.conf_b is None else params.conf_b - learning_rate * grads.conf_b,
    )


def serialize(params: Parameters) -> bytes:
    """Versioned checkpoint bytes; round-trips bit-exactly."""
    cfg = params.config
    header = {
        "format_version": FORMAT_VERSION,
        "input_dim": cfg.input_dim,
        "hidden_dims": list(cfg.hidden_dims),
        "n_agents": cfg.n_agents,
        "dropout_rate": cfg.dropout_rate,
        "confidence_head": cfg.confidence_head,
    }
    arrays = {name: np.ascontiguousarray(t) for name, t in params.tensors()}
    buf = io.BytesIO()
    np.savez(buf, __header__=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)
    return buf.getvalue()


def deserialize(data: bytes) -> Parameters:
    """Inverse of serialize(); rejects truncated or mismatched data."""
    try:
        with np.load(io.BytesIO(data)) as z:
            arrays = {k: z[k] for k in z.files}
    except (zipfile.BadZipFile, ValueError, OSError, EOFError, KeyError) as e:
        raise CheckpointError(f"unreadable checkpoint: {e}") from e
    if "__header__" not in arrays:
        raise CheckpointError("checkpoint missing header")
    header = json.loads(arrays.pop("__header__").tobytes().decode())
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {header.get('format_version')!r}"
        )
    config = NetworkConfig(
        input_dim=header["input_dim"],
        hidden_dims=tuple(header["hidden_dims"]),
        n_agents=header["n_agents"],
        dropout_rate=header["dropout_rate"],
        confidence_head=header["confidence_head"],
    )
    try:
        trunk = [
            (arrays[f"trunk_w_{i}"], arrays[f"trunk_b_{i}"])
            for i in range(len(config.hidden_dims))
        ]
        params = Parameters(
            config=config,
            trunk=trunk,
            sel_w=arrays["sel_w"],
            sel_b=arrays["sel_b"],
            conf_w=arrays["conf_w"] if config.confidence_head else None,
            conf_b=arrays["conf_b"] if config.confidence_head else None,
        )
    except KeyError as e:
        raise CheckpointError(f"checkpoint missing tensor {e}") from e
    expected = [(fi, fo) for fi, fo in config.layer_dims()]
    for (w, b), (fi, fo) in zip(params.trunk, expected):
        if w.shape != (fi, fo) or b.shape != (fo,):
            raise CheckpointError(f"trunk tensor shape mismatch: {w.shape} vs {(fi, fo)}")
    if params.sel_w.shape != (config.trunk_out_dim, config.n_agents):
        raise CheckpointError("selection head shape mismatch")
    return params


def save(params: Parameters, path) -> None:
    with open(path, "wb") as f:
        f.write(serialize(params))


def load(path) -> Parameters:
    with open(path, "rb") as f:
        return deserialize(f.read())
