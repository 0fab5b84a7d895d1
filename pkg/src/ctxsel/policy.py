"""Context-scoring network.

History token features attend to the prompt tokens through ``n_cross``
single-head cross-attention blocks (history rows are the queries, prompt
rows supply keys and values, residual connection), then go through
``n_linear`` linear layers (tanh between them) down to one scalar score per
token. Nothing couples two history rows, so the map is permutation
equivariant over tokens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, ConsistencyError, ShapeError
from .numcore import GradTape, Var, as_matrix

__all__ = [
    "PolicyConfig",
    "PolicyParams",
    "init_params",
    "score_context",
    "record_forward",
    "score_context_backward",
]


@dataclass(frozen=True)
class PolicyConfig:
    dim: int = 16
    n_cross: int = 1
    n_linear: int = 2

    def __post_init__(self):
        if self.dim < 1 or self.n_cross < 1 or self.n_linear < 1:
            raise ConfigError(f"invalid policy config {self}")


@dataclass
class PolicyParams:
    config: PolicyConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        d = self.config.dim
        shapes: dict[str, tuple[int, ...]] = {}
        for b in range(self.config.n_cross):
            for w in ("wq", "wk", "wv", "wo"):
                shapes[f"cross{b}.{w}"] = (d, d)
        for j in range(self.config.n_linear):
            out = 1 if j == self.config.n_linear - 1 else d
            shapes[f"linear{j}.weight"] = (d, out)
            shapes[f"linear{j}.bias"] = (out,)
        return shapes

    def validate(self) -> None:
        for name, shape in self.expected_shapes().items():
            if name not in self.tensors:
                raise ShapeError(f"missing parameter {name}")
            t = self.tensors[name]
            if t.shape != shape:
                raise ShapeError(f"{name} has shape {t.shape}, expected {shape}")
            if not np.all(np.isfinite(t)):
                raise ShapeError(f"{name} has non-finite entries")


def init_params(config: PolicyConfig, rng: np.random.Generator) -> PolicyParams:
    """Gaussian init with std 1/sqrt(dim); the final score layer starts at zero
    so the initial policy is uniform over rankings."""
    params = PolicyParams(config)
    std = 1.0 / math.sqrt(config.dim)
    last = f"linear{config.n_linear - 1}"
    for name, shape in params.expected_shapes().items():
        if name.startswith(last) or name.endswith(".bias"):
            params.tensors[name] = np.zeros(shape)
        else:
            params.tensors[name] = rng.normal(0.0, std, size=shape)
    return params


def _inputs(params: PolicyParams, history, prompt) -> tuple[np.ndarray, np.ndarray]:
    d = params.config.dim
    h = as_matrix(history, "history")
    p = as_matrix(prompt, "prompt")
    if h.shape[0] < 1:
        raise ShapeError("history has no tokens")
    if h.shape[1] != d or p.shape[1] != d:
        raise ShapeError(
            f"history {h.shape} / prompt {p.shape} inconsistent with model dim {d}"
        )
    return h, p


class PolicyTape(GradTape):
    """A tape that remembers which inputs it was recorded on."""

    def __init__(self, history: np.ndarray, prompt: np.ndarray):
        super().__init__()
        self.history = history
        self.prompt = prompt
        self.output: Var | None = None


def record_forward(params: PolicyParams, history, prompt) -> tuple[PolicyTape, Var]:
    """Run the forward pass on a fresh tape; returns the tape and the (L, 1) score node."""
    params.validate()
    h, p = _inputs(params, history, prompt)
    cfg = params.config
    tape = PolicyTape(h, p)
    w = {name: tape.param(name, params.tensors[name]) for name in params.expected_shapes()}
    z = tape.constant(h)
    prm = tape.constant(p)
    inv_sqrt_d = 1.0 / math.sqrt(cfg.dim)
    for b in range(cfg.n_cross):
        q = tape.matmul(z, w[f"cross{b}.wq"])
        k = tape.matmul(prm, w[f"cross{b}.wk"])
        v = tape.matmul(prm, w[f"cross{b}.wv"])
        a = tape.softmax_rows(tape.scale(tape.matmul_t(q, k), inv_sqrt_d))
        z = tape.add(z, tape.matmul(tape.matmul(a, v), w[f"cross{b}.wo"]))
    for j in range(cfg.n_linear):
        z = tape.add(tape.matmul(z, w[f"linear{j}.weight"]), w[f"linear{j}.bias"])
        if j < cfg.n_linear - 1:
            z = tape.tanh(z)
    tape.output = z
    return tape, z


def score_context(params: PolicyParams, history, prompt) -> np.ndarray:
    """One score per history row."""
    _, out = record_forward(params, history, prompt)
    return out.value[:, 0].copy()


def score_context_backward(
    params: PolicyParams, history, prompt, upstream, tape: PolicyTape | None = None
) -> dict[str, np.ndarray]:
    """Gradients of ``sum(upstream * scores)`` for every tensor in ``params``.

    If ``tape`` is given it must have been recorded on the same inputs; a
    fresh forward pass is recorded otherwise. Tensors the forward pass never
    touches get zero gradients.
    """
    h, p = _inputs(params, history, prompt)
    if tape is None:
        tape, out = record_forward(params, h, p)
    else:
        if not (
            tape.history.shape == h.shape
            and tape.prompt.shape == p.shape
            and np.array_equal(tape.history, h)
            and np.array_equal(tape.prompt, p)
        ):
            raise ConsistencyError("tape was recorded on different inputs")
        out = tape.output
    up = np.asarray(upstream, dtype=np.float64).reshape(-1)
    if up.shape[0] != h.shape[0]:
        raise ConsistencyError(f"upstream has {up.shape[0]} entries for {h.shape[0]} tokens")
    grads = tape.backward(out, up[:, None])
    return {name: grads.get(name, np.zeros_like(t)) for name, t in params.tensors.items()}
