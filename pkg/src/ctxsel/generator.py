"""Toy autoregressive segment generator with a per-timestep KV cache.

Segments of ``n`` frames (``h*w`` tokens each) are produced one at a time.
Each segment starts from Gaussian noise and is refined over ``T`` steps::

    x <- alpha[j] * G(x, t_j; selected K/V at layer j, prompt) + sigma[j] * eps

where layer ``j`` of the cache holds keys computed for timestep ``t_j``.
Attention inside ``G`` only ever sees the selected history rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, EmptyContextError, InvalidSegmentError, SequencingError, ShapeError
from .numcore import as_matrix, attention
from .plackett_luce import RankingSelection

__all__ = [
    "Geometry",
    "NoiseSchedule",
    "KVCache",
    "SegmentState",
    "GenerationState",
    "ToyGenerator",
    "denoise_segment",
    "append_segment",
]


@dataclass(frozen=True)
class Geometry:
    n: int = 4  # frames per segment
    h: int = 1
    w: int = 1
    dim: int = 16

    def __post_init__(self):
        if min(self.n, self.h, self.w, self.dim) < 1:
            raise ConfigError(f"invalid geometry {self}")

    @property
    def tokens_per_frame(self) -> int:
        return self.h * self.w

    @property
    def tokens_per_segment(self) -> int:
        return self.n * self.h * self.w


@dataclass(frozen=True)
class NoiseSchedule:
    """Coefficients in application order; entry ``j`` produces the state after step ``j``."""

    timesteps: tuple[float, ...] = (1.0, 2.0 / 3.0, 1.0 / 3.0)
    alphas: tuple[float, ...] = (0.5, 0.8, 1.0)
    sigmas: tuple[float, ...] = (0.6, 0.3, 0.0)

    def __post_init__(self):
        T = len(self.timesteps)
        if T == 0 or len(self.alphas) != T or len(self.sigmas) != T:
            raise ConfigError("schedule lengths differ")
        if any(not 0.0 <= c <= 1.0 for c in (*self.alphas, *self.sigmas)):
            raise ConfigError("schedule coefficients must lie in [0, 1]")
        if self.sigmas[-1] != 0.0:
            raise ConfigError("final step must be noise-free")

    @property
    def T(self) -> int:
        return len(self.timesteps)


@dataclass
class KVCache:
    """Keys/values of every history token, one layer per denoise timestep."""

    keys: list[np.ndarray]
    values: list[np.ndarray]
    meta: list[tuple[int, int, int]] = field(default_factory=list)  # (segment, frame, spatial)

    @classmethod
    def empty(cls, n_layers: int, dim: int) -> "KVCache":
        return cls(
            keys=[np.zeros((0, dim)) for _ in range(n_layers)],
            values=[np.zeros((0, dim)) for _ in range(n_layers)],
        )

    @property
    def length(self) -> int:
        return self.keys[0].shape[0]

    def copy(self) -> "KVCache":
        return KVCache([k.copy() for k in self.keys], [v.copy() for v in self.values], list(self.meta))


@dataclass
class SegmentState:
    frames: np.ndarray  # (n, h*w, dim)
    index: int
    prompt_id: int | str | None = None

    def tokens(self) -> np.ndarray:
        return self.frames.reshape(-1, self.frames.shape[-1])

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.frames)):
            raise InvalidSegmentError(f"segment {self.index} has non-finite values")


@dataclass
class GenerationState:
    geometry: Geometry
    cache: KVCache
    segments: list[SegmentState] = field(default_factory=list)
    prompts: list[np.ndarray] = field(default_factory=list)

    @property
    def history_length(self) -> int:
        return self.cache.length

    def history_features(self) -> np.ndarray:
        """Per-token features: value rows of the final-timestep cache layer."""
        return self.cache.values[-1]

    def frames(self) -> np.ndarray:
        """All past frames stacked, shape (n_frames, h*w, dim)."""
        g = self.geometry
        if not self.segments:
            return np.zeros((0, g.tokens_per_frame, g.dim))
        return np.concatenate([s.frames for s in self.segments], axis=0)

    def snapshot(self) -> "GenerationState":
        return GenerationState(self.geometry, self.cache.copy(), list(self.segments), list(self.prompts))


def _fixed_vectors(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    v = rng.normal(size=(count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


class ToyGenerator:
    """Fixed (never trained) few-step generator ``G``.

    Each output token is ``(1 - blend) * mix @ attn + blend * prompt_term``,
    with ``attn`` the attention of a query built from the noisy token, the
    prompt, a timestep code and a frame position code over the selected keys
    and values. ``mix`` must keep ``(1 - blend) * ||mix||_2 <= 1`` so the map
    stays bounded by the value and prompt norms.

    ``key_rows`` logs the number of key rows of every attention call.
    """

    def __init__(
        self,
        geometry: Geometry,
        schedule: NoiseSchedule,
        *,
        seed: int = 0,
        blend: float = 0.35,
        query_noise_gain: float = 0.3,
        key_gain: float = 2.0,
        mix: np.ndarray | None = None,
    ):
        d = geometry.dim
        if not 0.0 <= blend <= 1.0:
            raise ConfigError("blend must lie in [0, 1]")
        self.geometry = geometry
        self.schedule = schedule
        self.blend = blend
        self.key_gain = key_gain
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6E6]))
        s = 1.0 / math.sqrt(d)
        self.w_noisy = rng.normal(0.0, s * query_noise_gain, size=(d, d))
        self.w_prompt = rng.normal(0.0, s, size=(d, d))
        self.w_keys = [rng.normal(0.0, s, size=(d, d)) for _ in range(schedule.T)]
        self.time_codes = _fixed_vectors(rng, schedule.T, d)
        self.pos_codes = _fixed_vectors(rng, max(geometry.n, 1), d)
        self.mix = np.eye(d) if mix is None else as_matrix(mix, "mix")
        if self.mix.shape != (d, d):
            raise ShapeError(f"mix must be {d}x{d}")
        if (1.0 - blend) * np.linalg.norm(self.mix, 2) > 1.0 + 1e-12:
            raise ConfigError("(1 - blend) * ||mix|| exceeds 1")
        self.key_rows: list[int] = []

    # cache construction -------------------------------------------------
    def layer_for_step(self, j: int) -> int:
        return j

    def kv_for_tokens(self, tokens: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Per-layer keys and values for clean tokens (values shared across layers)."""
        norms = np.maximum(np.linalg.norm(tokens, axis=1, keepdims=True), 1e-12)
        unit = tokens / norms
        keys = [self.key_gain * unit @ wk for wk in self.w_keys]
        values = [tokens.copy() for _ in self.w_keys]
        return keys, values

    # the map G ----------------------------------------------------------
    def step(self, noisy: np.ndarray, j: int, keys: np.ndarray, values: np.ndarray, prompt) -> np.ndarray:
        """Apply ``G`` to a (n, h*w, dim) noisy segment at step ``j``."""
        g = self.geometry
        noisy = np.asarray(noisy, dtype=np.float64)
        if noisy.shape != (g.n, g.tokens_per_frame, g.dim):
            raise ShapeError(f"noisy segment has shape {noisy.shape}")
        keys = np.asarray(keys, dtype=np.float64)
        if keys.ndim != 2 or keys.shape[0] == 0:
            raise EmptyContextError("generator step with zero selected tokens")
        p = as_matrix(prompt, "prompt").mean(axis=0)
        flat = noisy.reshape(-1, g.dim)
        pos = np.repeat(self.pos_codes[: g.n], g.tokens_per_frame, axis=0)
        q = flat @ self.w_noisy + p @ self.w_prompt + self.time_codes[j] + pos
        self.key_rows.append(keys.shape[0])
        ctx = attention(q, keys, values, g.dim)
        out = (1.0 - self.blend) * ctx @ self.mix.T + self.blend * p
        return out.reshape(noisy.shape)


def toy_generator_step(generator: ToyGenerator, noisy: SegmentState, j: int, selected_kv, prompt) -> SegmentState:
    keys, values = selected_kv
    return SegmentState(generator.step(noisy.frames, j, keys, values, prompt), noisy.index, noisy.prompt_id)


def _selected_rows(state: GenerationState, selection) -> np.ndarray | None:
    L = state.history_length
    if selection is None:
        return None
    idx = selection.indices if isinstance(selection, RankingSelection) else tuple(selection)
    if L > 0 and len(idx) == 0:
        raise EmptyContextError("empty selection with non-empty history")
    if len(set(idx)) != len(idx) or any(not 0 <= i < L for i in idx):
        raise ShapeError(f"selection {idx} invalid for history of {L} tokens")
    # attention ignores order; sorting makes the gather independent of it
    return np.sort(np.asarray(idx, dtype=np.int64))


def denoise_segment(
    state: GenerationState,
    selection,
    prompt,
    generator: ToyGenerator,
    rng: np.random.Generator | None,
    *,
    prompt_id=None,
) -> SegmentState:
    """Generate the next segment.

    ``selection`` is a :class:`RankingSelection`, an index sequence, or
    ``None`` for unrestricted attention over the whole history. With an empty
    history the prompt rows act as the only context. ``rng=None`` disables
    all noise (zero initial state and zero step noise).
    """
    g = state.geometry
    sched = generator.schedule
    rows = _selected_rows(state, selection)
    p = as_matrix(prompt, "prompt")
    shape = (g.n, g.tokens_per_frame, g.dim)
    x = rng.standard_normal(shape) if rng is not None else np.zeros(shape)
    for j in range(sched.T):
        if state.history_length == 0:
            keys = generator.key_gain * p / np.maximum(np.linalg.norm(p, axis=1, keepdims=True), 1e-12)
            values = p
        else:
            layer = generator.layer_for_step(j)
            keys = state.cache.keys[layer]
            values = state.cache.values[layer]
            if rows is not None:
                keys = keys[rows]
                values = values[rows]
        out = generator.step(x, j, keys, values, p)
        eps = rng.standard_normal(shape) if rng is not None else 0.0
        x = sched.alphas[j] * out + sched.sigmas[j] * eps
    seg = SegmentState(x, len(state.segments), prompt_id)
    seg.check_finite()
    return seg


def new_state(geometry: Geometry, schedule: NoiseSchedule) -> GenerationState:
    return GenerationState(geometry, KVCache.empty(schedule.T, geometry.dim))


def append_segment(state: GenerationState, segment: SegmentState, generator: ToyGenerator, prompt=None) -> GenerationState:
    """Return a new state with ``segment`` committed and the cache extended at every layer."""
    g = state.geometry
    if segment.index != len(state.segments):
        raise SequencingError(f"expected segment {len(state.segments)}, got {segment.index}")
    if segment.frames.shape != (g.n, g.tokens_per_frame, g.dim):
        raise ShapeError(f"segment has shape {segment.frames.shape}")
    segment.check_finite()
    tokens = segment.tokens()
    keys, values = generator.kv_for_tokens(tokens)
    cache = KVCache(
        keys=[np.vstack([a, b]) for a, b in zip(state.cache.keys, keys)],
        values=[np.vstack([a, b]) for a, b in zip(state.cache.values, values)],
        meta=state.cache.meta
        + [(segment.index, f, s) for f in range(g.n) for s in range(g.tokens_per_frame)],
    )
    prompts = list(state.prompts)
    prompts.append(None if prompt is None else as_matrix(prompt, "prompt"))
    return GenerationState(g, cache, state.segments + [segment], prompts)
