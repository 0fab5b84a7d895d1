"""Hybrid segment rewards and the masked cross-scene similarity metric."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import (
    ConfigError,
    DegenerateVectorError,
    InvalidSegmentError,
    NoValidPairsError,
    PreconditionError,
    ShapeError,
)
from .generator import GenerationState, SegmentState
from .numcore import as_matrix, cosine

__all__ = [
    "EmbeddingProvider",
    "ProjectionProvider",
    "RewardBreakdown",
    "RewardConfig",
    "CoherenceDetector",
    "Providers",
    "strided_indices",
    "reward_content",
    "reward_clip",
    "reward_artifact",
    "hybrid_reward",
    "SimMask",
    "build_sim_mask",
    "cross_scene_sim",
]


class EmbeddingProvider:
    """A named deterministic map from a frame (tokens x dim) or vector to a fixed-size embedding.

    The base class is the identity map (frames are mean-pooled over tokens).
    """

    name = "identity"

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x.mean(axis=0)
        if x.ndim != 1:
            raise ShapeError(f"cannot embed array of shape {x.shape}")
        return self.embed(x)

    def embed(self, v: np.ndarray) -> np.ndarray:
        return v


class ProjectionProvider(EmbeddingProvider):
    """Coordinates of the input in a fixed orthonormal basis (columns of ``basis``)."""

    def __init__(self, basis, name: str = "projection"):
        self.basis = as_matrix(basis, "basis")
        self.name = name

    def embed(self, v: np.ndarray) -> np.ndarray:
        if v.shape[0] != self.basis.shape[0]:
            raise ShapeError(f"vector of length {v.shape[0]} for basis {self.basis.shape}")
        return v @ self.basis


@dataclass(frozen=True)
class RewardBreakdown:
    content: float
    clip: float
    artifact: int
    total: float

    @classmethod
    def of(cls, content: float, clip: float, artifact: int) -> "RewardBreakdown":
        return cls(content, clip, artifact, content + clip + artifact)

    @classmethod
    def failed(cls) -> "RewardBreakdown":
        return cls(0.0, 0.0, 0, 0.0)


@dataclass(frozen=True)
class RewardConfig:
    e: int = 8  # keyframes per side for the content term
    q: int = 16  # frames for the prompt-alignment term
    tau_art: float = 0.2

    def __post_init__(self):
        if self.e < 1 or self.q < 1:
            raise ConfigError("e and q must be >= 1")


def strided_indices(count: int, m: int) -> np.ndarray:
    """``m`` distinct indices spread uniformly over ``range(count)``, first one at 0."""
    if m > count:
        raise PreconditionError(f"cannot take {m} frames from {count}")
    return (np.arange(m) * count) // m


def _frames(x) -> np.ndarray:
    if isinstance(x, SegmentState):
        return x.frames
    if isinstance(x, GenerationState):
        return x.frames()
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:  # one token per frame
        arr = arr[:, None, :]
    return arr


def reward_content(cur, prev, phi: EmbeddingProvider, e: int) -> float:
    """Mean pairwise cosine between ``e`` keyframes of ``cur`` and ``e`` of the history."""
    cf = _frames(cur)
    pf = _frames(prev)
    if pf.shape[0] == 0:
        raise PreconditionError("content reward needs a non-empty history")
    if e < 1:
        raise PreconditionError("e must be >= 1")
    ce = [phi(cf[i]) for i in strided_indices(cf.shape[0], e)]
    pe = [phi(pf[i]) for i in strided_indices(pf.shape[0], e)]
    return float(np.mean([cosine(c, p) for p in pe for c in ce]))


def reward_clip(prompt, cur, psi: EmbeddingProvider, q: int) -> float:
    """Mean cosine between the prompt embedding and ``q`` uniformly strided frames."""
    cf = _frames(cur)
    if q < 1:
        raise PreconditionError("q must be >= 1")
    target = psi(as_matrix(prompt, "prompt"))
    return float(np.mean([cosine(target, psi(cf[i])) for i in strided_indices(cf.shape[0], q)]))


class CoherenceDetector:
    """Flags an artifact when consecutive frames disagree.

    The mean cosine between consecutive (mean-pooled) frames must reach
    ``tau``; a zero frame counts as cosine 0.
    """

    def __init__(self, tau: float = 0.2):
        self.tau = tau

    def __call__(self, frames: np.ndarray) -> bool:
        """True when an artifact is present."""
        vecs = frames.mean(axis=1)
        if vecs.shape[0] < 2:
            return False
        cos = []
        for a, b in zip(vecs[:-1], vecs[1:]):
            try:
                cos.append(cosine(a, b))
            except DegenerateVectorError:
                cos.append(0.0)
        return float(np.mean(cos)) < self.tau


def reward_artifact(cur, detector: Callable[[np.ndarray], bool]) -> int:
    """1 when the detector sees no artifact, else 0."""
    frames = _frames(cur)
    if not np.all(np.isfinite(frames)):
        raise InvalidSegmentError("segment has non-finite values")
    return 0 if detector(frames) else 1


@dataclass
class Providers:
    phi: EmbeddingProvider  # identity / content embedding
    psi: EmbeddingProvider  # semantic / prompt embedding
    detector: Callable[[np.ndarray], bool]


def hybrid_reward(cur, prev, prompt, providers: Providers, config: RewardConfig) -> RewardBreakdown:
    """Sum of content, prompt-alignment and artifact-absence terms.

    ``e`` and ``q`` are capped at the number of frames available on each side.
    """
    cf = _frames(cur)
    pf = _frames(prev)
    artifact = reward_artifact(cf, providers.detector)
    e = min(config.e, cf.shape[0], pf.shape[0])
    content = reward_content(cf, pf, providers.phi, e)
    clip = reward_clip(prompt, cf, providers.psi, min(config.q, cf.shape[0]))
    return RewardBreakdown.of(content, clip, artifact)


# cross-scene similarity ------------------------------------------------------


@dataclass(frozen=True)
class SimMask:
    mask: np.ndarray  # (F, F) of 0/1
    boundaries: tuple[int, ...]


def _clip_ids(frame_count: int, boundaries) -> np.ndarray:
    b = [int(x) for x in boundaries]
    if not b or b[0] != 0:
        raise ConfigError("clip boundaries must start at 0")
    if any(x >= y for x, y in zip(b, b[1:])) or b[-1] >= frame_count:
        raise ConfigError(f"clip boundaries {b} do not partition [0, {frame_count})")
    ids = np.zeros(frame_count, dtype=np.int64)
    for c, start in enumerate(b):
        ids[start:] = c
    return ids


def build_sim_mask(frame_count: int, boundaries) -> SimMask:
    """``mask[i, j] == 1`` iff frame i belongs to a strictly later clip than frame j.

    ``boundaries`` lists the first frame index of each clip.
    """
    ids = _clip_ids(frame_count, boundaries)
    mask = (ids[:, None] > ids[None, :]).astype(np.float64)
    return SimMask(mask, tuple(int(x) for x in boundaries))


def cross_scene_sim(embeddings, boundaries) -> float:
    """Mean cosine over all (frame, earlier-clip frame) pairs."""
    x = as_matrix(embeddings, "embeddings")
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise DegenerateVectorError("zero embedding row")
    m = build_sim_mask(x.shape[0], boundaries).mask
    n_pairs = m.sum()
    if n_pairs == 0:
        raise NoValidPairsError("need frames from at least two clips")
    xh = x / norms
    return float(((xh @ xh.T) * m).sum() / n_pairs)
