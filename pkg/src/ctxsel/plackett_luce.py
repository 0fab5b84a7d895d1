"""Top-K Plackett-Luce selection: sequential sampling without replacement,
exact ranking log-likelihood, and its gradient with respect to the scores."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import BudgetError, CapacityError, DomainError
from .numcore import softmax

__all__ = [
    "RankingSelection",
    "sample_topk",
    "pl_logprob",
    "pl_logprob_grad",
    "enumerate_pl_distribution",
]

# factorial blow-up guard for the brute-force oracle
MAX_ENUM_L = 8
MAX_ENUM_K = 4


@dataclass(frozen=True)
class RankingSelection:
    """An ordered top-K selection and its log-probability under the PL policy."""

    indices: tuple[int, ...]
    n_candidates: int
    logprob: float = 0.0
    step_probs: tuple[float, ...] = field(default=(), compare=False)

    @property
    def k(self) -> int:
        return len(self.indices)

    @property
    def unselected(self) -> frozenset[int]:
        return frozenset(range(self.n_candidates)) - frozenset(self.indices)


def _check_scores(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise DomainError(f"scores must be a non-empty vector, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise DomainError("non-finite score")
    return s


def _check_indices(indices, n: int) -> list[int]:
    idx = [int(i) for i in indices]
    if len(set(idx)) != len(idx):
        raise DomainError(f"duplicate index in selection {idx}")
    for i in idx:
        if not 0 <= i < n:
            raise DomainError(f"index {i} out of range for {n} candidates")
    return idx


def sample_topk(scores, k: int, rng: np.random.Generator) -> RankingSelection:
    """Draw an ordered list of ``k`` distinct indices.

    Each step renormalises ``exp(scores)`` over the candidates still in the
    pool and draws one of them by inverting the CDF with a single uniform from
    ``rng`` (candidates in ascending index order). Exactly ``k`` uniforms are
    consumed per call.
    """
    s = _check_scores(scores)
    n = s.size
    if not 1 <= k <= n:
        raise BudgetError(f"cannot select k={k} of {n} candidates")
    # plain floats: per-call numpy overhead dominates at these sizes
    weights = np.exp(s - s.max()).tolist()
    pool = list(range(n))
    chosen: list[int] = []
    step_probs: list[float] = []
    for _ in range(k):
        total = math.fsum(weights[j] for j in pool)
        u = rng.random() * total
        acc = 0.0
        pos = len(pool) - 1
        for p, j in enumerate(pool):
            acc += weights[j]
            if u < acc:
                pos = p
                break
        pick = pool.pop(pos)
        step_probs.append(weights[pick] / total)
        chosen.append(pick)
    return RankingSelection(
        indices=tuple(chosen),
        n_candidates=n,
        logprob=pl_logprob(s, chosen),
        step_probs=tuple(step_probs),
    )


def pl_logprob(scores, indices) -> float:
    """Log-probability of drawing exactly the ordered list ``indices``.

    The normaliser at step k runs over every token not chosen before step k:
    the selected tokens from position k onward plus all unselected tokens.
    """
    s = _check_scores(scores)
    idx = _check_indices(indices, s.size)
    vals = s.tolist()
    alive = set(range(len(vals)))
    total = 0.0
    for i in idx:
        m = max(vals[j] for j in alive)
        lse = m + math.log(math.fsum(math.exp(vals[j] - m) for j in alive))
        total += vals[i] - lse
        alive.discard(i)
    return total


def pl_logprob_grad(scores, indices) -> np.ndarray:
    """Gradient of :func:`pl_logprob` with respect to every score."""
    s = _check_scores(scores)
    idx = _check_indices(indices, s.size)
    grad = np.zeros_like(s)
    alive = np.ones(s.size, dtype=bool)
    for i in idx:
        pool = np.flatnonzero(alive)
        grad[pool] -= softmax(s[pool])
        grad[i] += 1.0
        alive[i] = False
    return grad


def enumerate_pl_distribution(scores, k: int) -> dict[tuple[int, ...], float]:
    """Exact probability of every ordered k-tuple (brute force, small inputs only)."""
    s = _check_scores(scores)
    n = s.size
    if n > MAX_ENUM_L or k > MAX_ENUM_K:
        raise CapacityError(f"enumeration limited to L<={MAX_ENUM_L}, k<={MAX_ENUM_K}")
    if not 1 <= k <= n:
        raise BudgetError(f"cannot select k={k} of {n} candidates")
    return {
        perm: math.exp(pl_logprob(s, perm))
        for perm in itertools.permutations(range(n), k)
    }
