"""Synthetic multi-scene environment with closed-form embeddings and a brute-force oracle.

The model space is split into three orthogonal subspaces:

* identity  (read by the content embedding ``phi``),
* semantic  (read by the prompt embedding ``psi``; prompts live here),
* nuisance  (read by neither).

Scene 0 is a labelled layout of SUBJECT tokens (the shared identity vector),
SCENE_BG tokens (the scene-0 prompt direction plus a nuisance texture) and
DISTRACTOR tokens (large nuisance vectors). The generator's output mix leaks
nuisance content into the identity and semantic subspaces, so attending to
distractors degrades both cosine rewards.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .exceptions import CapacityError, ConfigError
from .generator import (
    GenerationState,
    Geometry,
    NoiseSchedule,
    SegmentState,
    ToyGenerator,
    append_segment,
    denoise_segment,
    new_state,
)
from .rewards import CoherenceDetector, Providers, ProjectionProvider, RewardConfig, hybrid_reward

__all__ = [
    "Role",
    "EnvSpec",
    "SyntheticEnv",
    "build_env",
    "oracle_best_selection",
    "subset_rewards",
    "PromptSetSpec",
    "EventPromptSet",
    "generate_eps",
    "prompt_embedding",
]

# oracle enumeration guard
MAX_ORACLE_L = 12
MAX_ORACLE_K = 4


class Role(str, Enum):
    SUBJECT = "subject"
    SCENE_BG = "scene_bg"
    DISTRACTOR = "distractor"
    GENERATED = "generated"


@dataclass(frozen=True)
class EnvSpec:
    seed: int = 0
    geometry: Geometry = field(default_factory=lambda: Geometry(n=8, h=1, w=1, dim=16))
    schedule: NoiseSchedule = field(default_factory=NoiseSchedule)
    n_scenes: int = 4
    id_dim: int = 2
    sem_dim: int = 4
    n_subject: int = 3
    n_background: int = 3
    n_distractor: int = 2
    token_noise: float = 0.05
    bg_semantic: float = 1.0
    bg_texture: float = 0.3
    distractor_norm: float = 3.0
    blend: float = 0.25
    leak: float = 0.5
    key_gain: float = 2.0
    query_noise_gain: float = 0.3
    shuffle_layout: bool = True

    def __post_init__(self):
        g = self.geometry
        if g.dim < 2 * (self.id_dim + self.sem_dim):
            raise ConfigError(
                f"dim {g.dim} < 2 * (identity {self.id_dim} + semantic {self.sem_dim})"
            )
        if self.n_subject < 1:
            raise ConfigError("scene 0 needs at least one subject token")
        if self.n_subject + self.n_background + self.n_distractor != g.tokens_per_segment:
            raise ConfigError(
                "role counts must add up to the tokens of one segment "
                f"({g.tokens_per_segment})"
            )
        if self.n_scenes < 1:
            raise ConfigError("n_scenes must be >= 1")


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


@dataclass
class SyntheticEnv:
    spec: EnvSpec
    identity_basis: np.ndarray
    semantic_basis: np.ndarray
    nuisance_basis: np.ndarray
    identity: np.ndarray
    prompts: np.ndarray  # (n_scenes, dim)
    backgrounds: np.ndarray  # (n_scenes, dim)
    scene0_tokens: np.ndarray  # (tokens_per_segment, dim)
    roles: tuple[Role, ...]
    generator: ToyGenerator
    providers: Providers

    @property
    def geometry(self) -> Geometry:
        return self.spec.geometry

    def prompt(self, scene: int) -> np.ndarray:
        return self.prompts[scene][None, :]

    def initial_state(self) -> GenerationState:
        """History holding the labelled scene-0 segment (stands in for the prompt-only first scene)."""
        g = self.geometry
        seg = SegmentState(self.scene0_tokens.reshape(g.n, g.tokens_per_frame, g.dim), 0, 0)
        state = new_state(g, self.spec.schedule)
        return append_segment(state, seg, self.generator, self.prompt(0))

    def token_roles(self, state: GenerationState) -> list[Role]:
        return list(self.roles) + [Role.GENERATED] * (state.history_length - len(self.roles))

    def subject_indices(self) -> tuple[int, ...]:
        return tuple(i for i, r in enumerate(self.roles) if r is Role.SUBJECT)


def build_env(spec: EnvSpec | None = None) -> SyntheticEnv:
    spec = spec or EnvSpec()
    g = spec.geometry
    d = g.dim
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0xE5]))
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    a, b = spec.id_dim, spec.id_dim + spec.sem_dim
    id_basis, sem_basis, nui_basis = q[:, :a], q[:, a:b], q[:, b:]

    identity = id_basis @ _unit(rng.normal(size=a))
    if spec.n_scenes <= spec.sem_dim:
        coords, _ = np.linalg.qr(rng.normal(size=(spec.sem_dim, spec.sem_dim)))
        coords = coords[:, : spec.n_scenes].T
    else:
        coords = np.array([_unit(rng.normal(size=spec.sem_dim)) for _ in range(spec.n_scenes)])
    prompts = coords @ sem_basis.T
    backgrounds = np.array(
        [nui_basis @ _unit(rng.normal(size=d - b)) for _ in range(spec.n_scenes)]
    )

    roles = (
        [Role.SUBJECT] * spec.n_subject
        + [Role.SCENE_BG] * spec.n_background
        + [Role.DISTRACTOR] * spec.n_distractor
    )
    if spec.shuffle_layout:
        roles = [roles[i] for i in rng.permutation(len(roles))]
    tokens = np.zeros((len(roles), d))
    for i, role in enumerate(roles):
        if role is Role.SUBJECT:
            tokens[i] = identity
        elif role is Role.SCENE_BG:
            tokens[i] = spec.bg_semantic * prompts[0] + spec.bg_texture * backgrounds[0]
        else:
            tokens[i] = spec.distractor_norm * (nui_basis @ _unit(rng.normal(size=d - b)))
    tokens += spec.token_noise * rng.normal(size=tokens.shape)

    # nuisance -> (identity + semantic) leakage with unit spectral norm
    leak = q[:, :b] @ rng.normal(size=(b, d - b)) @ nui_basis.T
    leak /= np.linalg.norm(leak, 2)
    mix = np.eye(d) + spec.leak * leak
    generator = ToyGenerator(
        g,
        spec.schedule,
        seed=spec.seed,
        blend=spec.blend,
        query_noise_gain=spec.query_noise_gain,
        key_gain=spec.key_gain,
        mix=mix,
    )
    providers = Providers(
        phi=ProjectionProvider(id_basis, "identity"),
        psi=ProjectionProvider(sem_basis, "semantic"),
        detector=CoherenceDetector(),
    )
    return SyntheticEnv(
        spec=spec,
        identity_basis=id_basis,
        semantic_basis=sem_basis,
        nuisance_basis=nui_basis,
        identity=identity,
        prompts=prompts,
        backgrounds=backgrounds,
        scene0_tokens=tokens,
        roles=tuple(roles),
        generator=generator,
        providers=providers,
    )


def subset_rewards(
    env: SyntheticEnv,
    state: GenerationState,
    prompt,
    k: int,
    reward_config: RewardConfig | None = None,
) -> dict[tuple[int, ...], float]:
    """Noise-free total reward of every size-k subset, in lexicographic order."""
    L = state.history_length
    if L > MAX_ORACLE_L or k > MAX_ORACLE_K:
        raise CapacityError(f"oracle limited to L<={MAX_ORACLE_L}, k<={MAX_ORACLE_K}")
    if not 1 <= k <= L:
        raise CapacityError(f"cannot select k={k} of {L}")
    cfg = reward_config or RewardConfig()
    out = {}
    for combo in itertools.combinations(range(L), k):
        seg = denoise_segment(state, combo, prompt, env.generator, None)
        out[combo] = hybrid_reward(seg, state, prompt, env.providers, cfg).total
    return out


def oracle_best_selection(env, state, prompt, k, reward_config=None) -> tuple[tuple[int, ...], float]:
    """Exhaustive argmax of the noise-free reward; ties go to the lexicographically first subset."""
    best, best_r = None, -np.inf
    for combo, r in subset_rewards(env, state, prompt, k, reward_config).items():
        if r > best_r:
            best, best_r = combo, r
    return best, float(best_r)


# Event Prompt Sets ---------------------------------------------------------------

IDENTITIES = (
    "A man", "A woman", "A boy", "A girl", "An old man", "An old woman",
    "A firefighter", "A chef", "A doctor", "A student", "A painter", "A sailor",
)
ACTIONS = (
    "reading a book", "walking a dog", "riding a bicycle", "drinking coffee",
    "playing a violin", "talking on a phone", "waving hello", "tying shoelaces",
    "laughing loudly", "carrying groceries", "opening an umbrella", "taking a photo",
    "stretching arms", "writing a letter", "eating a sandwich", "looking at a map",
)
_PLACES = (
    "a library", "a beach", "a train station", "a forest trail", "a city square",
    "a kitchen", "a rooftop", "a museum hall", "a market street", "a lakeside dock",
    "a snowy field", "a desert road", "a classroom", "a garden", "a harbor",
    "a parking lot", "an office", "a bridge", "a subway car", "a farm",
    "a stadium", "a playground", "a bakery", "a laundromat", "a hospital corridor",
    "a mountain cabin", "a vineyard", "a greenhouse", "an airport gate", "a bookstore",
)
BACKGROUNDS = tuple(
    f"in {place} {time}" for place in _PLACES for time in ("at dawn", "at noon", "at night")
)


@dataclass(frozen=True)
class PromptSetSpec:
    identities: tuple[str, ...] = IDENTITIES
    actions: tuple[str, ...] = ACTIONS
    backgrounds: tuple[str, ...] = BACKGROUNDS
    set_size: int = 4
    dim: int = 16

    def __post_init__(self):
        if self.set_size < 1 or self.set_size > len(self.actions) * len(self.backgrounds):
            raise ConfigError("set_size exceeds the number of distinct (action, background) pairs")
        if not self.identities:
            raise ConfigError("empty identity pool")


@dataclass(frozen=True)
class EventPromptSet:
    identity_id: int
    triples: tuple[tuple[int, int, int], ...]  # (identity, action, background) indices
    prompts: tuple[str, ...]
    embeddings: np.ndarray  # (set_size, dim)


def prompt_embedding(identity: int, action: int, background: int, dim: int) -> np.ndarray:
    """Deterministic unit vector seeded by a hash of the index triple."""
    digest = hashlib.sha256(f"{identity}/{action}/{background}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    return _unit(rng.normal(size=dim))


def generate_eps(spec: PromptSetSpec, count: int, rng: np.random.Generator) -> list[EventPromptSet]:
    """``count`` sets, each one identity with ``set_size`` distinct (action, background) pairs."""
    n_a, n_b = len(spec.actions), len(spec.backgrounds)
    out = []
    for _ in range(count):
        h = int(rng.integers(len(spec.identities)))
        flat = rng.choice(n_a * n_b, size=spec.set_size, replace=False)
        triples = tuple((h, int(f) // n_b, int(f) % n_b) for f in flat)
        prompts = tuple(
            f"{spec.identities[h]} {spec.actions[a]} {spec.backgrounds[b]}" for _, a, b in triples
        )
        emb = np.array([prompt_embedding(*t, spec.dim) for t in triples])
        out.append(EventPromptSet(h, triples, prompts, emb))
    return out
