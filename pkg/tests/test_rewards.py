import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctxsel.exceptions import (
    ConfigError,
    DegenerateVectorError,
    InvalidSegmentError,
    NoValidPairsError,
    PreconditionError,
)
from ctxsel.rewards import (
    CoherenceDetector,
    EmbeddingProvider,
    ProjectionProvider,
    Providers,
    RewardBreakdown,
    RewardConfig,
    build_sim_mask,
    cross_scene_sim,
    hybrid_reward,
    reward_artifact,
    reward_clip,
    reward_content,
    strided_indices,
)

ID = EmbeddingProvider()


def naive_sim(x, boundaries):
    clip = []
    b = list(boundaries) + [len(x)]
    for c in range(len(boundaries)):
        clip += [c] * (b[c + 1] - b[c])
    total, count = 0.0, 0
    for i in range(len(x)):
        for j in range(len(x)):
            if clip[i] > clip[j]:
                total += float(np.dot(x[i], x[j]) / (np.linalg.norm(x[i]) * np.linalg.norm(x[j])))
                count += 1
    return total / count


def random_clips(rng, n_clips, max_len=4):
    sizes = rng.integers(1, max_len + 1, size=n_clips)
    return [0] + list(np.cumsum(sizes)[:-1]), int(sizes.sum())


class TestContent:
    def test_identical_frames(self, rng):
        # all-pairs averaging: 1.0 needs every keyframe to share one direction
        f = np.tile(rng.normal(size=5), (4, 1))
        assert reward_content(f, 2.5 * f, ID, 4) == pytest.approx(1.0, abs=1e-12)

    def test_matching_frames_pairwise_mean(self, rng):
        f = rng.normal(size=(4, 5))
        unit = f / np.linalg.norm(f, axis=1, keepdims=True)
        assert reward_content(f, f, ID, 4) == pytest.approx((unit @ unit.T).mean(), abs=1e-14)

    def test_orthogonal(self):
        cur = np.array([[1.0, 0, 0, 0], [2.0, 0, 0, 0]])
        prev = np.array([[0, 0, 1.0, 0], [0, 0, 0, 3.0]])
        assert reward_content(cur, prev, ID, 2) == 0.0

    def test_hand_built(self):
        cur = np.array([[1.0, 0.0], [1.0, 1.0]]) / np.array([[1.0], [math.sqrt(2)]])
        prev = np.array([[1.0, 0.0], [0.0, 1.0]])
        expected = (1 + 0 + math.sqrt(2) / 2 + math.sqrt(2) / 2) / 4
        assert reward_content(cur, prev, ID, 2) == pytest.approx(expected, abs=1e-15)

    def test_empty_history(self):
        with pytest.raises(PreconditionError):
            reward_content(np.ones((2, 3)), np.zeros((0, 3)), ID, 1)

    def test_zero_embedding(self):
        with pytest.raises(DegenerateVectorError):
            reward_content(np.ones((2, 3)), np.zeros((2, 3)), ID, 2)

    def test_too_many_keyframes(self):
        with pytest.raises(PreconditionError):
            reward_content(np.ones((2, 3)), np.ones((5, 3)), ID, 3)

    @given(st.integers(0, 10_000), st.integers(1, 5))
    def test_symmetric_under_swap(self, seed, e):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
        assert reward_content(a, b, ID, e) == pytest.approx(reward_content(b, a, ID, e), abs=1e-14)


class TestClip:
    def test_all_match_prompt(self, rng):
        p = rng.normal(size=(1, 5))
        assert reward_clip(p, np.tile(p, (6, 1)) * 3.0, ID, 6) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert reward_clip([[1.0, 0.0]], np.array([[0.0, 1.0]] * 3), ID, 3) == 0.0

    def test_half(self):
        assert reward_clip([[1.0, 0.0]], np.array([[2.0, 0.0], [0.0, 5.0]]), ID, 2) == pytest.approx(0.5, abs=1e-15)

    def test_projection_provider(self):
        basis = np.eye(4)[:, :2]
        psi = ProjectionProvider(basis)
        frames = np.array([[1.0, 0.0, 7.0, 7.0], [1.0, 0.0, -3.0, 2.0]])
        assert reward_clip([[2.0, 0.0, 0.0, 1.0]], frames, psi, 2) == pytest.approx(1.0, abs=1e-15)


class TestArtifact:
    def test_identical_frames(self, rng):
        v = rng.normal(size=5)
        assert reward_artifact(np.tile(v, (4, 1)), CoherenceDetector(0.2)) == 1

    def test_alternating(self, rng):
        v = rng.normal(size=5)
        frames = np.array([v, -v, v, -v])
        assert reward_artifact(frames, CoherenceDetector(0.2)) == 0

    def test_nan(self):
        frames = np.ones((3, 2))
        frames[1, 0] = np.nan
        with pytest.raises(InvalidSegmentError):
            reward_artifact(frames, CoherenceDetector())


class TestHybrid:
    def test_breakdown_sums(self):
        assert RewardBreakdown.of(1.0, 1.0, 1).total == 3.0
        assert RewardBreakdown.of(0.0, 0.0, 0).total == 0.0

    def test_defaults(self):
        cfg = RewardConfig()
        assert (cfg.e, cfg.q, cfg.tau_art) == (8, 16, 0.2)

    def test_rejects_bad_counts(self):
        with pytest.raises(ConfigError):
            RewardConfig(e=0)

    @given(st.integers(0, 10_000))
    def test_total_bounds(self, seed):
        rng = np.random.default_rng(seed)
        prov = Providers(ID, ID, CoherenceDetector())
        r = hybrid_reward(rng.normal(size=(5, 1, 3)), rng.normal(size=(9, 1, 3)), rng.normal(size=(1, 3)), prov, RewardConfig())
        assert -2.0 <= r.total <= 3.0
        assert r.total == r.content + r.clip + r.artifact
        assert -1 <= r.content <= 1 and -1 <= r.clip <= 1 and r.artifact in (0, 1)

    def test_caps_keyframes_at_available(self, rng):
        prov = Providers(ID, ID, CoherenceDetector())
        r = hybrid_reward(rng.normal(size=(4, 1, 3)), rng.normal(size=(4, 1, 3)), rng.normal(size=(1, 3)), prov, RewardConfig())
        assert math.isfinite(r.total)

    @given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
    def test_scale_invariance(self, seed, c):
        rng = np.random.default_rng(seed)
        cur, prev, p = rng.normal(size=(6, 4)), rng.normal(size=(6, 4)), rng.normal(size=(1, 4))
        assert reward_content(c * cur, prev, ID, 3) == pytest.approx(reward_content(cur, prev, ID, 3), abs=1e-12)
        assert reward_clip(p, c * cur, ID, 3) == pytest.approx(reward_clip(p, cur, ID, 3), abs=1e-12)


def test_strided_indices():
    assert list(strided_indices(8, 4)) == [0, 2, 4, 6]
    assert list(strided_indices(5, 5)) == [0, 1, 2, 3, 4]
    assert list(strided_indices(10, 3)) == [0, 3, 6]


class TestSim:
    def test_identical(self, rng):
        v = rng.normal(size=3)
        assert cross_scene_sim(np.tile(v, (4, 1)), [0, 2]) == pytest.approx(1.0, abs=1e-12)
        assert build_sim_mask(4, [0, 2]).mask.sum() == 4

    def test_orthogonal_clips(self):
        x = np.array([[1.0, 0], [2.0, 0], [0, 1.0], [0, 3.0]])
        assert cross_scene_sim(x, [0, 2]) == 0.0

    def test_three_singletons(self):
        m = build_sim_mask(3, [0, 1, 2]).mask
        assert m.sum() == 3
        assert {(i, j) for i, j in zip(*np.nonzero(m))} == {(1, 0), (2, 0), (2, 1)}

    def test_one_clip(self):
        assert not build_sim_mask(5, [0]).mask.any()
        with pytest.raises(NoValidPairsError):
            cross_scene_sim(np.ones((5, 2)), [0])

    @given(st.integers(1, 6), st.integers(1, 6))
    def test_two_clip_count(self, a, b):
        assert build_sim_mask(a + b, [0, a]).mask.sum() == a * b

    @given(st.integers(1, 6), st.integers(1, 5))
    def test_equal_clip_count(self, n, m):
        mask = build_sim_mask(n * m, [c * m for c in range(n)]).mask
        assert mask.sum() == m * m * n * (n - 1) // 2
        assert not np.diag(mask).any()

    def test_bad_boundaries(self):
        with pytest.raises(ConfigError):
            build_sim_mask(4, [1, 2])
        with pytest.raises(ConfigError):
            build_sim_mask(4, [0, 2, 2])
        with pytest.raises(ConfigError):
            build_sim_mask(4, [0, 4])

    def test_naive_oracle(self, rng):
        for _ in range(20):
            bounds, f = random_clips(rng, int(rng.integers(2, 5)))
            x = rng.normal(size=(f, int(rng.integers(2, 6))))
            assert abs(cross_scene_sim(x, bounds) - naive_sim(x, bounds)) <= 1e-12

    @given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
    def test_scale_invariance(self, seed, c):
        rng = np.random.default_rng(seed)
        bounds, f = random_clips(rng, 3)
        x = rng.normal(size=(f, 4))
        assert cross_scene_sim(c * x, bounds) == pytest.approx(cross_scene_sim(x, bounds), abs=1e-12)

    def test_zero_row(self):
        with pytest.raises(DegenerateVectorError):
            cross_scene_sim(np.array([[1.0, 0], [0, 0]]), [0, 1])
