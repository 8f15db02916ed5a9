import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from augkit.errors import DataError, DomainError, MissingIdError
from augkit.scoring_metrics import (DcfConfig, MetricUndefinedError, Trial, compute_eer, compute_min_dcf, cosine,
                                    det_points, format_det_csv, length_normalize, score_trials)

from .oracles import brute_eer, brute_min_dcf, random_score_set, rates_at

seeds = st.integers(0, 2 ** 32 - 1)


class TestCosine:
    def test_identical(self):
        assert cosine([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == pytest.approx(1.0, abs=1e-15)

    def test_orthogonal(self):
        assert cosine([1.0, 0.0], [0.0, 5.0]) == 0.0

    def test_scaled(self):
        a = np.array([0.3, -1.2, 4.0])
        assert cosine(a, 3 * a) == pytest.approx(1.0, abs=1e-15)

    def test_zero(self):
        with pytest.raises(DomainError):
            cosine([0.0, 0.0], [1.0, 0.0])
        with pytest.raises(DomainError):
            length_normalize(np.zeros((2, 3)))

    @given(seed=seeds, k1=st.floats(1e-3, 1e3), k2=st.floats(1e-3, 1e3))
    def test_scale_invariance(self, seed, k1, k2):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=16), rng.normal(size=16)
        assert cosine(k1 * a, k2 * b) == pytest.approx(cosine(a, b), abs=1e-12)


class TestScoreTrials:
    emb = {"a": np.array([1.0, 0.0]), "b": np.array([0.0, 2.0]), "c": np.array([1.0, 1.0])}

    def test_identical(self):
        assert score_trials([Trial("a", "a", True)], self.emb)[0] == pytest.approx(1.0)

    def test_permutation(self):
        trials = [Trial("a", "b", False), Trial("a", "c", False), Trial("b", "c", True)]
        s = score_trials(trials, self.emb)
        assert np.array_equal(score_trials(trials[::-1], self.emb), s[::-1])

    def test_group_of_identical(self):
        emb = dict(self.emb, a2=np.array([3.0, 0.0]), a3=np.array([0.5, 0.0]))
        single = score_trials([Trial("a", "c", True)], emb)
        group = score_trials([Trial("spk", "c", True)], emb, {"spk": ["a", "a2", "a3"]})
        assert group[0] == pytest.approx(single[0], abs=1e-15)

    def test_missing_ids_listed(self):
        with pytest.raises(MissingIdError) as err:
            score_trials([Trial("a", "x", True), Trial("y", "b", False)], self.emb)
        assert set(err.value.ids) == {"x", "y"}


class TestEER:
    def test_perfect(self):
        assert compute_eer([0.9, 0.8, 0.1, 0.2], [True, True, False, False])[0] == 0.0

    def test_identical_scores(self):
        assert compute_eer([0.5] * 6, [True, False] * 3)[0] == pytest.approx(0.5)

    def test_worst(self):
        assert compute_eer([0.1, 0.2, 0.8, 0.9], [True, True, False, False])[0] == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        labels = rng.random(200) < 0.4
        scores = rng.normal(size=200) + labels
        n_t, n_n = labels.sum(), (~labels).sum()
        assert abs(compute_eer(scores, labels)[0] - brute_eer(scores, labels)) <= 0.5 / n_n + 0.5 / n_t

    def test_single_class(self):
        with pytest.raises(MetricUndefinedError):
            compute_eer([0.1, 0.2], [True, True])

    def test_non_finite(self):
        with pytest.raises(DataError):
            compute_eer([0.1, math.nan], [True, False])


class TestMinDCF:
    def test_perfect(self):
        assert compute_min_dcf([0.9, 0.8, 0.1, 0.2], [True, True, False, False])[0] == 0.0

    def test_degenerate_all_equal(self):
        mdcf, thr = compute_min_dcf([0.3] * 10, [True] * 5 + [False] * 5)
        assert mdcf == 1.0 and thr == math.inf

    def test_accept_all_cost(self):
        from augkit.scoring_metrics import dcf_curve
        thr, dcf = dcf_curve([0.3] * 4, [True, False, True, False])
        assert thr[0] == -math.inf and dcf[0] == pytest.approx(9.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_brute_force_exact(self, seed):
        rng = np.random.default_rng(100 + seed)
        labels = rng.random(200) < 0.3
        scores = rng.normal(size=200) + 1.5 * labels
        assert compute_min_dcf(scores, labels)[0] == brute_min_dcf(scores, labels)

    def test_config_validation(self):
        with pytest.raises(DomainError):
            DcfConfig(p_target=0)
        with pytest.raises(DomainError):
            DcfConfig(c_fa=0)

    @pytest.mark.parametrize("p,cm,cf", [(0.01, 1, 1), (0.5, 2, 1), (0.3, 1, 10)])
    def test_other_costs(self, p, cm, cf):
        scores, labels = random_score_set(np.random.default_rng(9), ties=True)
        got = compute_min_dcf(scores, labels, DcfConfig(p, cm, cf))[0]
        assert got == brute_min_dcf(scores, labels, p, cm, cf)


def test_det_points():
    pts = det_points([0.1, 0.2, 0.3, 0.4], [False, True, False, True])
    assert pts == [(0.1, 1.0, 0.0), (0.2, 0.5, 0.0), (0.3, 0.5, 0.5), (0.4, 0.0, 0.5)]
    assert format_det_csv(pts).splitlines()[0] == "threshold,far,frr"


def _integer_set(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, 300))
    labels = rng.random(n) < rng.uniform(0.1, 0.9)
    labels[:2] = [True, False]
    scores = rng.integers(0, 200, n) + 40 * labels
    return scores.astype(float), labels


@given(seed=seeds, which=st.sampled_from(["affine", "cube", "exp", "atan"]))
def test_monotone_invariance(seed, which):
    scores, labels = _integer_set(seed)
    f = {"affine": lambda x: 3 * x - 7, "cube": lambda x: x ** 3 + x, "exp": lambda x: np.exp(x / 50),
         "atan": lambda x: np.arctan((x - 100) / 30)}[which]
    assert compute_eer(f(scores), labels)[0] == compute_eer(scores, labels)[0]
    assert compute_min_dcf(f(scores), labels)[0] == compute_min_dcf(scores, labels)[0]


@given(seed=seeds)
def test_bounds(seed):
    scores, labels = random_score_set(np.random.default_rng(seed), 10, 300, ties=seed % 2 == 0)
    eer = compute_eer(scores, labels)[0]
    mdcf = compute_min_dcf(scores, labels)[0]
    assert 0 <= eer <= 1
    assert 0 <= mdcf <= 1.0


@given(seed=seeds, copies=st.integers(2, 4))
def test_duplication_invariance(seed, copies):
    scores, labels = random_score_set(np.random.default_rng(seed), 10, 200)
    rep = compute_eer(np.tile(scores, copies), np.tile(labels, copies))[0]
    assert rep == pytest.approx(compute_eer(scores, labels)[0], abs=1e-12)


@given(seed=seeds)
def test_min_dcf_below_eer_point(seed):
    scores, labels = random_score_set(np.random.default_rng(seed), 10, 300, ties=seed % 3 == 0)
    _, thr = compute_eer(scores, labels)
    far, frr = rates_at(scores, labels, thr)
    dcf_at_eer = (frr * 0.1 + far * 0.9) / 0.1
    assert compute_min_dcf(scores, labels)[0] <= dcf_at_eer + 1e-12
