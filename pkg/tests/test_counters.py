"""Counter error simulation, profiling, and profile-stability diagnostics."""

import numpy as np
import pytest

from wattcount import (
    CounterModel,
    SynthPattern,
    UnprofiledRegimeError,
    WindowSpec,
    apply_counter,
    bhattacharyya,
    chi_square_independence,
    load_counter_model,
    load_profile,
    observe_counts,
    paired_histograms,
    profile_errors,
    save_counter_model,
    save_profile,
    synth_trace,
    window_mean_pairs,
)

GOLDEN = CounterModel("golden", 2.0)


def _trace(n_windows=4, tau=50, rate=4.0, seed=1):
    return synth_trace(SynthPattern(base_rate=rate), n_windows, WindowSpec(tau_seconds=tau), seed=seed)


class TestForwardModel:
    def test_golden_counter_is_identity(self):
        trace = _trace()
        observed = apply_counter(trace, GOLDEN, seed=3)
        np.testing.assert_array_equal(observed.counts, trace.counts)

    def test_pure_ratio_rounding(self):
        # constant truth 5 at ratio 0.8 observes round(4.0) = 4 on every frame
        model = CounterModel("c", 1.0, ratio_mean=0.8)
        truth = np.full(64, 5)
        out = observe_counts(truth, np.arange(64), model, seed=2)
        np.testing.assert_array_equal(out, np.full(64, 4))

    def test_same_seed_identical(self):
        trace = _trace()
        model = CounterModel("c", 1.0, ratio_std=0.2, offset_std=0.5, miss_floor=0.1)
        a = apply_counter(trace, model, seed=5)
        b = apply_counter(trace, model, seed=5)
        c = apply_counter(trace, model, seed=6)
        np.testing.assert_array_equal(a.counts, b.counts)
        assert not np.array_equal(a.counts, c.counts)

    def test_subset_observation_matches_full_pass(self):
        # observing only sampled frames must reproduce the full trace's values
        trace = _trace()
        model = CounterModel("c", 1.0, ratio_mean=0.9, ratio_std=0.15, miss_floor=0.2)
        full = apply_counter(trace, model, seed=8)
        idx = np.array([0, 3, 11, 60, 199, 3])
        sub = observe_counts(trace.counts[idx], idx, model, seed=8)
        np.testing.assert_array_equal(sub, full.counts[idx])

    def test_outputs_non_negative_integers(self):
        model = CounterModel("c", 1.0, ratio_mean=0.5, offset_std=3.0)
        truth = np.zeros(500, dtype=int)
        out = observe_counts(truth, np.arange(500), model, seed=4)
        assert out.dtype == np.int64
        assert out.min() >= 0

    def test_ratio_moments_large_sample(self):
        model = CounterModel("c", 1.0, ratio_mean=0.85, ratio_std=0.1)
        truth = np.full(200_000, 40)
        out = observe_counts(truth, np.arange(truth.size), model, seed=9)
        # observed/truth per frame ~ Normal(0.85, 0.1) up to rounding
        ratios = out / 40.0
        assert abs(ratios.mean() - 0.85) < 0.002
        assert abs(ratios.std() - 0.1) < 0.002

    def test_miss_floor_thins_counts(self):
        model = CounterModel("c", 1.0, miss_floor=0.25)
        truth = np.full(100_000, 8)
        out = observe_counts(truth, np.arange(truth.size), model, seed=10)
        # kept objects are Binomial(8, 0.75) per frame
        assert abs(out.mean() - 6.0) < 0.02
        assert abs(out.var() - 8 * 0.75 * 0.25) < 0.05

    def test_model_validation(self):
        with pytest.raises(ValueError):
            CounterModel("c", 0.0)
        with pytest.raises(ValueError):
            CounterModel("c", 1.0, ratio_mean=0.0)
        with pytest.raises(ValueError):
            CounterModel("c", 1.0, ratio_std=-0.1)
        with pytest.raises(ValueError):
            CounterModel("c", 1.0, miss_floor=1.5)


class TestProfiling:
    def test_hand_ratio_pairs(self):
        profile = profile_errors([(2.0, 1.6), (4.0, 3.2)], 1.0, min_pairs=1)
        assert list(profile.ratio_samples) == [1.25, 1.25]
        assert profile.ratio_mean == pytest.approx(1.25)
        assert profile.ratio_stdev == 0.0
        assert not profile.offset_usable

    def test_hand_offset_pair(self):
        profile = profile_errors([(0.2, 0.5)], 1.0, min_pairs=1)
        assert list(profile.offset_samples) == pytest.approx([-0.3])
        assert not profile.ratio_usable

    def test_perfect_counter_degenerate_profile(self):
        pairs = [(float(v), float(v)) for v in (2, 3, 4, 0.5, 0.2)]
        profile = profile_errors(pairs, 1.0, min_pairs=1)
        assert profile.ratio_mean == 1.0 and profile.ratio_stdev == 0.0
        assert profile.offset_mean == 0.0 and profile.offset_stdev == 0.0

    def test_zero_observed_pairs_dropped(self):
        profile = profile_errors([(2.0, 0.0), (3.0, 1.5)], 1.0, min_pairs=1)
        assert profile.dropped_pairs == 1
        assert list(profile.ratio_samples) == [2.0]

    def test_min_pairs_enforced(self):
        pairs = [(2.0, 1.8)] * 29
        with pytest.raises(ValueError, match="insufficient pairs"):
            profile_errors(pairs, 1.0)
        profile_errors(pairs + [(2.0, 1.9)], 1.0)  # 30 pairs pass

    def test_moments_recomputable_from_samples(self):
        rng = np.random.default_rng(0)
        pairs = [(m, m * r) for m, r in zip(rng.uniform(2, 9, 40), rng.normal(0.8, 0.05, 40))]
        profile = profile_errors(pairs, 1.0)
        ratios = np.asarray(profile.ratio_samples)
        assert profile.ratio_mean == pytest.approx(ratios.mean())
        assert profile.ratio_stdev == pytest.approx(ratios.std())

    def test_unprofiled_branch_raises(self):
        profile = profile_errors([(2.0, 1.6)], 1.0, min_pairs=1)
        with pytest.raises(UnprofiledRegimeError, match="unprofiled regime"):
            profile.require_branch("offset")
        profile.require_branch("ratio")

    def test_window_mean_pairs(self):
        spec = WindowSpec(tau_seconds=100)
        truth = _trace(n_windows=3, tau=100, seed=2)
        observed = apply_counter(truth, CounterModel("c", 1.0, ratio_mean=0.8), seed=3)
        pairs = window_mean_pairs(truth, observed, spec)
        assert len(pairs) == 3
        for w, (mu, mu_x) in enumerate(pairs):
            assert mu == pytest.approx(truth.window_slice(w, spec).mean())
            assert mu_x == pytest.approx(observed.window_slice(w, spec).mean())


class TestDiagnostics:
    def test_bhattacharyya_hand_values(self):
        p = np.array([0.5, 0.5])
        assert bhattacharyya(p, p) == pytest.approx(1.0)
        assert bhattacharyya(p, np.array([0.9, 0.1])) == pytest.approx(
            np.sqrt(0.45) + np.sqrt(0.05)
        )
        assert bhattacharyya(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_bhattacharyya_symmetric(self):
        rng = np.random.default_rng(3)
        p = rng.dirichlet(np.ones(16))
        q = rng.dirichlet(np.ones(16))
        assert bhattacharyya(p, q) == pytest.approx(bhattacharyya(q, p))
        assert bhattacharyya(p, q) < 1.0

    def test_bhattacharyya_validation(self):
        with pytest.raises(ValueError, match="mismatched bins"):
            bhattacharyya(np.array([1.0]), np.array([0.5, 0.5]))
        with pytest.raises(ValueError, match="sum to 1"):
            bhattacharyya(np.array([0.5, 0.4]), np.array([0.5, 0.5]))

    def test_paired_histograms_share_bins(self):
        rng = np.random.default_rng(4)
        p, q = paired_histograms(rng.normal(1, 0.1, 500), rng.normal(1.05, 0.1, 500))
        assert len(p) == len(q) == 32
        assert p.sum() == pytest.approx(1.0)
        assert q.sum() == pytest.approx(1.0)

    def test_profile_stability_across_segments(self):
        # same counter on two disjoint long segments of one scene: the ratio
        # histograms should overlap strongly
        spec = WindowSpec(tau_seconds=200)
        trace = synth_trace(SynthPattern(base_rate=4.0), 600, spec, seed=6)
        model = CounterModel("c", 1.0, ratio_mean=0.9, ratio_std=0.1)
        observed = apply_counter(trace, model, seed=7)
        pairs = window_mean_pairs(trace, observed, spec)
        first = profile_errors(pairs[:300], 1.0)
        second = profile_errors(pairs[300:], 1.0)
        p, q = paired_histograms(
            np.asarray(first.ratio_samples), np.asarray(second.ratio_samples)
        )
        assert bhattacharyya(p, q) >= 0.85

    def test_chi_square_hand_values(self):
        stat, dof = chi_square_independence(np.array([[10, 20], [30, 60]]))
        assert stat == pytest.approx(0.0)
        assert dof == 1
        stat, dof = chi_square_independence(np.array([[10, 0], [0, 10]]))
        assert stat == pytest.approx(20.0)
        assert dof == 1

    def test_chi_square_matches_reference(self):
        from scipy.stats import chi2_contingency

        table = np.array([[12, 7, 9], [5, 21, 14]])
        stat, dof = chi_square_independence(table)
        ref = chi2_contingency(table, correction=False)
        assert stat == pytest.approx(ref.statistic)
        assert dof == ref.dof

    def test_chi_square_validation(self):
        with pytest.raises(ValueError, match="zero marginal"):
            chi_square_independence(np.array([[0, 0], [1, 2]]))
        with pytest.raises(ValueError, match="2x2"):
            chi_square_independence(np.array([[1, 2]]))


class TestFiles:
    def test_counter_model_round_trip(self, tmp_path):
        model = CounterModel("tiny", 0.25, ratio_mean=0.9, ratio_std=0.1, miss_floor=0.05)
        path = tmp_path / "counter.json"
        save_counter_model(model, path)
        assert load_counter_model(path) == model
        import json

        keys = set(json.loads(path.read_text()))
        assert keys == {
            "counter_id", "energy_per_frame_j", "ratio_mean",
            "ratio_std", "offset_std", "miss_floor",
        }

    def test_profile_round_trip(self, tmp_path):
        profile = profile_errors(
            [(2.0, 1.6), (4.0, 3.9), (0.5, 0.7), (2.0, 0.0)], 1.0, counter_id="c", min_pairs=1
        )
        path = tmp_path / "profile.json"
        save_profile(profile, path)
        loaded = load_profile(path)
        assert loaded.counter_id == "c"
        assert loaded.threshold == 1.0
        assert loaded.dropped_pairs == 1
        np.testing.assert_allclose(loaded.ratio_samples, profile.ratio_samples)
        np.testing.assert_allclose(loaded.offset_samples, profile.offset_samples)
        assert loaded.ratio_mean == pytest.approx(profile.ratio_mean)
