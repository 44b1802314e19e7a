"""Bootstrap trial engine: pooling, determinism, recovery, serialization."""
import numpy as np
import pytest

from gazestep.gpd import GpdParams, fit_three_param
from gazestep.ingest import EyeSample, EyeTrace
from gazestep.synth import ObserverProfile, generate_traces
from gazestep.trials import (
    TrialPlan,
    ecdf_of_r2,
    pool_step_lengths,
    read_records,
    run_trials,
    step_lengths_for_trace,
    successful,
    write_records,
)


def profile(obs, k=0.3, sigma=2.0):
    return ObserverProfile(
        observer_id=obs,
        saccade_gpd=GpdParams(theta=0.5, k=k, sigma=sigma),
        fixation_jitter_sigma=0.3,
    )


def trace_with_runs(obs, img, run_lengths):
    """One trace whose saccadic runs have the given sample counts."""
    samples = []
    t = 0.0
    x = 100.0
    for n_run in run_lengths:
        for _ in range(3):
            samples.append(EyeSample(t=t, x=x, y=100.0, fixation_label=True))
            t += 10.0
        for _ in range(n_run):
            x += 7.0
            samples.append(EyeSample(t=t, x=x, y=100.0, fixation_label=False))
            t += 10.0
    for _ in range(3):
        samples.append(EyeSample(t=t, x=x, y=100.0, fixation_label=True))
        t += 10.0
    return EyeTrace(obs, img, 1280, 1024, samples)


class TestPooling:
    def test_all_fixation_trace_gives_empty(self):
        samples = [
            EyeSample(t=i * 10.0, x=5.0, y=5.0, fixation_label=True) for i in range(20)
        ]
        traces = [EyeTrace("a", "img1", 100, 100, samples)]
        pooled = pool_step_lengths(traces, "a", ["img1"], "euclidean")
        assert pooled.size == 0

    def test_concatenates_across_images(self):
        # runs of 4 and 5 saccadic samples: 3 + 4 = 7 step lengths
        traces = [trace_with_runs("a", "img1", [4]), trace_with_runs("a", "img2", [5])]
        pooled = pool_step_lengths(traces, "a", ["img1", "img2"], "euclidean")
        assert pooled.size == 7

    def test_pooled_multiset_equals_union(self):
        traces = generate_traces([profile("a")], 5, seed=1)
        images = [t.image_id for t in traces]
        pooled = pool_step_lengths(traces, "a", images, "euclidean")
        per_image = np.concatenate(
            [step_lengths_for_trace(t, "euclidean") for t in traces]
        )
        assert np.array_equal(np.sort(pooled), np.sort(per_image))

    def test_absent_observer_errors(self):
        traces = [trace_with_runs("a", "img1", [4])]
        with pytest.raises(ValueError, match="absent"):
            pool_step_lengths(traces, "ghost", ["img1"], "euclidean")

    def test_empty_subset_errors(self):
        traces = [trace_with_runs("a", "img1", [4])]
        with pytest.raises(ValueError):
            pool_step_lengths(traces, "a", [], "euclidean")

    def test_hyperbolic_and_euclidean_differ(self):
        traces = generate_traces([profile("a")], 3, seed=2)
        images = [t.image_id for t in traces]
        e = pool_step_lengths(traces, "a", images, "euclidean")
        h = pool_step_lengths(traces, "a", images, "hyperbolic")
        assert e.size == h.size
        assert not np.allclose(e, h)


class TestRunTrials:
    def test_single_trial_full_dataset_matches_direct_fit(self):
        traces = generate_traces([profile("a")], 30, seed=3)
        plan = TrialPlan(n_trials=1, images_per_trial=30, metric_tag="euclidean", seed=9)
        rec = run_trials(traces, plan)[0]
        pooled = pool_step_lengths(traces, "a", sorted({t.image_id for t in traces}), "euclidean")
        direct, _ = fit_three_param(pooled)
        assert rec.params.theta == direct.theta
        assert rec.params.k == pytest.approx(direct.k, abs=1e-9)
        assert rec.params.sigma == pytest.approx(direct.sigma, abs=1e-9)

    def test_same_seed_identical_records(self):
        traces = generate_traces([profile("a"), profile("b", k=0.1, sigma=1.0)], 20, seed=4)
        plan = TrialPlan(n_trials=5, images_per_trial=10, seed=11)
        r1 = run_trials(traces, plan)
        r2 = run_trials(traces, plan)
        assert r1 == r2

    def test_record_count_counts_failures(self):
        traces = generate_traces([profile("a"), profile("b", k=0.1, sigma=1.0)], 12, seed=5)
        plan = TrialPlan(n_trials=7, images_per_trial=4, seed=3)
        records = run_trials(traces, plan)
        assert len(records) == 7 * 2

    def test_recovers_ground_truth_medians(self):
        # image universe large enough that the finite-dataset MLE noise
        # (about 3 standard errors) sits inside the stated tolerances
        truth = {"a": (0.3, 2.0), "b": (-0.2, 1.0)}
        traces = generate_traces(
            [profile(o, k=k, sigma=s) for o, (k, s) in truth.items()], 150, seed=6
        )
        plan = TrialPlan(n_trials=30, images_per_trial=100, seed=21)
        records = run_trials(traces, plan)
        for obs, (k_true, s_true) in truth.items():
            ks = [r.params.k for r in successful(records) if r.observer_id == obs]
            ss = [r.params.sigma for r in successful(records) if r.observer_id == obs]
            assert np.median(ks) == pytest.approx(k_true, abs=0.05)
            assert np.median(ss) == pytest.approx(s_true, abs=0.1)

    def test_theta_variance_negligible(self):
        traces = generate_traces([profile("a", k=0.3, sigma=1.0)], 100, seed=7)
        plan = TrialPlan(n_trials=25, images_per_trial=80, seed=5)
        thetas = [r.params.theta for r in successful(run_trials(traces, plan))]
        assert np.var(thetas) < 1e-6

    def test_more_images_tightens_shape_spread(self):
        traces = generate_traces([profile("a")], 220, seed=8)
        small = run_trials(traces, TrialPlan(n_trials=50, images_per_trial=50, seed=1))
        large = run_trials(traces, TrialPlan(n_trials=50, images_per_trial=200, seed=1))
        iqr = lambda recs: np.subtract(
            *np.percentile([r.params.k for r in successful(recs)], [75, 25])
        )
        assert iqr(large) < iqr(small)

    def test_too_many_images_requested_errors(self):
        traces = generate_traces([profile("a")], 5, seed=9)
        with pytest.raises(ValueError):
            run_trials(traces, TrialPlan(n_trials=1, images_per_trial=6))

    def test_plan_validation(self):
        with pytest.raises(ValueError):
            TrialPlan(n_trials=0, images_per_trial=1)
        with pytest.raises(ValueError):
            TrialPlan(n_trials=1, images_per_trial=0)
        with pytest.raises(ValueError):
            TrialPlan(n_trials=1, images_per_trial=1, metric_tag="taxicab")


class TestEcdf:
    def test_single_record(self):
        traces = generate_traces([profile("a")], 10, seed=10)
        records = run_trials(traces, TrialPlan(n_trials=1, images_per_trial=10))
        ecdf = ecdf_of_r2(records, "a")
        assert len(ecdf) == 1
        assert ecdf[0][1] == 1.0

    def test_two_values(self):
        from gazestep.gpd import GofStats
        from gazestep.trials import TrialRecord

        def rec(i, r2):
            return TrialRecord(
                trial_index=i, observer_id="a", metric_tag="euclidean",
                images_per_trial=1, params=GpdParams(0.0, 0.1, 1.0),
                gof=GofStats(r_squared_adj=r2, n=100), n_steps=100,
            )

        ecdf = ecdf_of_r2([rec(0, 0.4), rec(1, 0.2)], "a")
        assert ecdf == [(0.2, 0.5), (0.4, 1.0)]

    def test_matches_independent_sort_and_rank(self):
        traces = generate_traces([profile("a")], 40, seed=11)
        records = run_trials(traces, TrialPlan(n_trials=40, images_per_trial=10, seed=2))
        good = successful(records)
        ecdf = ecdf_of_r2(records, "a")
        vals = sorted(r.gof.r_squared_adj for r in good)
        expected = [(v, (i + 1) / len(vals)) for i, v in enumerate(vals)]
        assert ecdf == expected

    def test_no_records_errors(self):
        with pytest.raises(ValueError):
            ecdf_of_r2([], "a")


class TestSerialization:
    def test_jsonl_roundtrip_bitwise(self, tmp_path):
        traces = generate_traces([profile("a"), profile("b", k=-0.2, sigma=1.0)], 15, seed=12)
        records = run_trials(traces, TrialPlan(n_trials=4, images_per_trial=8, seed=13))
        path = tmp_path / "trials.jsonl"
        write_records(path, records, {"seed": 13})
        header, back = read_records(path)
        assert header["config"]["seed"] == 13
        assert back == records

    def test_rerun_writes_identical_bytes(self, tmp_path):
        traces = generate_traces([profile("a")], 10, seed=14)
        records = run_trials(traces, TrialPlan(n_trials=2, images_per_trial=5, seed=1))
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_records(p1, records, {"seed": 1})
        write_records(p2, records, {"seed": 1})
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_wrong_schema(self, tmp_path):
        p = tmp_path / "bogus.jsonl"
        p.write_text('{"schema":"other","version":9}\n', encoding="utf-8")
        with pytest.raises(ValueError, match="trials"):
            read_records(p)
