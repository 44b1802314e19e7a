"""Linear SVM trainer and the identification protocol."""
import numpy as np
import pytest

from gazestep.classify import (
    EvalConfig,
    SweepJob,
    evaluate,
    objective,
    sweep,
    train_ovr,
)
from gazestep.features import common_grid, embed_pdf, select_top_variance
from gazestep.gpd import GofStats, GpdParams
from gazestep.trials import TrialRecord


def two_cluster_examples(rng, margin=4.0, n=50):
    pos = rng.normal(size=(n, 2)) * 0.3 + [margin, margin]
    neg = rng.normal(size=(n, 2)) * 0.3 - [margin, margin]
    return [(x, "pos") for x in pos] + [(x, "neg") for x in neg]


def synthetic_dataset(observer_params, n_trials, noise, seed, images_per_trial=50):
    """Records plus feature vectors for per-observer (k, sigma) clusters.

    ``noise`` is the per-trial spread of the shape estimate; the scale
    estimate jitters proportionally, mimicking fit noise.
    """
    rng = np.random.default_rng(seed)
    param_map = {}
    records = []
    for t in range(n_trials):
        for obs, (k, s) in observer_params.items():
            p = GpdParams(
                theta=0.002,
                k=k + rng.normal(0.0, noise),
                sigma=s * (1.0 + rng.normal(0.0, noise)),
            )
            param_map[(t, obs)] = p
            records.append(
                TrialRecord(
                    trial_index=t, observer_id=obs, metric_tag="euclidean",
                    images_per_trial=images_per_trial, params=p,
                    gof=GofStats(r_squared_adj=0.99, n=1000), n_steps=1000,
                )
            )
    _, _, grid = common_grid(list(param_map.values()))
    vectors = [embed_pdf(p, grid, source=key) for key, p in param_map.items()]
    return records, vectors


# dimensionless disc-metric scale; window spans taper with the shape so no
# single observer's window edge dominates the variance profile
FIVE_OBSERVERS = {
    "o1": (0.05, 0.0248),
    "o2": (0.35, 0.0137),
    "o3": (0.65, 0.0071),
    "o4": (0.95, 0.0034),
    "o5": (1.25, 0.0015),
}


class TestTrain:
    def test_separable_training_accuracy(self):
        rng = np.random.default_rng(1)
        examples = two_cluster_examples(rng)
        model = train_ovr(examples, "pos", lam=0.01, seed=2)
        correct = sum(
            (model.decision(x) > 0) == (lab == "pos") for x, lab in examples
        )
        assert correct == len(examples)

    def test_label_flip_negates_decisions(self):
        rng = np.random.default_rng(3)
        examples = two_cluster_examples(rng)
        m_pos = train_ovr(examples, "pos", lam=0.01, seed=4)
        m_neg = train_ovr(examples, "neg", lam=0.01, seed=4)
        for x, _ in examples[:20]:
            assert m_neg.decision(x) == pytest.approx(-m_pos.decision(x), abs=1e-3)

    def test_objective_near_grid_search_optimum(self):
        rng = np.random.default_rng(5)
        examples = two_cluster_examples(rng, margin=1.5, n=20)
        lam = 0.1
        model = train_ovr(examples, "pos", lam=lam, seed=6)
        xs = np.array([x for x, _ in examples])
        ys = np.array([1.0 if lab == "pos" else -1.0 for _, lab in examples])
        n_pos = int(np.sum(ys > 0))
        cw = np.where(ys > 0, len(ys) / (2 * n_pos), len(ys) / (2 * (len(ys) - n_pos)))

        def grid_objective(w1, w2, b):
            hinge = np.maximum(0.0, 1.0 - ys * (xs @ [w1, w2] + b))
            return 0.5 * lam * (w1 * w1 + w2 * w2) + float(np.mean(cw * hinge))

        center, width = np.zeros(3), 2.0
        best = np.inf
        for _ in range(4):  # coarse-to-fine refinement
            axes = [np.linspace(c - width, c + width, 21) for c in center]
            for w1 in axes[0]:
                for w2 in axes[1]:
                    for b in axes[2]:
                        val = grid_objective(w1, w2, b)
                        if val < best:
                            best, center = val, np.array([w1, w2, b])
            width /= 5.0
        assert objective(model, examples) <= best * 1.01

    def test_single_class_errors(self):
        examples = [(np.ones(3), "a"), (np.zeros(3), "a")]
        with pytest.raises(ValueError):
            train_ovr(examples, "a", lam=0.1, seed=0)
        with pytest.raises(ValueError):
            train_ovr(examples, "b", lam=0.1, seed=0)

    def test_deterministic(self):
        rng = np.random.default_rng(7)
        examples = two_cluster_examples(rng)
        m1 = train_ovr(examples, "pos", lam=0.05, seed=8)
        m2 = train_ovr(examples, "pos", lam=0.05, seed=8)
        assert np.array_equal(m1.weights, m2.weights)
        assert m1.bias == m2.bias

    def test_feature_scaling_equivariance(self):
        rng = np.random.default_rng(9)
        examples = two_cluster_examples(rng, margin=2.0)
        c = 7.0
        scaled = [(x * c, lab) for x, lab in examples]
        m1 = train_ovr(examples, "pos", lam=0.02, seed=10)
        m2 = train_ovr(scaled, "pos", lam=0.02 * c * c, seed=10)
        for x, _ in examples[:30]:
            d1, d2 = m1.decision(x), m2.decision(x * c)
            assert d2 == pytest.approx(d1, abs=1e-6 * (1 + abs(d1)))
            assert (d1 > 0) == (d2 > 0)


class TestEvaluate:
    def test_separated_observers_recognized(self):
        records, vectors = synthetic_dataset(FIVE_OBSERVERS, 80, noise=0.02, seed=1)
        sel = select_top_variance(vectors, 20)
        reports = evaluate(
            records, vectors, sel, EvalConfig(m_train=20, n_eval=500, repeats=3, seed=2)
        )
        assert len(reports) == 5
        for rep in reports:
            assert rep.mean_recognition_rate >= 0.99

    def test_mean_equals_mean_of_repeats(self):
        records, vectors = synthetic_dataset(FIVE_OBSERVERS, 40, noise=0.05, seed=3)
        sel = select_top_variance(vectors, 10)
        reports = evaluate(
            records, vectors, sel, EvalConfig(m_train=10, n_eval=200, repeats=7, seed=4)
        )
        for rep in reports:
            assert rep.mean_recognition_rate == pytest.approx(
                float(np.mean(rep.per_repeat_rates)), abs=1e-12
            )
            assert len(rep.per_repeat_rates) == 7
            assert all(0.0 <= r <= 1.0 for r in rep.per_repeat_rates)

    def test_noise_features_weighted_training_is_chance(self):
        observers = {f"o{i:02d}": (0.2 + 0.001 * i, 1.0) for i in range(15)}
        records, _ = synthetic_dataset(observers, 40, noise=0.0, seed=5)
        rng = np.random.default_rng(6)
        vectors = []
        for r in records:
            from gazestep.features import FeatureVector

            vectors.append(
                FeatureVector(
                    values=rng.normal(size=200) ** 2,
                    grid_lo=0.0, grid_hi=1.0,
                    source=(r.trial_index, r.observer_id),
                )
            )
        sel = select_top_variance(vectors, 20)
        reports = evaluate(
            records, vectors, sel,
            EvalConfig(m_train=10, n_eval=2000, repeats=5, seed=7),
        )
        rates = [r.mean_recognition_rate for r in reports]
        # balanced class weights keep the classifier away from the
        # always-negative 14/15 prior; results hover around chance
        assert 0.3 <= float(np.mean(rates)) <= 0.9
        assert float(np.mean(rates)) < 14.0 / 15.0 - 0.02

    def test_noise_features_unweighted_training_hits_prior(self):
        # plain hinge degenerates into the always-negative classifier,
        # scoring the 14/15 negative-class prior
        observers = {f"o{i:02d}": (0.2 + 0.001 * i, 1.0) for i in range(15)}
        records, _ = synthetic_dataset(observers, 40, noise=0.0, seed=8)
        rng = np.random.default_rng(9)
        from gazestep.features import FeatureVector

        vectors = [
            FeatureVector(
                values=rng.normal(size=200) ** 2,
                grid_lo=0.0, grid_hi=1.0,
                source=(r.trial_index, r.observer_id),
            )
            for r in records
        ]
        sel = select_top_variance(vectors, 20)
        # strong regularization pins w near zero so the unweighted bias
        # settles at the majority vote, the cleanest prior baseline
        reports = evaluate(
            records, vectors, sel,
            EvalConfig(m_train=10, n_eval=5000, repeats=5, seed=10,
                       class_weighted=False, lam=1.0),
        )
        prior = 14.0 / 15.0
        for rep in reports:
            assert rep.mean_recognition_rate == pytest.approx(prior, abs=0.02)

    def test_single_repeat_reproducible(self):
        records, vectors = synthetic_dataset(FIVE_OBSERVERS, 40, noise=0.05, seed=11)
        sel = select_top_variance(vectors, 10)
        cfg = EvalConfig(m_train=10, n_eval=100, repeats=1, seed=12)
        r1 = evaluate(records, vectors, sel, cfg)
        r2 = evaluate(records, vectors, sel, cfg)
        for a, b in zip(r1, r2):
            assert a.per_repeat_rates == b.per_repeat_rates
            assert a.mean_recognition_rate == b.mean_recognition_rate

    def test_insufficient_trials_errors(self):
        records, vectors = synthetic_dataset(FIVE_OBSERVERS, 10, noise=0.05, seed=13)
        sel = select_top_variance(vectors, 10)
        with pytest.raises(ValueError, match="training"):
            evaluate(records, vectors, sel, EvalConfig(m_train=50, n_eval=10, repeats=1))
        with pytest.raises(ValueError, match="disjoint"):
            evaluate(records, vectors, sel, EvalConfig(m_train=10, n_eval=10, repeats=1))

    def test_reports_carry_config_echo(self):
        records, vectors = synthetic_dataset(FIVE_OBSERVERS, 30, noise=0.05, seed=14)
        sel = select_top_variance(vectors, 15)
        reports = evaluate(
            records, vectors, sel, EvalConfig(m_train=5, n_eval=50, repeats=2, seed=15)
        )
        echo = reports[0].config
        assert echo["m_train"] == 5
        assert echo["k_features"] == 15
        assert echo["n_eval"] == 50
        assert echo["images_per_trial"] == 50
        assert echo["metric_tag"] == "euclidean"


class TestSweep:
    def test_single_job_matches_evaluate(self):
        records, vectors = synthetic_dataset(FIVE_OBSERVERS, 40, noise=0.05, seed=16)
        cfg = EvalConfig(m_train=10, n_eval=100, repeats=2, seed=17)
        sel = select_top_variance(vectors, 10)
        direct = evaluate(records, vectors, sel, cfg)
        result = sweep(
            [SweepJob(records=tuple(records), vectors=tuple(vectors), k_features=10,
                      config=cfg, label="only")]
        )
        assert not result.errors
        by_obs = {r.observer_id: r for _, reps in result.reports for r in reps}
        for rep in direct:
            assert by_obs[rep.observer_id].per_repeat_rates == rep.per_repeat_rates
        assert len(result.rows) == 5 * 2  # observers x repeats

    def test_distinct_keys_for_distinct_configs(self):
        records, vectors = synthetic_dataset(FIVE_OBSERVERS, 40, noise=0.05, seed=18)
        jobs = [
            SweepJob(records=tuple(records), vectors=tuple(vectors), k_features=k,
                     config=EvalConfig(m_train=10, n_eval=50, repeats=1, seed=19),
                     label=f"K={k}")
            for k in (10, 20)
        ]
        result = sweep(jobs)
        labels = {row["label"] for row in result.rows}
        assert labels == {"K=10", "K=20"}
        ks = {row["k_features"] for row in result.rows}
        assert ks == {10, 20}

    def test_failing_job_recorded_run_continues(self):
        records, vectors = synthetic_dataset(FIVE_OBSERVERS, 20, noise=0.05, seed=20)
        jobs = [
            SweepJob(records=tuple(records), vectors=tuple(vectors), k_features=10,
                     config=EvalConfig(m_train=500, n_eval=50, repeats=1), label="bad"),
            SweepJob(records=tuple(records), vectors=tuple(vectors), k_features=10,
                     config=EvalConfig(m_train=5, n_eval=50, repeats=1), label="good"),
        ]
        result = sweep(jobs)
        assert len(result.errors) == 1 and result.errors[0][0] == "bad"
        assert {row["label"] for row in result.rows} == {"good"}

    def test_tighter_parameter_clouds_classify_no_worse(self):
        # more images per trial shrinks the per-trial parameter noise; the
        # emulation compares rates with tight vs loose clouds, 3-seed majority
        close_observers = {"a": (0.25, 0.02), "b": (0.45, 0.014), "c": (0.65, 0.010)}
        majority = 0
        for seed in range(3):
            loose, lv = synthetic_dataset(close_observers, 60, noise=0.08, seed=21 + seed)
            tight, tv = synthetic_dataset(close_observers, 60, noise=0.02, seed=21 + seed)
            cfg = EvalConfig(m_train=15, n_eval=1000, repeats=3, seed=22 + seed)
            rep_loose = evaluate(loose, lv, select_top_variance(lv, 20), cfg)
            rep_tight = evaluate(tight, tv, select_top_variance(tv, 20), cfg)
            rl = {r.observer_id: r.mean_recognition_rate for r in rep_loose}
            rt = {r.observer_id: r.mean_recognition_rate for r in rep_tight}
            if all(rt[o] >= rl[o] for o in rl):
                majority += 1
        assert majority >= 2
