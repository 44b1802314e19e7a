"""Synthetic generator tests: the pipeline must recover exactly what was drawn."""
import numpy as np
import pytest

from gazestep.gpd import GpdParams, fit_three_param
from gazestep.synth import ObserverProfile, generate_traces, generate_traces_detailed
from gazestep.trials import step_lengths_for_trace


def profile(k=0.3, sigma=2.0, theta=0.5, jitter=0.5, obs="obs00"):
    return ObserverProfile(
        observer_id=obs,
        saccade_gpd=GpdParams(theta=theta, k=k, sigma=sigma),
        fixation_jitter_sigma=jitter,
    )


class TestGeneration:
    def test_zero_jitter_steps_recovered_exactly(self):
        traces, truth = generate_traces_detailed([profile(jitter=0.0)], 10, seed=1)
        for tr in traces:
            info = truth[(tr.observer_id, tr.image_id)]
            got = step_lengths_for_trace(tr, "euclidean")
            assert got.size == len(info.within_run_steps)
            for g, expected, reflected in zip(
                got, info.within_run_steps, info.within_run_reflected
            ):
                if not reflected:
                    assert g == pytest.approx(expected, rel=1e-9)

    def test_labels_match_regime_sequence(self):
        traces, truth = generate_traces_detailed([profile()], 5, seed=2)
        for tr in traces:
            info = truth[(tr.observer_id, tr.image_id)]
            assert [s.fixation_label for s in tr.samples] == info.labels

    def test_samples_within_screen_bounds(self):
        heavy = profile(k=0.9, sigma=30.0, theta=5.0)
        traces = generate_traces([heavy], 20, seed=3, screen_w=800, screen_h=600)
        for tr in traces:
            for s in tr.samples:
                assert 0.0 <= s.x <= 800.0
                assert 0.0 <= s.y <= 600.0

    def test_strict_regime_alternation(self):
        traces, truth = generate_traces_detailed([profile()], 5, seed=4)
        for tr in traces:
            labels = truth[(tr.observer_id, tr.image_id)].labels
            runs = []
            for lab in labels:
                if not runs or runs[-1] != lab:
                    runs.append(lab)
            # alternating regimes, starting and ending with fixation
            assert runs[0] is True and runs[-1] is True
            assert all(a != b for a, b in zip(runs, runs[1:]))

    def test_deterministic_per_seed(self):
        a = generate_traces([profile()], 3, seed=7)
        b = generate_traces([profile()], 3, seed=7)
        for ta, tb in zip(a, b):
            assert [(s.t, s.x, s.y, s.fixation_label) for s in ta.samples] == [
                (s.t, s.x, s.y, s.fixation_label) for s in tb.samples
            ]

    def test_recovers_profile_parameters(self):
        # closes the loop: pooled euclidean steps over 200 images refit the GPD
        traces = generate_traces([profile(k=0.3, sigma=2.0, theta=0.5)], 200, seed=5)
        pooled = np.concatenate([step_lengths_for_trace(t, "euclidean") for t in traces])
        params, _ = fit_three_param(pooled)
        assert params.k == pytest.approx(0.3, abs=0.05)
        assert params.sigma == pytest.approx(2.0, abs=0.1)
        assert params.theta == pytest.approx(0.5, abs=0.05)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            generate_traces([], 5, seed=0)
        with pytest.raises(ValueError):
            generate_traces([profile()], 0, seed=0)
        with pytest.raises(ValueError):
            ObserverProfile(
                observer_id="x",
                saccade_gpd=GpdParams(0.0, 0.3, 1.0),
                fixation_jitter_sigma=-1.0,
            )
