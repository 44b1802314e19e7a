"""Synthetic gaze-trace generator with known step-length distributions.

Traces alternate between fixation clusters (Gaussian jitter around a resting
point) and saccadic runs whose per-step lengths are drawn from an observer's
generalized Pareto profile with uniformly random directions.  Positions are
reflected at the screen borders, which preserves drawn step lengths except
for the (rare, flagged) steps that actually fold.  Everything is
deterministic per seed, independently per (observer, image).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gpd import GpdParams, _quantile_unchecked
from .ingest import EyeSample, EyeTrace


@dataclass(frozen=True)
class ObserverProfile:
    """Generative profile for one synthetic observer."""

    observer_id: str
    saccade_gpd: GpdParams
    fixation_jitter_sigma: float = 0.5  # px
    fixation_duration: tuple = (100.0, 160.0)  # ms, uniform range
    saccade_length: tuple = (5, 9)  # samples per saccadic run, inclusive range

    def __post_init__(self):
        if self.fixation_jitter_sigma < 0:
            raise ValueError("jitter sigma must be non-negative")
        if self.fixation_duration[0] <= 0 or self.fixation_duration[1] < self.fixation_duration[0]:
            raise ValueError("bad fixation duration range")
        if self.saccade_length[0] < 2 or self.saccade_length[1] < self.saccade_length[0]:
            raise ValueError("saccadic runs need at least 2 samples")


@dataclass
class TraceTruth:
    """Generator-side ground truth for one trace."""

    labels: list = field(default_factory=list)  # regime per sample, True = fixation
    # step lengths drawn inside saccadic runs, excluding each run's entry step;
    # these are exactly what the non-fixation pairing recovers (when unreflected)
    within_run_steps: list = field(default_factory=list)
    within_run_reflected: list = field(default_factory=list)


def _reflect(value: float, hi: float) -> float:
    period = 2.0 * hi
    v = value % period
    return v if v <= hi else period - v


def generate_traces(
    profiles,
    n_images: int,
    seed: int,
    screen_w: float = 1280.0,
    screen_h: float = 1024.0,
    dt_ms: float = 5.0,
    fixations_per_image: int = 8,
) -> list[EyeTrace]:
    """Generate fully labeled traces for every (profile, image) pair."""
    traces, _ = generate_traces_detailed(
        profiles,
        n_images,
        seed,
        screen_w=screen_w,
        screen_h=screen_h,
        dt_ms=dt_ms,
        fixations_per_image=fixations_per_image,
    )
    return traces


def generate_traces_detailed(
    profiles,
    n_images: int,
    seed: int,
    screen_w: float = 1280.0,
    screen_h: float = 1024.0,
    dt_ms: float = 5.0,
    fixations_per_image: int = 8,
):
    """Like generate_traces but also returns per-trace ground truth.

    Returns (traces, truth) with truth keyed by (observer_id, image_id).
    """
    if not profiles:
        raise ValueError("need at least one observer profile")
    if n_images < 1 or fixations_per_image < 2:
        raise ValueError("need at least one image and two fixations per image")
    traces = []
    truth: dict[tuple, TraceTruth] = {}
    for p_idx, profile in enumerate(profiles):
        for i_idx in range(n_images):
            image_id = f"img{i_idx:04d}"
            rng = np.random.default_rng([seed, p_idx, i_idx])
            trace, tr_truth = _generate_one(
                profile, image_id, rng, screen_w, screen_h, dt_ms, fixations_per_image
            )
            traces.append(trace)
            truth[(profile.observer_id, image_id)] = tr_truth
    return traces, truth


def _generate_one(profile, image_id, rng, screen_w, screen_h, dt_ms, n_fixations):
    pos_x = rng.uniform(0.35, 0.65) * screen_w
    pos_y = rng.uniform(0.35, 0.65) * screen_h
    t = 0.0
    samples: list[EyeSample] = []
    truth = TraceTruth()

    def emit(x, y, fixation):
        nonlocal t
        samples.append(
            EyeSample(
                t=t,
                x=_reflect(x, screen_w),
                y=_reflect(y, screen_h),
                fixation_label=fixation,
            )
        )
        truth.labels.append(fixation)
        t += dt_ms

    for cluster in range(n_fixations):
        duration = rng.uniform(*profile.fixation_duration)
        n_fix = max(2, int(round(duration / dt_ms)))
        jitter = rng.normal(0.0, profile.fixation_jitter_sigma, size=(n_fix, 2))
        for jx, jy in jitter:
            emit(pos_x + jx, pos_y + jy, True)
        if cluster == n_fixations - 1:
            break
        n_sac = int(rng.integers(profile.saccade_length[0], profile.saccade_length[1] + 1))
        lengths = _quantile_unchecked(rng.random(n_sac), profile.saccade_gpd)
        angles = rng.uniform(0.0, 2.0 * math.pi, size=n_sac)
        for step_idx in range(n_sac):
            raw_x = pos_x + lengths[step_idx] * math.cos(angles[step_idx])
            raw_y = pos_y + lengths[step_idx] * math.sin(angles[step_idx])
            new_x = _reflect(raw_x, screen_w)
            new_y = _reflect(raw_y, screen_h)
            if step_idx > 0:  # entry step lands in a mixed pair, not recovered
                truth.within_run_steps.append(float(lengths[step_idx]))
                truth.within_run_reflected.append(new_x != raw_x or new_y != raw_y)
            pos_x, pos_y = new_x, new_y
            emit(pos_x, pos_y, False)

    return (
        EyeTrace(
            observer_id=profile.observer_id,
            image_id=image_id,
            screen_w=screen_w,
            screen_h=screen_h,
            samples=samples,
            n_offscreen=0,
        ),
        truth,
    )
