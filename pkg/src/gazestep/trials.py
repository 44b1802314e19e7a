"""Bootstrap trials over random image subsets.

Each trial draws one image subset (shared by all observers so the comparison
between observers is not confounded by image selection), pools every
observer's non-fixation step lengths over that subset, and fits the
three-parameter GPD.  Trials are seeded independently via (seed, trial_index)
so runs reproduce exactly regardless of execution order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import geometry
from .gpd import FitError, GofStats, GpdParams, fit_three_param
from .ingest import EyeTrace, nonfixation_pairs
from .serialize import atomic_write_text, dumps, read_jsonl

MIN_STEPS = 50

TRIALS_SCHEMA = "gazestep.trials"
TRIALS_VERSION = 1


@dataclass(frozen=True)
class TrialPlan:
    n_trials: int
    images_per_trial: int
    metric_tag: str = geometry.EUCLIDEAN
    seed: int = 0
    disc_margin: float = geometry.DEFAULT_MARGIN

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.images_per_trial < 1:
            raise ValueError("images_per_trial must be >= 1")
        if self.metric_tag not in geometry.METRICS:
            raise ValueError(f"unknown metric {self.metric_tag!r}")


@dataclass
class TrialRecord:
    trial_index: int
    observer_id: str
    metric_tag: str
    images_per_trial: int
    params: Optional[GpdParams]
    gof: Optional[GofStats]
    n_steps: int
    failed: bool = False
    failure_reason: str = ""


def step_lengths_for_trace(
    trace: EyeTrace, metric_tag: str, disc_margin: float = geometry.DEFAULT_MARGIN
) -> np.ndarray:
    """Step lengths of the trace's saccadic (both-endpoint non-fixation) pairs."""
    pairs = nonfixation_pairs(trace)
    if not pairs:
        return np.empty(0)
    ax = np.array([a.x for a, _ in pairs])
    ay = np.array([a.y for a, _ in pairs])
    bx = np.array([b.x for _, b in pairs])
    by = np.array([b.y for _, b in pairs])
    if metric_tag == geometry.EUCLIDEAN:
        return np.hypot(ax - bx, ay - by)
    if metric_tag == geometry.HYPERBOLIC:
        au, av = geometry.disc_coords(ax, ay, trace.screen_w, trace.screen_h, disc_margin)
        bu, bv = geometry.disc_coords(bx, by, trace.screen_w, trace.screen_h, disc_margin)
        za = au + 1j * av
        zb = bu + 1j * bv
        return np.arctanh(np.abs(za - zb) / np.abs(1.0 - za * np.conj(zb)))
    raise ValueError(f"unknown metric {metric_tag!r}")


def _step_index(traces, metric_tag, disc_margin):
    return {
        (tr.observer_id, tr.image_id): step_lengths_for_trace(tr, metric_tag, disc_margin)
        for tr in traces
    }


def pool_step_lengths(
    traces,
    observer: str,
    image_subset,
    metric_tag: str,
    disc_margin: float = geometry.DEFAULT_MARGIN,
) -> np.ndarray:
    """Concatenated step lengths for one observer over an image subset.

    Subset order first, temporal order within each image.  Raises if the
    observer appears in none of the subset's images.
    """
    if not image_subset:
        raise ValueError("image subset must be non-empty")
    index = {}
    for tr in traces:
        if tr.observer_id == observer:
            index[tr.image_id] = tr
    parts = []
    seen = False
    for image_id in image_subset:
        tr = index.get(image_id)
        if tr is None:
            continue
        seen = True
        parts.append(step_lengths_for_trace(tr, metric_tag, disc_margin))
    if not seen:
        raise ValueError(f"observer {observer!r} absent from every image in the subset")
    return np.concatenate(parts) if parts else np.empty(0)


def run_trials(traces, plan: TrialPlan) -> list[TrialRecord]:
    """Run the full bootstrap plan; one record per (trial, observer).

    Fit failures are recorded with ``failed=True`` and the run continues.
    """
    observers = sorted({tr.observer_id for tr in traces})
    images = sorted({tr.image_id for tr in traces})
    if plan.images_per_trial > len(images):
        raise ValueError(
            f"images_per_trial={plan.images_per_trial} exceeds the {len(images)} available images"
        )
    steps = _step_index(traces, plan.metric_tag, plan.disc_margin)
    records: list[TrialRecord] = []
    for trial in range(plan.n_trials):
        rng = np.random.default_rng([plan.seed, trial])
        subset_idx = rng.choice(len(images), size=plan.images_per_trial, replace=False)
        subset = [images[i] for i in subset_idx]
        for obs in observers:
            parts = [steps[(obs, img)] for img in subset if (obs, img) in steps]
            pooled = np.concatenate(parts) if parts else np.empty(0)
            records.append(_fit_record(trial, obs, pooled, plan))
    return records


def _fit_record(trial: int, obs: str, pooled: np.ndarray, plan: TrialPlan) -> TrialRecord:
    base = dict(
        trial_index=trial,
        observer_id=obs,
        metric_tag=plan.metric_tag,
        images_per_trial=plan.images_per_trial,
        n_steps=int(pooled.size),
    )
    if pooled.size < MIN_STEPS:
        return TrialRecord(
            params=None, gof=None, failed=True,
            failure_reason=f"only {pooled.size} pooled steps", **base,
        )
    try:
        params, gof = fit_three_param(pooled)
    except (ValueError, FitError) as err:
        return TrialRecord(
            params=None, gof=None, failed=True, failure_reason=str(err), **base,
        )
    return TrialRecord(params=params, gof=gof, failed=False, **base)


def successful(records) -> list[TrialRecord]:
    return [r for r in records if not r.failed]


def ecdf_of_r2(records, observer: str) -> list[tuple[float, float]]:
    """Sorted adjusted R-squared values with cumulative fractions i/n."""
    values = sorted(
        r.gof.r_squared_adj for r in records if r.observer_id == observer and not r.failed
    )
    if not values:
        raise ValueError(f"no successful records for observer {observer!r}")
    n = len(values)
    return [(v, (i + 1) / n) for i, v in enumerate(values)]


def record_to_dict(r: TrialRecord) -> dict:
    return {
        "trial_index": r.trial_index,
        "observer_id": r.observer_id,
        "metric_tag": r.metric_tag,
        "images_per_trial": r.images_per_trial,
        "params": r.params.as_dict() if r.params is not None else None,
        "gof": (
            {
                "r_squared_adj": r.gof.r_squared_adj,
                "n": r.gof.n,
                "qq_points": [[a, b] for a, b in r.gof.qq_points],
            }
            if r.gof is not None
            else None
        ),
        "n_steps": r.n_steps,
        "failed": r.failed,
        "failure_reason": r.failure_reason,
    }


def record_from_dict(d: dict) -> TrialRecord:
    params = GpdParams.from_dict(d["params"]) if d["params"] is not None else None
    gof = None
    if d["gof"] is not None:
        gof = GofStats(
            r_squared_adj=float(d["gof"]["r_squared_adj"]),
            n=int(d["gof"]["n"]),
            qq_points=[(float(a), float(b)) for a, b in d["gof"]["qq_points"]],
        )
    return TrialRecord(
        trial_index=int(d["trial_index"]),
        observer_id=d["observer_id"],
        metric_tag=d["metric_tag"],
        images_per_trial=int(d["images_per_trial"]),
        params=params,
        gof=gof,
        n_steps=int(d["n_steps"]),
        failed=bool(d["failed"]),
        failure_reason=d.get("failure_reason", ""),
    )


def write_records(path, records, config: dict) -> None:
    """JSON Lines trial database: header line, then one record per line."""
    header = {"schema": TRIALS_SCHEMA, "version": TRIALS_VERSION, "config": config}
    lines = [dumps(header)]
    lines.extend(dumps(record_to_dict(r)) for r in records)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_records(path) -> tuple[dict, list[TrialRecord]]:
    rows = read_jsonl(path)
    if not rows:
        raise ValueError(f"{path}: empty trial database")
    header = rows[0]
    if header.get("schema") != TRIALS_SCHEMA or header.get("version") != TRIALS_VERSION:
        raise ValueError(
            f"{path}: expected {TRIALS_SCHEMA} v{TRIALS_VERSION} header; "
            "regenerate with the trials command"
        )
    return header, [record_from_dict(d) for d in rows[1:]]
