"""One-vs-rest linear SVM over selected density features.

Training minimizes class-weighted hinge loss plus (lambda/2)||w||^2 with a
deterministic Pegasos-style subgradient schedule (step 1/(lambda t) on the
weights, 1/t on the unregularized bias, suffix averaging over the second
half of the iterations).  Class weights are inversely proportional to class
counts to counter the one-against-rest imbalance.

Evaluation reproduces the identification protocol: one random set of M
training trials shared by all observers, then repeated draws of N vectors
from the remaining (observer, trial) pairs; the recognition rate is the
fraction of drawn vectors whose target/non-target label is predicted
correctly.  True-positive and true-negative rates are reported alongside so
other readings of the rate can be inspected.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .features import FeatureSelection, project, select_top_variance

DEFAULT_ITERATIONS = 100_000
_BIAS_STEP = 0.3


@dataclass
class SvmModel:
    weights: np.ndarray
    bias: float
    positive_label: str
    lam: float
    class_weighted: bool = True

    def decision(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.weights + self.bias

    def predict(self, x) -> np.ndarray:
        return self.decision(x) > 0.0


@dataclass(frozen=True)
class EvalConfig:
    m_train: int  # trials in the training set
    n_eval: int  # vectors classified per repeat
    repeats: int = 100
    seed: int = 0
    lam: Optional[float] = None  # default 1/(m_train * n_observers)
    n_iterations: int = DEFAULT_ITERATIONS
    class_weighted: bool = True


@dataclass
class EvalReport:
    observer_id: str
    mean_recognition_rate: float
    per_repeat_rates: list
    mean_tpr: float
    mean_tnr: float
    config: dict = field(default_factory=dict)


def train_ovr(
    examples,
    target: str,
    lam: float,
    seed,
    n_iterations: int = DEFAULT_ITERATIONS,
    class_weighted: bool = True,
) -> SvmModel:
    """Train a one-vs-rest linear SVM from (vector, observer_id) pairs.

    With ``class_weighted`` off, plain hinge loss is used; on pure-noise
    features that degenerates into the always-negative majority classifier.

    Raises:
        ValueError: all examples carry the same binary label.
    """
    xs = np.array([np.asarray(v, dtype=float) for v, _ in examples])
    ys = np.array([1.0 if label == target else -1.0 for _, label in examples])
    n = len(ys)
    n_pos = int(np.sum(ys > 0))
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("training set must contain both classes")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if class_weighted:
        # per-class weights inversely proportional to class counts
        class_w = np.where(ys > 0, n / (2.0 * n_pos), n / (2.0 * n_neg))
    else:
        class_w = np.ones(n)
    rng = np.random.default_rng(seed)
    order = rng.integers(0, n, size=n_iterations)

    dim = xs.shape[1]
    w = np.zeros(dim)
    b = 0.0
    w_sum = np.zeros(dim)
    b_sum = 0.0
    half = n_iterations // 2
    for t in range(1, n_iterations + 1):
        i = order[t - 1]
        margin = ys[i] * (xs[i] @ w + b)
        w *= 1.0 - 1.0 / t  # shrink = (1 - eta_t * lambda)
        if margin < 1.0:
            coef = class_w[i] * ys[i]
            w += (coef / (lam * t)) * xs[i]
            # unregularized bias: lambda-free step keeps training exactly
            # equivariant under joint (feature, lambda) rescaling
            b += coef * _BIAS_STEP / math.sqrt(t)
        if t > half:
            w_sum += w
            b_sum += b
    n_avg = n_iterations - half
    return SvmModel(
        weights=w_sum / n_avg,
        bias=b_sum / n_avg,
        positive_label=target,
        lam=lam,
        class_weighted=class_weighted,
    )


def objective(model: SvmModel, examples) -> float:
    """The regularized (optionally class-weighted) hinge objective."""
    xs = np.array([np.asarray(v, dtype=float) for v, _ in examples])
    ys = np.array([1.0 if label == model.positive_label else -1.0 for _, label in examples])
    n = len(ys)
    n_pos = int(np.sum(ys > 0))
    if model.class_weighted:
        class_w = np.where(ys > 0, n / (2.0 * n_pos), n / (2.0 * (n - n_pos)))
    else:
        class_w = np.ones(n)
    hinge = np.maximum(0.0, 1.0 - ys * (xs @ model.weights + model.bias))
    return 0.5 * model.lam * float(model.weights @ model.weights) + float(
        np.mean(class_w * hinge)
    )


def _vector_index(records, vectors, sel: FeatureSelection):
    """Map (trial_index, observer_id) to projected K-vectors."""
    by_source = {v.source: v for v in vectors}
    index = {}
    for r in records:
        if r.failed or r.params is None:
            continue
        key = (r.trial_index, r.observer_id)
        if key not in by_source:
            raise ValueError(f"no feature vector for record {key}")
        index[key] = project(by_source[key], sel)
    return index


def evaluate(records, vectors, sel: FeatureSelection, config: EvalConfig) -> list[EvalReport]:
    """Per-observer identification experiment; see the module docstring.

    Raises:
        ValueError: too few complete trials to supply the training set, or
            no evaluation trials left after excluding the training trials.
    """
    index = _vector_index(records, vectors, sel)
    observers = sorted({obs for _, obs in index})
    if not observers:
        raise ValueError("no successful records to evaluate")
    complete_trials = sorted(
        t
        for t in {tr for tr, _ in index}
        if all((t, obs) in index for obs in observers)
    )
    if len(complete_trials) < config.m_train:
        raise ValueError(
            f"need {config.m_train} complete training trials, have {len(complete_trials)}"
        )
    rng = np.random.default_rng([config.seed, 0])
    chosen = rng.choice(len(complete_trials), size=config.m_train, replace=False)
    train_trials = [complete_trials[i] for i in chosen]
    train_set = set(train_trials)
    eval_pairs = sorted(
        (t, obs) for (t, obs) in index if t not in train_set
    )
    if not eval_pairs:
        raise ValueError("no evaluation trials disjoint from the training set")

    examples = [
        (index[(t, obs)], obs) for t in train_trials for obs in observers
    ]
    lam = config.lam if config.lam is not None else 1.0 / len(examples)
    eval_x = np.array([index[pair] for pair in eval_pairs])
    eval_obs = np.array([obs for _, obs in eval_pairs])

    first = next(r for r in records if not r.failed)
    echo = {
        "m_train": config.m_train,
        "k_features": len(sel.indices),
        "n_eval": config.n_eval,
        "repeats": config.repeats,
        "metric_tag": first.metric_tag,
        "images_per_trial": first.images_per_trial,
        "seed": config.seed,
        "lambda": lam,
    }

    reports = []
    for oi, obs in enumerate(observers):
        model = train_ovr(
            examples, obs, lam=lam,
            seed=[config.seed, 1, oi],
            n_iterations=config.n_iterations,
            class_weighted=config.class_weighted,
        )
        is_target = eval_obs == obs
        rates = []
        tp = fp = tn = fn = 0
        for rep in range(config.repeats):
            rep_rng = np.random.default_rng([config.seed, 2, oi, rep])
            draw = rep_rng.integers(0, len(eval_pairs), size=config.n_eval)
            pred = model.predict(eval_x[draw])
            truth = is_target[draw]
            rates.append(float(np.mean(pred == truth)))
            tp += int(np.sum(pred & truth))
            fp += int(np.sum(pred & ~truth))
            tn += int(np.sum(~pred & ~truth))
            fn += int(np.sum(~pred & truth))
        reports.append(
            EvalReport(
                observer_id=obs,
                mean_recognition_rate=float(np.mean(rates)),
                per_repeat_rates=rates,
                mean_tpr=tp / (tp + fn) if tp + fn else 0.0,
                mean_tnr=tn / (tn + fp) if tn + fp else 0.0,
                config=dict(echo),
            )
        )
    return reports


@dataclass(frozen=True)
class SweepJob:
    """One sweep entry: a trial database, its feature vectors, and settings."""

    records: tuple
    vectors: tuple
    k_features: int
    config: EvalConfig
    label: str = ""


@dataclass
class SweepResult:
    rows: list  # dicts: config echo + observer + repeat_index + rate + mean_rate
    errors: list  # (label, message)
    reports: list  # (label, list of EvalReport)


def sweep(jobs) -> SweepResult:
    """Run evaluate for every job; failures are recorded and the run continues."""
    rows = []
    errors = []
    all_reports = []
    for job in jobs:
        try:
            sel = select_top_variance(list(job.vectors), job.k_features)
            reports = evaluate(list(job.records), list(job.vectors), sel, job.config)
        except (ValueError, KeyError) as err:
            errors.append((job.label, str(err)))
            continue
        all_reports.append((job.label, reports))
        for rep in reports:
            for idx, rate in enumerate(rep.per_repeat_rates):
                row = {"label": job.label}
                row.update(rep.config)
                row.update(
                    observer=rep.observer_id,
                    mean_rate=rep.mean_recognition_rate,
                    repeat_index=idx,
                    rate=rate,
                )
                rows.append(row)
    return SweepResult(rows=rows, errors=errors, reports=all_reports)


def report_to_dict(rep: EvalReport) -> dict:
    return {
        "observer_id": rep.observer_id,
        "mean_recognition_rate": rep.mean_recognition_rate,
        "per_repeat_rates": list(rep.per_repeat_rates),
        "mean_tpr": rep.mean_tpr,
        "mean_tnr": rep.mean_tnr,
        "config": rep.config,
    }
