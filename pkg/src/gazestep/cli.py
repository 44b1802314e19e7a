"""Batch command-line driver.

Subcommands mirror the pipeline stages: synth, ingest, trials, gmm,
features, classify, report.  Each stage reads the previous stage's files
from the output directory and writes its own, echoing the resolved
configuration into a header so reruns with identical flags and seed are
byte-identical.  Flags are long-form only; a key=value config file can
supply defaults that flags override.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import classify, features, geometry, gmm, synth, trials
from .gpd import GpdParams, fit_three_param
from .ingest import (
    EyeSample,
    EyeTrace,
    IngestConfig,
    SegmentationParams,
    TraceFormatError,
    parse_trace_file,
    read_sidecar,
    segment_fixations,
    write_trace_file,
)
from .serialize import atomic_write_text, dumps, format_float, read_jsonl

TRACES_SCHEMA = "gazestep.traces"
TRACES_VERSION = 1


class StageError(RuntimeError):
    pass


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise StageError(f"missing {path.name}; run the {producer} command first")
    return path


# ---------------------------------------------------------------- config file


def _load_config_file(path) -> dict:
    values = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        values[key.strip().replace("-", "_")] = val.strip()
    return values


def _resolve(args: argparse.Namespace, parser: argparse.ArgumentParser) -> argparse.Namespace:
    """Fill unset flags from the config file; flags always win."""
    if not getattr(args, "config", None):
        return args
    file_values = _load_config_file(args.config)
    for key, raw in file_values.items():
        if getattr(args, key, None) is None:
            setattr(args, key, raw)
    return args


def _num(args, name, default, cast=float):
    val = getattr(args, name, None)
    if val is None:
        return default
    return cast(val)


# ---------------------------------------------------------------- trace store


def write_trace_store(path, traces, config: dict) -> None:
    header = {"schema": TRACES_SCHEMA, "version": TRACES_VERSION, "config": config}
    lines = [dumps(header)]
    for tr in traces:
        lines.append(
            dumps(
                {
                    "observer": tr.observer_id,
                    "image": tr.image_id,
                    "screen_w": tr.screen_w,
                    "screen_h": tr.screen_h,
                    "n_offscreen": tr.n_offscreen,
                    "samples": [
                        [s.t, s.x, s.y, 1 if s.fixation_label else 0] for s in tr.samples
                    ],
                }
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_trace_store(path) -> tuple[dict, list[EyeTrace]]:
    rows = read_jsonl(path)
    if not rows:
        raise StageError(f"{path}: empty trace store")
    header = rows[0]
    if header.get("schema") != TRACES_SCHEMA or header.get("version") != TRACES_VERSION:
        raise StageError(f"{path}: expected {TRACES_SCHEMA} v{TRACES_VERSION}; run ingest")
    out = []
    for row in rows[1:]:
        samples = [
            EyeSample(t=t, x=x, y=y, fixation_label=bool(lab))
            for t, x, y, lab in row["samples"]
        ]
        out.append(
            EyeTrace(
                observer_id=row["observer"],
                image_id=row["image"],
                screen_w=row["screen_w"],
                screen_h=row["screen_h"],
                samples=samples,
                n_offscreen=int(row["n_offscreen"]),
            )
        )
    return header, out


# ------------------------------------------------------------------ commands


def cmd_synth(args) -> int:
    seed = _num(args, "seed", 0, int)
    n_observers = _num(args, "observers", 3, int)
    n_images = _num(args, "images", 20, int)
    k_values = _csv_floats(getattr(args, "k_values", None) or "-0.2,0.1,0.4,0.7,1.0")
    sigma_values = _csv_floats(getattr(args, "sigma_values", None) or "2.0,1.8,1.6,1.4,1.2")
    if len(k_values) < n_observers or len(sigma_values) < n_observers:
        raise StageError("need one k and sigma value per observer")
    profiles = [
        synth.ObserverProfile(
            observer_id=f"obs{i:02d}",
            saccade_gpd=GpdParams(theta=_num(args, "theta", 0.5), k=k_values[i], sigma=sigma_values[i]),
            fixation_jitter_sigma=_num(args, "jitter", 0.5),
        )
        for i in range(n_observers)
    ]
    traces = synth.generate_traces(
        profiles,
        n_images,
        seed,
        screen_w=_num(args, "screen_w", 1280.0),
        screen_h=_num(args, "screen_h", 1024.0),
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trace_file(traces, out)
    print(f"wrote {len(traces)} traces ({n_observers} observers x {n_images} images) to {out}")
    return 0


def cmd_ingest(args) -> int:
    src = Path(args.traces)
    if src.is_dir():
        files = sorted(src.glob("*.csv"))
        if not files:
            raise StageError(f"no traces: no .csv files in {src}")
    elif src.exists():
        files = [src]
    else:
        raise StageError(f"no traces: {src} does not exist")
    config = IngestConfig()
    if getattr(args, "screen_config", None):
        config = read_sidecar(args.screen_config)
    params = SegmentationParams(
        dispersion_threshold=_num(args, "dispersion", 35.0),
        min_duration=_num(args, "min_duration", 100.0),
        respect_labels=not getattr(args, "ignore_labels", False),
    )
    traces = []
    for f in files:
        for tr in parse_trace_file(f, config):
            traces.append(segment_fixations(tr, params))
    outdir = _outdir(args)
    echo = {
        "dispersion": params.dispersion_threshold,
        "min_duration": params.min_duration,
        "respect_labels": params.respect_labels,
        "source": str(args.traces),
    }
    write_trace_store(outdir / "traces.jsonl", traces, echo)
    observers = sorted({t.observer_id for t in traces})
    images = sorted({t.image_id for t in traces})
    summary = {
        "schema": "gazestep.summary",
        "version": 1,
        "config": echo,
        "observers": observers,
        "images": len(images),
        "traces": len(traces),
        "samples": sum(len(t.samples) for t in traces),
        "fixation_samples": sum(
            sum(1 for s in t.samples if s.fixation_label) for t in traces
        ),
        "offscreen_samples": sum(t.n_offscreen for t in traces),
    }
    atomic_write_text(outdir / "summary.json", dumps(summary) + "\n")
    print(
        f"ingested {len(traces)} traces: {len(observers)} observers, "
        f"{len(images)} images -> {outdir / 'traces.jsonl'}"
    )
    return 0


def cmd_trials(args) -> int:
    outdir = _outdir(args)
    _, traces = read_trace_store(_require(outdir / "traces.jsonl", "ingest"))
    plan = trials.TrialPlan(
        n_trials=_num(args, "n_trials", 100, int),
        images_per_trial=_num(args, "images_per_trial", 10, int),
        metric_tag=getattr(args, "metric", None) or geometry.EUCLIDEAN,
        seed=_num(args, "seed", 0, int),
    )
    records = trials.run_trials(traces, plan)
    echo = {
        "n_trials": plan.n_trials,
        "images_per_trial": plan.images_per_trial,
        "metric_tag": plan.metric_tag,
        "seed": plan.seed,
        "disc_margin": plan.disc_margin,
    }
    trials.write_records(outdir / "trials.jsonl", records, echo)
    ok = len(trials.successful(records))
    print(f"ran {plan.n_trials} trials -> {len(records)} records ({ok} fits ok)")
    return 0


def cmd_gmm(args) -> int:
    outdir = _outdir(args)
    _, records = trials.read_records(_require(outdir / "trials.jsonl", "trials"))
    good = trials.successful(records)
    if not good:
        raise StageError("trial database holds no successful fits")
    observers = sorted({r.observer_id for r in good})
    n_components = _num(args, "components", len(observers), int)
    seed = _num(args, "seed", 0, int)
    points = np.array([[r.params.k, r.params.sigma] for r in good])
    model = gmm.fit_gmm(points, n_components, seed=seed)
    cmap = gmm.cluster_observer_map(model, good)
    payload = {
        "schema": "gazestep.gmm",
        "version": 1,
        "config": {"n_components": n_components, "seed": seed},
        "model": gmm.model_to_dict(model),
        "observer_to_component": cmap.observer_to_component,
        "purity": cmap.purity,
    }
    atomic_write_text(outdir / "gmm.json", dumps(payload) + "\n")
    lines = ["component,n_sigma,point_index,k,sigma"]
    for comp in range(model.n_components):
        for n_sigma in (1.0, 2.0):
            pts = gmm.component_ellipse(model, comp, n_sigma)
            for i, (k, s) in enumerate(pts):
                lines.append(
                    f"{comp},{format_float(n_sigma)},{i},{format_float(k)},{format_float(s)}"
                )
    atomic_write_text(outdir / "gmm_contours.csv", "\n".join(lines) + "\n")
    print(
        f"fitted {n_components}-component mixture, log-likelihood "
        f"{model.log_likelihood:.3f}, purity {cmap.purity:.3f}"
    )
    return 0


def cmd_features(args) -> int:
    outdir = _outdir(args)
    _, records = trials.read_records(_require(outdir / "trials.jsonl", "trials"))
    good = trials.successful(records)
    if not good:
        raise StageError("trial database holds no successful fits")
    k_select = _num(args, "k", 20, int)
    lo, hi, grid = features.common_grid([r.params for r in good])
    vectors = [
        features.embed_pdf(r.params, grid, source=(r.trial_index, r.observer_id))
        for r in good
    ]
    echo = {"k": k_select, "vectors": len(vectors)}
    features.write_feature_matrix(outdir / "features.csv", vectors, lo, hi, echo)
    sel = features.select_top_variance(vectors, k_select)
    payload = {
        "schema": "gazestep.selection",
        "version": 1,
        "config": echo,
        "indices": list(sel.indices),
    }
    atomic_write_text(outdir / "selection.json", dumps(payload) + "\n")
    print(f"embedded {len(vectors)} densities on [{lo:.4g}, {hi:.4g}], selected K={k_select}")
    return 0


def cmd_classify(args) -> int:
    outdir = _outdir(args)
    _, records = trials.read_records(_require(outdir / "trials.jsonl", "trials"))
    _, vectors = features.read_feature_matrix(_require(outdir / "features.csv", "features"))
    seed = _num(args, "seed", 0, int)
    k_list = _csv_ints(getattr(args, "k_select", None) or "20")
    m_list = _csv_ints(getattr(args, "m_train", None) or "50")
    n_eval = _num(args, "n_eval", 5000, int)
    repeats = _num(args, "repeats", 100, int)
    lam = getattr(args, "reg_lambda", None)
    jobs = [
        classify.SweepJob(
            records=tuple(records),
            vectors=tuple(vectors),
            k_features=k,
            config=classify.EvalConfig(
                m_train=m,
                n_eval=n_eval,
                repeats=repeats,
                seed=seed,
                lam=float(lam) if lam is not None else None,
            ),
            label=f"K={k},M={m}",
        )
        for k in k_list
        for m in m_list
    ]
    result = classify.sweep(jobs)
    if not result.rows and result.errors:
        raise StageError("; ".join(msg for _, msg in result.errors))
    reports = [
        {"label": label, "reports": [classify.report_to_dict(r) for r in reps]}
        for label, reps in result.reports
    ]
    payload = {
        "schema": "gazestep.classify",
        "version": 1,
        "config": {
            "k_select": k_list,
            "m_train": m_list,
            "n_eval": n_eval,
            "repeats": repeats,
            "seed": seed,
        },
        "results": reports,
        "errors": [{"label": lab, "message": msg} for lab, msg in result.errors],
    }
    atomic_write_text(outdir / "classify.json", dumps(payload) + "\n")
    cols = [
        "label", "m_train", "k_features", "n_eval", "repeats", "metric_tag",
        "images_per_trial", "seed", "lambda", "observer", "mean_rate",
        "repeat_index", "rate",
    ]
    lines = [",".join(cols)]
    for row in result.rows:
        lines.append(",".join(_csv_cell(row.get(c)) for c in cols))
    atomic_write_text(outdir / "rates.csv", "\n".join(lines) + "\n")
    for rep_group in reports:
        for rep in rep_group["reports"]:
            print(
                f"{rep_group['label']} {rep['observer_id']}: "
                f"mean rate {rep['mean_recognition_rate']:.4f}"
            )
    return 0


def cmd_report(args) -> int:
    outdir = _outdir(args)
    _, traces = read_trace_store(_require(outdir / "traces.jsonl", "ingest"))
    header, records = trials.read_records(_require(outdir / "trials.jsonl", "trials"))
    good = trials.successful(records)
    if not good:
        raise StageError("trial database holds no successful fits")
    metric = header["config"]["metric_tag"]
    observers = sorted({r.observer_id for r in good})
    observer = getattr(args, "observer", None) or observers[0]
    images = sorted({t.image_id for t in traces})
    pooled = trials.pool_step_lengths(traces, observer, images, metric)
    params, gof = fit_three_param(pooled)
    _write_histogram(outdir / "histogram.csv", pooled, params, observer, metric)
    qq_lines = ["empirical_quantile,model_quantile"]
    for emp, mod in gof.qq_points:
        qq_lines.append(f"{format_float(emp)},{format_float(mod)}")
    atomic_write_text(outdir / "qq.csv", "\n".join(qq_lines) + "\n")

    ecdf_lines = ["observer,r_squared_adj,cumulative_fraction"]
    for obs in observers:
        for val, frac in trials.ecdf_of_r2(good, obs):
            ecdf_lines.append(f"{obs},{format_float(val)},{format_float(frac)}")
    atomic_write_text(outdir / "r2_ecdf.csv", "\n".join(ecdf_lines) + "\n")

    ks_lines = ["trial,observer,k,sigma"]
    for r in good:
        ks_lines.append(
            f"{r.trial_index},{r.observer_id},"
            f"{format_float(r.params.k)},{format_float(r.params.sigma)}"
        )
    atomic_write_text(outdir / "ksigma.csv", "\n".join(ks_lines) + "\n")

    med_lines = ["observer,k_median,sigma_median"]
    for obs in observers:
        ks = np.array([[r.params.k, r.params.sigma] for r in good if r.observer_id == obs])
        med = np.median(ks, axis=0)
        med_lines.append(f"{obs},{format_float(med[0])},{format_float(med[1])}")
    atomic_write_text(outdir / "ksigma_medians.csv", "\n".join(med_lines) + "\n")

    gmm_path = _require(outdir / "gmm.json", "gmm")
    import json

    model = gmm.model_from_dict(json.loads(gmm_path.read_text())["model"])
    ell_lines = ["component,n_sigma,point_index,k,sigma"]
    for comp in range(model.n_components):
        for n_sigma in (1.0, 2.0):
            for i, (k, s) in enumerate(gmm.component_ellipse(model, comp, n_sigma)):
                ell_lines.append(
                    f"{comp},{format_float(n_sigma)},{i},{format_float(k)},{format_float(s)}"
                )
    atomic_write_text(outdir / "gmm_ellipses.csv", "\n".join(ell_lines) + "\n")

    classify_path = _require(outdir / "classify.json", "classify")
    rates = json.loads(classify_path.read_text())
    rate_lines = ["label,observer,mean_recognition_rate,mean_tpr,mean_tnr"]
    for group in rates["results"]:
        for rep in group["reports"]:
            rate_lines.append(
                f"{group['label']},{rep['observer_id']},"
                f"{format_float(rep['mean_recognition_rate'])},"
                f"{format_float(rep['mean_tpr'])},{format_float(rep['mean_tnr'])}"
            )
    atomic_write_text(outdir / "rates_summary.csv", "\n".join(rate_lines) + "\n")
    print(f"report data for observer {observer} written to {outdir}")
    return 0


def _write_histogram(path, data, params, observer, metric) -> None:
    """Freedman-Diaconis bins over [min, 99.5th percentile] plus an overflow bin."""
    data = np.asarray(data)
    q75, q25 = np.percentile(data, [75, 25])
    iqr = q75 - q25
    hi = float(np.percentile(data, 99.5))
    lo = float(data.min())
    width = 2.0 * iqr / data.size ** (1.0 / 3.0)
    n_bins = max(1, int(np.ceil((hi - lo) / width))) if width > 0 else 1
    edges = np.linspace(lo, hi, n_bins + 1)
    counts, _ = np.histogram(data[data <= hi], bins=edges)
    overflow = int(data.size - counts.sum())
    from .gpd import pdf as gpd_pdf

    mids = 0.5 * (edges[:-1] + edges[1:])
    dens = gpd_pdf(mids, params)
    lines = [
        f"# observer={observer} metric={metric} n_steps={data.size}",
        "# binning=freedman-diaconis range=[min,q99.5] last_row=overflow",
        f"# theta={format_float(params.theta)} k={format_float(params.k)} "
        f"sigma={format_float(params.sigma)}",
        "bin_lo,bin_hi,count,model_pdf_at_mid",
    ]
    for i in range(n_bins):
        lines.append(
            f"{format_float(edges[i])},{format_float(edges[i + 1])},"
            f"{counts[i]},{format_float(dens[i])}"
        )
    lines.append(f"{format_float(hi)},inf,{overflow},")
    atomic_write_text(path, "\n".join(lines) + "\n")


# ------------------------------------------------------------------- parsing


def _csv_floats(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


def _csv_ints(text) -> list[int]:
    return [int(v) for v in str(text).split(",") if v.strip()]


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format_float(v)
    return str(v)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazestep",
        description="Step-length statistics of gaze traces: GPD tails, mixtures, identification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="key=value config file; flags override it")
        p.add_argument("--seed", help="integer seed", default=None)
        p.add_argument("--out", required=out_required, help="output directory")

    p = sub.add_parser("synth", help="generate synthetic labeled traces")
    p.add_argument("--config")
    p.add_argument("--seed", default=None)
    p.add_argument("--out", required=True, help="output trace CSV file")
    p.add_argument("--observers", default=None)
    p.add_argument("--images", default=None)
    p.add_argument("--k-values", dest="k_values", default=None)
    p.add_argument("--sigma-values", dest="sigma_values", default=None)
    p.add_argument("--theta", default=None)
    p.add_argument("--jitter", default=None)
    p.add_argument("--screen-w", dest="screen_w", default=None)
    p.add_argument("--screen-h", dest="screen_h", default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="parse and segment trace files")
    common(p)
    p.add_argument("--traces", required=True, help="trace CSV file or directory")
    p.add_argument("--screen-config", dest="screen_config", default=None)
    p.add_argument("--dispersion", default=None)
    p.add_argument("--min-duration", dest="min_duration", default=None)
    p.add_argument("--ignore-labels", dest="ignore_labels", action="store_true")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("trials", help="bootstrap GPD fits over image subsets")
    common(p)
    p.add_argument("--metric", choices=list(geometry.METRICS), default=None)
    p.add_argument("--n-trials", dest="n_trials", default=None)
    p.add_argument("--images-per-trial", dest="images_per_trial", default=None)
    p.set_defaults(func=cmd_trials)

    p = sub.add_parser("gmm", help="fit a Gaussian mixture to (k, sigma) records")
    common(p)
    p.add_argument("--components", default=None)
    p.set_defaults(func=cmd_gmm)

    p = sub.add_parser("features", help="embed fitted densities as feature vectors")
    common(p)
    p.add_argument("--k", default=None, help="number of selected components")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("classify", help="one-vs-rest SVM identification experiment")
    common(p)
    p.add_argument("--k-select", dest="k_select", default=None, help="comma list")
    p.add_argument("--m-train", dest="m_train", default=None, help="comma list")
    p.add_argument("--n-eval", dest="n_eval", default=None)
    p.add_argument("--repeats", default=None)
    p.add_argument("--lambda", dest="reg_lambda", default=None)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("report", help="emit plot-ready CSV data for all stages")
    common(p)
    p.add_argument("--observer", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args = _resolve(args, parser)
    try:
        return args.func(args)
    except (StageError, TraceFormatError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
