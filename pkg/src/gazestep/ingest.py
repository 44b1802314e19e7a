"""Trace file parsing and fixation/saccade segmentation.

Trace files are UTF-8 CSV with header ``observer,image,t_ms,x_px,y_px,fixation``
where the fixation column is "" (unlabeled), "0" (saccadic) or "1" (fixation).
Screen dimensions come from a ``# screen W H`` comment line in the file or
from the ingest config (sidecar ``screen_w=.../screen_h=...`` key-value text).

Segmentation uses the dispersion-threshold rule (I-DT): a maximal time window
lasting at least ``min_duration`` whose bounding box satisfies
width + height <= ``dispersion_threshold`` is a fixation; everything else is
saccadic.  Labels already present in the file win when ``respect_labels`` is
set and the trace is fully labeled.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional


class TraceFormatError(ValueError):
    """Malformed trace file; message carries file/line context."""


@dataclass(frozen=True)
class EyeSample:
    """One gaze measurement: time in ms, pixel coordinates, optional label."""

    t: float
    x: float
    y: float
    fixation_label: Optional[bool] = None

    def __post_init__(self):
        if not (math.isfinite(self.t) and self.t >= 0):
            raise ValueError(f"sample time must be finite and non-negative, got {self.t}")
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("sample coordinates must be finite")


@dataclass
class EyeTrace:
    """Time-ordered gaze samples for one (observer, image) pair.

    ``n_offscreen`` counts samples outside the screen rectangle; they are
    kept (trackers overshoot) and only clamped later by the disc mapping.
    """

    observer_id: str
    image_id: str
    screen_w: float
    screen_h: float
    samples: list
    n_offscreen: int = 0

    def __post_init__(self):
        if not self.samples:
            raise ValueError("trace must contain at least one sample")
        if self.screen_w <= 0 or self.screen_h <= 0:
            raise ValueError("screen dimensions must be positive")

    def fully_labeled(self) -> bool:
        return all(s.fixation_label is not None for s in self.samples)


@dataclass(frozen=True)
class IngestConfig:
    """Fallback screen dimensions when the file has no ``# screen`` line."""

    screen_w: Optional[float] = None
    screen_h: Optional[float] = None


@dataclass(frozen=True)
class SegmentationParams:
    dispersion_threshold: float = 35.0  # px, bounding-box width + height
    min_duration: float = 100.0  # ms
    respect_labels: bool = True


def read_sidecar(path) -> IngestConfig:
    """Parse a key=value sidecar file with screen_w / screen_h entries."""
    values = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise TraceFormatError(f"{path}: expected key=value, got {line!r}")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    try:
        return IngestConfig(
            screen_w=float(values["screen_w"]), screen_h=float(values["screen_h"])
        )
    except KeyError as missing:
        raise TraceFormatError(f"{path}: missing {missing} entry") from None


_HEADER = ["observer", "image", "t_ms", "x_px", "y_px", "fixation"]


def _parse_label(text: str, path, line_no: int) -> Optional[bool]:
    if text == "":
        return None
    if text == "1":
        return True
    if text == "0":
        return False
    raise TraceFormatError(f"{path}:{line_no}: fixation must be '', '0' or '1', got {text!r}")


def parse_trace_file(path, config: IngestConfig = IngestConfig()) -> list[EyeTrace]:
    """Parse one trace CSV into one EyeTrace per (observer, image) group.

    Groups keep first-appearance order; samples keep file order, which must be
    strictly increasing in time within each group.
    """
    path = Path(path)
    screen_w, screen_h = config.screen_w, config.screen_h
    groups: dict[tuple[str, str], list[EyeSample]] = {}
    saw_header = False
    with path.open(encoding="utf-8", newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if row[0].startswith("#"):
                parts = " ".join(row).lstrip("#").split()
                if parts[:1] == ["screen"]:
                    if len(parts) != 3:
                        raise TraceFormatError(f"{path}:{line_no}: bad screen comment")
                    screen_w, screen_h = float(parts[1]), float(parts[2])
                continue
            if not saw_header:
                if [c.strip() for c in row] != _HEADER:
                    raise TraceFormatError(
                        f"{path}:{line_no}: expected header {','.join(_HEADER)}"
                    )
                saw_header = True
                continue
            if len(row) != 6:
                raise TraceFormatError(f"{path}:{line_no}: expected 6 fields, got {len(row)}")
            obs, img = row[0], row[1]
            if not obs or not img:
                raise TraceFormatError(f"{path}:{line_no}: empty observer or image id")
            try:
                t, x, y = float(row[2]), float(row[3]), float(row[4])
            except ValueError:
                raise TraceFormatError(f"{path}:{line_no}: non-numeric t/x/y field") from None
            label = _parse_label(row[5].strip(), path, line_no)
            try:
                sample = EyeSample(t=t, x=x, y=y, fixation_label=label)
            except ValueError as err:
                raise TraceFormatError(f"{path}:{line_no}: {err}") from None
            groups.setdefault((obs, img), []).append(sample)
    if not groups:
        raise TraceFormatError(f"{path}: no samples found")
    if screen_w is None or screen_h is None:
        raise TraceFormatError(
            f"{path}: screen dimensions missing (no '# screen W H' line and no config)"
        )
    traces = []
    for (obs, img), samples in groups.items():
        times = [s.t for s in samples]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise TraceFormatError(
                f"{path}: non-monotonic timestamps in group ({obs}, {img})"
            )
        offscreen = sum(
            1
            for s in samples
            if not (0.0 <= s.x <= screen_w and 0.0 <= s.y <= screen_h)
        )
        traces.append(
            EyeTrace(
                observer_id=obs,
                image_id=img,
                screen_w=screen_w,
                screen_h=screen_h,
                samples=samples,
                n_offscreen=offscreen,
            )
        )
    return traces


def write_trace_file(traces: list[EyeTrace], path) -> None:
    """Write traces in the CSV format parse_trace_file consumes.

    The format carries a single screen line, so all traces must share
    screen dimensions.  Floats are written with repr so a parse round-trip
    reproduces them bitwise.
    """
    if not traces:
        raise ValueError("no traces to write")
    dims = {(tr.screen_w, tr.screen_h) for tr in traces}
    if len(dims) != 1:
        raise ValueError("all traces in one file must share screen dimensions")
    (w, h) = dims.pop()
    lines = [f"# screen {_num(w)} {_num(h)}", ",".join(_HEADER)]
    for tr in traces:
        for s in tr.samples:
            label = "" if s.fixation_label is None else ("1" if s.fixation_label else "0")
            lines.append(
                f"{tr.observer_id},{tr.image_id},{_num(s.t)},{_num(s.x)},{_num(s.y)},{label}"
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _num(v: float) -> str:
    return repr(int(v)) if float(v).is_integer() else repr(float(v))


def segment_fixations(trace: EyeTrace, params: SegmentationParams = SegmentationParams()) -> EyeTrace:
    """Return a copy of the trace with every sample labeled.

    If the input is already fully labeled and ``respect_labels`` is set, the
    labels pass through unchanged; otherwise the I-DT rule assigns them.
    """
    if len(trace.samples) < 2:
        raise ValueError("segmentation needs at least 2 samples")
    if params.respect_labels and trace.fully_labeled():
        return trace
    labels = idt_labels(
        [s.t for s in trace.samples],
        [s.x for s in trace.samples],
        [s.y for s in trace.samples],
        params.dispersion_threshold,
        params.min_duration,
    )
    samples = [replace(s, fixation_label=bool(lab)) for s, lab in zip(trace.samples, labels)]
    return replace(trace, samples=samples)


def idt_labels(t, x, y, dispersion_threshold: float, min_duration: float) -> list[bool]:
    """Dispersion-threshold fixation labels for a time-ordered path.

    Greedy scan: open a window spanning at least ``min_duration``; if its
    bounding-box dispersion (width + height) is within threshold, grow it
    while that stays true and mark the window as fixation, else advance one
    sample.
    """
    n = len(t)
    labels = [False] * n
    i = 0
    while i < n:
        j = i
        while j < n and t[j] - t[i] < min_duration:
            j += 1
        if j >= n:
            break  # tail too short to host a full-duration window
        if _dispersion(x, y, i, j) <= dispersion_threshold:
            while j + 1 < n and _dispersion(x, y, i, j + 1) <= dispersion_threshold:
                j += 1
            for m in range(i, j + 1):
                labels[m] = True
            i = j + 1
        else:
            i += 1
    return labels


def _dispersion(x, y, i: int, j: int) -> float:
    xs = x[i : j + 1]
    ys = y[i : j + 1]
    return (max(xs) - min(xs)) + (max(ys) - min(ys))


def nonfixation_pairs(trace: EyeTrace) -> list[tuple[EyeSample, EyeSample]]:
    """Consecutive sample pairs whose endpoints are both saccadic."""
    pairs = []
    for a, b in zip(trace.samples, trace.samples[1:]):
        if a.fixation_label is None or b.fixation_label is None:
            raise ValueError(
                f"unlabeled sample in trace ({trace.observer_id}, {trace.image_id}); "
                "run segment_fixations first"
            )
        if not a.fixation_label and not b.fixation_label:
            pairs.append((a, b))
    return pairs
