"""Precision and lead-time evaluation against ground-truth failure regions.

Precision is the share of a method's detections (its high-risk points at the
time of failure) whose coordinates fall inside any ground-truth rectangle;
with zero detections it is undefined, which is reported as None rather
than 0. Recall is deliberately not computed: a reliable count of all true
failures does not exist for this problem.

Lead time scans backward from the time of failure for the earliest step from
which the method's selected points stay inside the region at every subsequent
step; the strictest reading (zero tolerated excursions) is the default.
Baselines are denoised to their top-10 selection before the scan, while the
st-LID detector keeps its full detection set.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .baselines import (
    DEFAULT_EDQ_LEVELS,
    dbscan,
    edq_select,
    kmeans2,
    lof,
)
from .data import FailureRegion, GroundTruth, MonitoringDataset
from .detection import DetectionConfig
from .errors import ConfigError, StlidError
from .fusion import FusionConfig
from .lid import LidConfig
from .pipeline import RunResult, run_detection

METHOD_NAMES = ("kmeans", "dbscan", "lof", "edq", "slid", "stlid")
TOP_SET_SIZE = 10


def precision(detected_coords, truth: GroundTruth):
    """(precision | None, correct, total) of detections against any region."""
    coords = np.asarray(detected_coords, dtype=np.float64).reshape(-1, 2)
    total = coords.shape[0]
    if total == 0:
        return None, 0, 0
    inside = np.zeros(total, dtype=bool)
    for region in truth.regions:
        inside |= region.contains(coords)
    correct = int(inside.sum())
    return correct / total, correct, total


def lead_time(
    top_sets,
    region: FailureRegion,
    coords: np.ndarray,
    step_interval_minutes: float,
    first_step: int,
    slack: int = 0,
):
    """Steps and wall-clock minutes gained over the failure.

    ``top_sets`` maps a step to the method's selected point indices (or None
    where the method is undefined). A step is consistent when the selection
    is non-empty and entirely inside the region; ``slack`` excursion steps may
    be forgiven without breaking the backward scan.
    """
    coords = np.asarray(coords, dtype=np.float64)

    def consistent(step):
        sel = top_sets(step)
        if sel is None or len(sel) == 0:
            return False
        return bool(region.contains(coords[np.asarray(sel, dtype=int)]).all())

    if region.tof < first_step or not consistent(region.tof):
        return 0, 0.0
    t_det = region.tof
    budget = slack
    step = region.tof - 1
    while step >= first_step:
        if consistent(step):
            t_det = step
        elif budget > 0:
            budget -= 1
        else:
            break
        step -= 1
    steps = region.tof - t_det
    return steps, steps * step_interval_minutes


def format_lead(steps: int, minutes: float) -> str:
    """Human form used in reports: '80 (3.3 hrs)', '1726 (3.0 days)', '0'."""
    if steps == 0:
        return "0"
    hours = minutes / 60.0
    if hours < 1.0:
        return f"{steps} ({minutes:.1f} mins)"
    if hours < 24.0:
        return f"{steps} ({hours:.1f} hrs)"
    return f"{steps} ({hours / 24.0:.1f} days)"


@dataclass
class RegionEval:
    label: str
    precision: float | None
    correct: int
    total: int
    lead_steps: int
    lead_minutes: float


@dataclass
class EvaluationReport:
    method: str
    regions: list[RegionEval] = field(default_factory=list)
    timing_seconds: float | None = None  # one detection pass at the eval step
    per_step_seconds: tuple | None = None  # (median, max) across pipeline steps

    def region(self, label: str) -> RegionEval:
        for r in self.regions:
            if r.label == label:
                return r
        raise KeyError(label)


@dataclass
class BaselineConfig:
    """Knobs for the comparison methods used by the benchmark."""

    dbscan_eps: float | None = None  # None: 2x median kinematic NN spacing per step
    dbscan_min_pts: int = 4
    lof_k: int = 20
    lof_cutoff: float = 1.5
    edq_levels: tuple = DEFAULT_EDQ_LEVELS


def _kinematic_eps(samples: np.ndarray) -> float:
    from scipy.spatial import cKDTree

    dist, _ = cKDTree(samples).query(samples, k=2)
    return max(2.0 * float(np.median(dist[:, 1])), 1e-9)


class _MethodAdapter:
    """Per-method detection sets and top sets with one shared memo."""

    def __init__(self, name, dataset, run, blc, threshold=0.5):
        self.name = name
        self.ds = dataset
        self.run = run
        self.blc = blc
        self.threshold = threshold
        self._memo = {}

    def _compute(self, step):
        ds = self.ds
        name = self.name
        try:
            if name == "kmeans":
                return kmeans2(ds.displacement[:, ds.column(step)])
            if name == "dbscan":
                samples = ds.samples_at(step)
                eps = self.blc.dbscan_eps or _kinematic_eps(samples)
                return dbscan(samples, eps, self.blc.dbscan_min_pts)
            if name == "lof":
                return lof(ds.samples_at(step), self.blc.lof_k, self.blc.lof_cutoff)
            if name == "edq":
                return edq_select(ds, self.blc.edq_levels, end_step=step)
            if name == "slid":
                return self._slid_sets(step)
            if name == "stlid":
                return self._stlid_sets(step)
        except StlidError:
            return None
        raise ConfigError(f"unknown method {name!r}; valid: {', '.join(METHOD_NAMES)}")

    def _slid_sets(self, step):
        run = self.run
        pos = np.flatnonzero(run.s_steps == step)
        if len(pos) == 0:
            return None
        v = run.s_hist[pos[0]]
        span = v.max() - v.min()
        if span == 0:
            return None
        norm = (v - v.min()) / span
        high = np.flatnonzero(norm >= 0.5)
        order = np.lexsort((high, -norm[high]))
        return {"detections": high, "top": high[order][:TOP_SET_SIZE]}

    def _stlid_sets(self, step):
        run = self.run
        pos = np.flatnonzero(run.st_steps == step)
        if len(pos) == 0:
            return None
        mask = run.st_valid_hist[pos[0]] & (run.st_hist[pos[0]] >= self.threshold)
        det = np.flatnonzero(mask)
        return {"detections": det, "top": det}

    def _result(self, step):
        if step not in self._memo:
            self._memo[step] = self._compute(step)
        return self._memo[step]

    def detections_at(self, step):
        r = self._result(step)
        if r is None:
            return None
        if isinstance(r, dict):
            return r["detections"]
        return np.flatnonzero(r.high_risk)

    def top_set_at(self, step):
        r = self._result(step)
        if r is None:
            return None
        if isinstance(r, dict):
            return r["top"]
        return r.ranking[:TOP_SET_SIZE]

    def first_step(self):
        if self.name == "kmeans":
            return self.ds.start_step
        if self.name == "stlid":
            return self.ds.start_step + 3
        return self.ds.start_step + 1

    def time_once(self, step) -> float:
        t0 = time.perf_counter()
        self._compute(step)
        return time.perf_counter() - t0


def benchmark(
    dataset: MonitoringDataset,
    truth: GroundTruth,
    methods=METHOD_NAMES,
    lid_config: LidConfig | None = None,
    fusion_config: FusionConfig | None = None,
    detection_config: DetectionConfig | None = None,
    baseline_config: BaselineConfig | None = None,
    parallel: int = 1,
    run: RunResult | None = None,
    max_backscan: int | None = None,
    slack: int = 0,
) -> list[EvaluationReport]:
    """Evaluate each method's precision and lead time on every truth region.

    A prior pipeline RunResult (store="all") can be passed to avoid rerunning
    st-LID; otherwise one run is executed with the given configs.
    """
    truth.validate_against(dataset)
    for m in methods:
        if m not in METHOD_NAMES:
            raise ConfigError(f"unknown method {m!r}; valid: {', '.join(METHOD_NAMES)}")
    blc = baseline_config or BaselineConfig()
    needs_run = any(m in ("slid", "stlid") for m in methods)
    if needs_run and run is None:
        run = run_detection(
            dataset,
            truth=truth,
            lid_config=lid_config,
            fusion_config=fusion_config,
            detection_config=detection_config,
            parallel=parallel,
            store="all",
        )
    if run is not None and run.s_hist is None and "slid" in methods:
        raise ConfigError("benchmark needs a run stored with store='all'")

    det_threshold = (detection_config or DetectionConfig()).threshold
    reports = []
    for name in methods:
        adapter = _MethodAdapter(name, dataset, run, blc, threshold=det_threshold)
        report = EvaluationReport(method=name)
        if name == "stlid" and run is not None and run.per_step_seconds is not None:
            report.per_step_seconds = (
                float(np.median(run.per_step_seconds)),
                float(run.per_step_seconds.max()),
            )
        report.timing_seconds = adapter.time_once(truth.regions[0].tof)
        for region in truth.regions:
            det = adapter.detections_at(region.tof)
            coords_det = dataset.coords[det] if det is not None else np.empty((0, 2))
            prec, correct, total = precision(coords_det, truth)
            first = adapter.first_step()
            if max_backscan is not None:
                first = max(first, region.tof - max_backscan)
            steps, minutes = lead_time(
                adapter.top_set_at,
                region,
                dataset.coords,
                dataset.step_interval_minutes,
                first_step=first,
                slack=slack,
            )
            report.regions.append(
                RegionEval(region.label, prec, correct, total, steps, minutes)
            )
        reports.append(report)
    return reports


def report_table(reports: list[EvaluationReport]) -> str:
    """Aligned text table: precision and lead time per method and region."""
    if not reports:
        return ""
    labels = [r.label for r in reports[0].regions]
    rows = [["metric", "method", *labels, "time"]]
    for rep in reports:
        cells = [
            "n.a." if r.precision is None else f"{r.precision:.3f}" for r in rep.regions
        ]
        timing = f"{rep.timing_seconds:.3f} s" if rep.timing_seconds is not None else ""
        rows.append(["Prec.", rep.method, *cells, timing])
    for rep in reports:
        cells = [format_lead(r.lead_steps, r.lead_minutes) for r in rep.regions]
        per_step = (
            f"{rep.per_step_seconds[0]:.3f} s/step"
            if rep.per_step_seconds is not None
            else ""
        )
        rows.append(["Lead", rep.method, *cells, per_step])
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return "\n".join(
        "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
        for row in rows
    )


def report_csv(reports: list[EvaluationReport]) -> str:
    lines = ["method,region,precision,correct,total,lead_steps,lead_minutes,timing_seconds"]
    for rep in reports:
        for r in rep.regions:
            prec = "" if r.precision is None else format(r.precision, ".17g")
            timing = "" if rep.timing_seconds is None else format(rep.timing_seconds, ".17g")
            lines.append(
                f"{rep.method},{r.label},{prec},{r.correct},{r.total},"
                f"{r.lead_steps},{format(r.lead_minutes, '.17g')},{timing}"
            )
    return "\n".join(lines) + "\n"
