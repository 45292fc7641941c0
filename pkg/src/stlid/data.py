"""Data model and file I/O for displacement monitoring grids.

A dataset is a set of monitored points with fixed 2-D coordinates and a
per-point displacement time series (millimetres), sampled at a constant
interval. Velocity is the first difference of displacement, so it is
undefined at the first recorded step; every per-step computation in the
package therefore starts at the second step.

File formats (decimal floats, written with 17 significant digits so that
save/load round-trips are bit-exact):

* points CSV:       header ``id,x,y``, one row per monitored point
* series CSV:       header ``id,t,displacement``, long format; steps must be
  contiguous per point and identical across points
* ground-truth CSV: header ``label,xmin,ymin,xmax,ymax,tof``
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, DataError, ParseError

FLOAT_FMT = ".17g"  # round-trips any float64 exactly


def _fmt(v: float) -> str:
    return format(float(v), FLOAT_FMT)


@dataclass(frozen=True)
class MonitoredPoint:
    """A monitored location: integer id and 2-D position (easting, northing)."""

    id: int
    coord: tuple[float, float]


@dataclass(frozen=True)
class KinematicSample:
    """Per-point, per-step feature vector: (displacement, velocity)."""

    displacement: float
    velocity: float


@dataclass
class MonitoringDataset:
    """Immutable grid of monitored points plus a displacement matrix.

    ``displacement`` has shape (num_points, num_steps); column ``c`` holds the
    displacement at external step ``start_step + c``.
    """

    points: list[MonitoredPoint]
    displacement: np.ndarray
    step_interval_minutes: float = 1.0
    start_step: int = 0

    # derived, filled in __post_init__
    ids: np.ndarray = field(init=False, repr=False)
    coords: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.displacement = np.asarray(self.displacement, dtype=np.float64)
        if self.displacement.ndim != 2:
            raise DataError("displacement must be a 2-D matrix")
        n, t = self.displacement.shape
        if len(self.points) != n:
            raise DataError(
                f"displacement has {n} rows but dataset has {len(self.points)} points"
            )
        if t < 2:
            raise DataError("dataset needs at least 2 time steps")
        if not np.all(np.isfinite(self.displacement)):
            r, c = np.argwhere(~np.isfinite(self.displacement))[0]
            raise DataError(
                f"non-finite displacement for point id {self.points[r].id} "
                f"at step {self.start_step + int(c)}"
            )
        ids = np.array([p.id for p in self.points], dtype=np.int64)
        if len(np.unique(ids)) != len(ids):
            raise DataError("point ids must be unique")
        coords = np.array([p.coord for p in self.points], dtype=np.float64)
        if coords.shape != (n, 2) or not np.all(np.isfinite(coords)):
            raise DataError("point coordinates must be finite 2-D positions")
        if self.step_interval_minutes <= 0:
            raise DataError("step interval must be positive")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "coords", coords)
        self._index_of = {int(i): k for k, i in enumerate(ids)}
        self._vel = None

    @property
    def num_points(self) -> int:
        return self.displacement.shape[0]

    @property
    def num_steps(self) -> int:
        return self.displacement.shape[1]

    @property
    def last_step(self) -> int:
        return self.start_step + self.num_steps - 1

    def index_of(self, point_id: int) -> int:
        try:
            return self._index_of[int(point_id)]
        except KeyError:
            raise ConsistencyError(f"unknown point id {point_id}") from None

    def column(self, step: int) -> int:
        """Map an external step index to a displacement column."""
        c = step - self.start_step
        if not 0 <= c < self.num_steps:
            raise DataError(
                f"step {step} outside [{self.start_step}, {self.last_step}]"
            )
        return c

    def velocity_matrix(self) -> np.ndarray:
        """First differences, shape (num_points, num_steps - 1).

        Column ``c`` is the velocity at external step ``start_step + c + 1``.
        Cached; the dataset is treated as immutable after construction.
        """
        if self._vel is None:
            self._vel = np.diff(self.displacement, axis=1)
            self._vel.setflags(write=False)
        return self._vel

    def samples_at(self, step: int) -> np.ndarray:
        """All points' (displacement, velocity) pairs at ``step``, shape (n, 2)."""
        c = self.column(step)
        if c < 1:
            raise DataError(f"velocity undefined at the first step ({step})")
        out = np.empty((self.num_points, 2), dtype=np.float64)
        out[:, 0] = self.displacement[:, c]
        out[:, 1] = self.velocity_matrix()[:, c - 1]
        return out


def velocity_at(dataset: MonitoringDataset, point_id: int, step: int) -> float:
    """Velocity x_t - x_{t-1} of one point; errors at the first step."""
    i = dataset.index_of(point_id)
    c = dataset.column(step)
    if c < 1:
        raise DataError(
            f"velocity undefined at step {step}: no predecessor sample"
        )
    d = dataset.displacement
    return float(d[i, c] - d[i, c - 1])


def sample_at(dataset: MonitoringDataset, point_id: int, step: int) -> KinematicSample:
    """The (displacement, velocity) sample of one point at one step."""
    v = velocity_at(dataset, point_id, step)
    i = dataset.index_of(point_id)
    return KinematicSample(float(dataset.displacement[i, dataset.column(step)]), v)


@dataclass(frozen=True)
class FailureRegion:
    """Axis-aligned ground-truth rectangle with its time of failure."""

    label: str
    xmin: float
    ymin: float
    xmax: float
    ymax: float
    tof: int

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise DataError(f"degenerate ground-truth rectangle {self.label!r}")

    def contains(self, coords: np.ndarray) -> np.ndarray:
        """Boolean mask of coordinates inside the rectangle (inclusive edges)."""
        coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
        return (
            (coords[:, 0] >= self.xmin)
            & (coords[:, 0] <= self.xmax)
            & (coords[:, 1] >= self.ymin)
            & (coords[:, 1] <= self.ymax)
        )


@dataclass
class GroundTruth:
    """Collection of failure regions; times of failure are external step indices."""

    regions: list[FailureRegion]

    def validate_against(self, dataset: MonitoringDataset) -> None:
        for r in self.regions:
            if not dataset.start_step <= r.tof <= dataset.last_step:
                raise ConsistencyError(
                    f"time of failure {r.tof} for region {r.label!r} outside "
                    f"dataset steps [{dataset.start_step}, {dataset.last_step}]"
                )


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------


def _read_rows(path, expected_header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty file") from None
        if [h.strip() for h in header] != expected_header:
            raise ParseError(
                path, 1, f"expected header {','.join(expected_header)!r}, got {','.join(header)!r}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(expected_header):
                raise ParseError(path, line_no, f"expected {len(expected_header)} fields, got {len(row)}")
            yield line_no, row


def _parse_int(path, line_no, text, what):
    try:
        return int(text)
    except ValueError:
        raise ParseError(path, line_no, f"bad {what}: {text!r}") from None


def _parse_float(path, line_no, text, what, point_id=None, step=None):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(path, line_no, f"bad {what}: {text!r}") from None
    if not math.isfinite(v):
        where = ""
        if point_id is not None:
            where = f" (point id {point_id}, step {step})"
        raise DataError(f"{path}:{line_no}: non-finite {what}{where}: {text!r}")
    return v


def load_points(path) -> list[MonitoredPoint]:
    points = []
    seen = set()
    for line_no, row in _read_rows(path, ["id", "x", "y"]):
        pid = _parse_int(path, line_no, row[0], "id")
        if pid in seen:
            raise ConsistencyError(f"{path}:{line_no}: duplicate point id {pid}")
        seen.add(pid)
        x = _parse_float(path, line_no, row[1], "x coordinate")
        y = _parse_float(path, line_no, row[2], "y coordinate")
        points.append(MonitoredPoint(pid, (x, y)))
    if not points:
        raise DataError(f"{path}: no points")
    return points


def load_dataset(points_file, series_file, step_interval_minutes: float = 1.0) -> MonitoringDataset:
    """Load a dataset from a points CSV and a long-format series CSV.

    Rows are aligned by point id; steps must be contiguous and identical for
    every point. Missing cells are a hard error, as is any non-finite value.
    """
    points = load_points(points_file)
    index = {p.id: k for k, p in enumerate(points)}
    per_point: dict[int, dict[int, float]] = {p.id: {} for p in points}
    for line_no, row in _read_rows(series_file, ["id", "t", "displacement"]):
        pid = _parse_int(series_file, line_no, row[0], "id")
        if pid not in index:
            raise ConsistencyError(
                f"{series_file}:{line_no}: series references unknown point id {pid}"
            )
        t = _parse_int(series_file, line_no, row[1], "step")
        if t in per_point[pid]:
            raise ConsistencyError(
                f"{series_file}:{line_no}: duplicate step {t} for point id {pid}"
            )
        per_point[pid][t] = _parse_float(
            series_file, line_no, row[2], "displacement", point_id=pid, step=t
        )

    step_sets = {pid: sorted(steps) for pid, steps in per_point.items()}
    ref_ids = [p.id for p in points]
    ref_steps = step_sets[ref_ids[0]]
    if not ref_steps:
        raise ConsistencyError(f"{series_file}: no series rows")
    lo, hi = ref_steps[0], ref_steps[-1]
    if ref_steps != list(range(lo, hi + 1)):
        raise ConsistencyError(
            f"{series_file}: steps for point id {ref_ids[0]} are not contiguous"
        )
    n, t = len(points), len(ref_steps)
    matrix = np.empty((n, t), dtype=np.float64)
    for pid, steps in step_sets.items():
        if steps != ref_steps:
            raise ConsistencyError(
                f"{series_file}: point id {pid} covers different steps than point id {ref_ids[0]}"
            )
        row = per_point[pid]
        matrix[index[pid], :] = [row[s] for s in ref_steps]
    return MonitoringDataset(
        points=points,
        displacement=matrix,
        step_interval_minutes=step_interval_minutes,
        start_step=lo,
    )


def save_dataset(dataset: MonitoringDataset, points_file, series_file) -> None:
    """Write a dataset to the documented CSV formats (bit-exact round-trip)."""
    with open(points_file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y"])
        for p in dataset.points:
            w.writerow([p.id, _fmt(p.coord[0]), _fmt(p.coord[1])])
    with open(series_file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "t", "displacement"])
        for i, p in enumerate(dataset.points):
            for c in range(dataset.num_steps):
                w.writerow([p.id, dataset.start_step + c, _fmt(dataset.displacement[i, c])])


def load_ground_truth(path) -> GroundTruth:
    regions = []
    for line_no, row in _read_rows(path, ["label", "xmin", "ymin", "xmax", "ymax", "tof"]):
        vals = [_parse_float(path, line_no, row[k], name)
                for k, name in ((1, "xmin"), (2, "ymin"), (3, "xmax"), (4, "ymax"))]
        tof = _parse_int(path, line_no, row[5], "tof")
        regions.append(FailureRegion(row[0], vals[0], vals[1], vals[2], vals[3], tof))
    return GroundTruth(regions)


def save_ground_truth(truth: GroundTruth, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "xmin", "ymin", "xmax", "ymax", "tof"])
        for r in truth.regions:
            w.writerow([r.label, _fmt(r.xmin), _fmt(r.ymin), _fmt(r.xmax), _fmt(r.ymax), r.tof])
