"""Score fusion and the persistence-based failure alarm.

The fused s-LID and t-LID scores are squashed through a sigmoid and
multiplied, so a point scores high only when it is outlying in both the
spatial and the temporal sense. Raw LID values are strictly positive, which
keeps every sigmoid above 0.5 and the product above 0.25; the default
therefore z-scores each family across the points of the step first, making
the fixed 0.5 alarm threshold meaningful. ``raw`` mode applies the sigmoids
directly and ``zscore-history`` normalizes each point's t-LID against its own
running history instead of the cross-section.

An alarm fires when the field's argmax stays inside a small epsilon-ball and
at or above the threshold for n consecutive steps. The ball center slides to
the newest argmax so that fluctuation between adjacent points is tolerated
while slow drift cannot accumulate beyond epsilon. Ties at the argmax break
toward the lowest point id; runs are therefore reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError

NORMALIZATION_MODES = ("raw", "zscore", "zscore-history")


def sigmoid(x):
    """Logistic function 1 / (1 + exp(-x)), elementwise on arrays."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def zscore(values: np.ndarray) -> np.ndarray:
    """Population z-score; an all-equal input maps to all zeros."""
    v = np.asarray(values, dtype=np.float64)
    sd = v.std()
    if sd == 0:
        return np.zeros_like(v)
    return (v - v.mean()) / sd


@dataclass
class DetectionConfig:
    """Alarm parameters. ``epsilon`` of None derives 2x the median
    nearest-neighbor spacing of the monitored grid at run time."""

    n: int = 10
    epsilon: float | None = None
    threshold: float = 0.5
    normalization: str = "zscore"

    def validate(self) -> None:
        if self.n < 1:
            raise ConfigError(f"persistence length n must be >= 1, got {self.n}")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if not 0 < self.threshold < 1:
            raise ConfigError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.normalization not in NORMALIZATION_MODES:
            raise ConfigError(
                f"normalization must be one of {NORMALIZATION_MODES}, got {self.normalization!r}"
            )


def default_epsilon(coords: np.ndarray) -> float:
    """Twice the median nearest-neighbor spacing of the coordinates."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape[0] < 2:
        raise ConfigError("need at least two points to derive epsilon")
    dist, _ = cKDTree(coords).query(coords, k=2)
    return 2.0 * float(np.median(dist[:, 1]))


@dataclass
class StLidField:
    """Per-point st-LID probabilities at one step.

    ``valid`` marks points whose underlying neighborhoods were non-degenerate;
    invalid points keep a value (computed from the sentinel fill) but are
    excluded from the alarm argmax.
    """

    step: int
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if np.any((v < 0) | (v > 1)):
            raise ValueError("st-LID values must lie in [0, 1]")
        self.values = v
        self.valid = np.asarray(self.valid, dtype=bool)


def st_lid_field(
    fused_slids,
    t_lids,
    config: DetectionConfig | None = None,
    step: int = 0,
    valid=None,
    t_history_stats: tuple[np.ndarray, np.ndarray] | None = None,
) -> StLidField:
    """Combine fused s-LID and t-LID scores into per-point probabilities.

    For ``zscore-history`` normalization, ``t_history_stats`` must supply each
    point's running (mean, std) of past t-LID values; points with fewer than
    two records get a neutral score of zero.
    """
    config = config or DetectionConfig()
    config.validate()
    s = np.asarray(fused_slids, dtype=np.float64)
    t = np.asarray(t_lids, dtype=np.float64)
    if s.shape != t.shape:
        raise ValueError(f"score families differ in length: {s.shape} vs {t.shape}")
    if config.normalization == "raw":
        s_norm, t_norm = s, t
    elif config.normalization == "zscore":
        s_norm, t_norm = zscore(s), zscore(t)
    else:
        if t_history_stats is None:
            raise ConfigError("zscore-history normalization needs t_history_stats")
        mean, sd = t_history_stats
        t_norm = np.where(sd > 0, (t - mean) / np.where(sd > 0, sd, 1.0), 0.0)
        s_norm = zscore(s)
    values = sigmoid(s_norm) * sigmoid(t_norm)
    if valid is None:
        valid = np.ones(s.shape, dtype=bool)
    return StLidField(step=step, values=values, valid=valid)


@dataclass(frozen=True)
class DetectionEvent:
    """An alarm: the argmax held inside the epsilon-ball at or above the
    threshold for n consecutive steps."""

    detection_step: int
    point_id: int
    location: tuple[float, float]
    value: float


@dataclass
class DetectionState:
    """Persistence tracker for the consecutive-step alarm rule.

    ``hits`` counts qualifying consecutive steps, capped at n; ``fired`` marks
    that the current chain already produced its event, so an unbroken chain
    never emits twice. ``history`` records (step, point_id, coord, value,
    hits) per update, enough to replay any alarm decision.
    """

    candidate_coord: tuple[float, float] | None = None
    candidate_id: int | None = None
    hits: int = 0
    fired: bool = False
    history: list = field(default_factory=list)


def update_detection(
    state: DetectionState,
    fld: StLidField,
    coords: np.ndarray,
    config: DetectionConfig,
    point_ids: np.ndarray | None = None,
) -> tuple[DetectionState, DetectionEvent | None]:
    """Advance the persistence tracker by one step; returns the new state and
    the alarm event if the chain just reached n qualifying steps."""
    config.validate()
    if config.epsilon is None:
        raise ConfigError("epsilon must be resolved before detection updates")
    coords = np.asarray(coords, dtype=np.float64)
    values = fld.values
    if point_ids is None:
        point_ids = np.arange(len(values))
    if coords.shape[0] != len(values):
        raise ValueError("coords and field must be aligned")

    new = DetectionState(
        candidate_coord=state.candidate_coord,
        candidate_id=state.candidate_id,
        hits=state.hits,
        fired=state.fired,
        history=list(state.history),
    )

    usable = fld.valid & np.isfinite(values)
    if not usable.any():
        # nothing to track this step: the chain is broken
        new.candidate_coord = None
        new.candidate_id = None
        new.hits = 0
        new.fired = False
        new.history.append((fld.step, None, None, None, 0))
        return new, None

    vmax = values[usable].max()
    tied = usable & (values == vmax)
    arg = int(np.flatnonzero(tied)[np.argmin(point_ids[tied])])
    x_hat = (float(coords[arg, 0]), float(coords[arg, 1]))
    above = vmax >= config.threshold

    if new.candidate_coord is None:
        if above:
            new.candidate_coord = x_hat
            new.candidate_id = int(point_ids[arg])
            new.hits = 1
            new.fired = False
        else:
            new.candidate_coord = None
            new.candidate_id = None
            new.hits = 0
            new.fired = False
    else:
        gap = math.hypot(
            x_hat[0] - new.candidate_coord[0], x_hat[1] - new.candidate_coord[1]
        )
        if gap < config.epsilon and above:
            new.hits = min(new.hits + 1, config.n)
            new.candidate_coord = x_hat
            new.candidate_id = int(point_ids[arg])
        else:
            new.candidate_coord = x_hat
            new.candidate_id = int(point_ids[arg])
            new.hits = 1 if above else 0
            new.fired = False

    event = None
    if new.hits >= config.n and not new.fired:
        event = DetectionEvent(
            detection_step=fld.step,
            point_id=int(point_ids[arg]),
            location=x_hat,
            value=float(vmax),
        )
        new.fired = True
    new.history.append((fld.step, int(point_ids[arg]), x_hat, float(vmax), new.hits))
    return new, event
