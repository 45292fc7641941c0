"""Streaming st-LID pipeline: per-step scores, alarm tracking, parallel map.

Time steps are strictly sequential (the alarm tracker is a single-writer
state machine and the spatial prior consumes the previous step's s-LID
field), but within a step every per-point quantity is independent. Points are
therefore split into contiguous chunks that a process pool maps over; the
master gathers chunks in a fixed order, fills sentinels, normalizes, and
advances the detector.

All per-point reductions are row-wise over C-contiguous blocks, so chunk
boundaries cannot change a single bit of the output: running with any
parallelism degree, including 1, yields identical results.

Step layout for a dataset starting at step 0: velocities exist from step 1
(s-LID, bootstrap fused), the spatial prior from step 2, and t-LID needs two
historical velocities, so the first complete st-LID field is at step 3.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import multiprocessing
import numpy as np

from .data import GroundTruth, MonitoringDataset
from .detection import (
    DetectionConfig,
    DetectionEvent,
    DetectionState,
    StLidField,
    default_epsilon,
    st_lid_field,
    update_detection,
)
from .errors import ConfigError
from .fusion import FusionConfig, fuse_rows, spatial_neighbors, _weights_from_sq_distances
from .lid import LidConfig, LidField, _fill_sentinel, lid_rows, t_lid_rows


@dataclass
class StepRecord:
    """Everything the pipeline produced at one step."""

    step: int
    s: LidField
    fused: LidField
    t: LidField | None
    st: StLidField | None
    state: DetectionState
    event: DetectionEvent | None
    seconds: float


@dataclass
class PipelineState:
    """Resumable between-step state; everything else is derived from the
    immutable dataset."""

    next_col: int
    prev_slid: np.ndarray | None
    det_state: DetectionState
    events: list
    t_count: np.ndarray | None = None
    t_mean: np.ndarray | None = None
    t_m2: np.ndarray | None = None


@dataclass
class RunResult:
    """Collected output of a full run."""

    events: list
    lead_times: dict
    s_steps: np.ndarray | None = None
    s_hist: np.ndarray | None = None
    s_valid_hist: np.ndarray | None = None
    fused_hist: np.ndarray | None = None
    fused_valid_hist: np.ndarray | None = None
    t_hist: np.ndarray | None = None
    t_valid_hist: np.ndarray | None = None
    st_steps: np.ndarray | None = None
    st_hist: np.ndarray | None = None
    st_valid_hist: np.ndarray | None = None
    per_step_seconds: np.ndarray | None = None
    final_state: DetectionState | None = None
    epsilon: float | None = None


# ---------------------------------------------------------------------------
# per-chunk kernel (runs identically inline and in worker processes)
# ---------------------------------------------------------------------------

_W: dict = {}


def _init_worker(dataset, lid_config, fusion_config, nbr_idx, weights, bandwidth):
    dataset.velocity_matrix()
    _W.update(
        dataset=dataset,
        lid_config=lid_config,
        fusion_config=fusion_config,
        nbr_idx=nbr_idx,
        weights=weights,
        bandwidth=bandwidth,
    )


def _chunk_kernel(
    dataset, lid_config, fusion_config, nbr_idx, weights, bandwidth, col, lo, hi, prev_slid
):
    from scipy.spatial import cKDTree

    n = dataset.num_points
    s = lid_config.s
    obs_k = fusion_config.effective_obs_k(lid_config)
    kq = max(s, obs_k)
    step = dataset.start_step + col

    samples = dataset.samples_at(step)
    tree = cKDTree(samples)
    dist, _ = tree.query(samples[lo:hi], k=kq + 1)
    dist = dist[:, 1:]

    s_vals, s_valid = lid_rows(dist[:, :s], lid_config)

    fused_vals = fused_valid = None
    if col >= 2:
        idx = nbr_idx[lo:hi]
        if fusion_config.weight_space == "kinematic":
            diff = samples[idx] - samples[lo:hi, None, :]
            dw = np.sqrt((diff**2).sum(axis=2))
            if fusion_config.bandwidth == "median":
                bw = np.maximum(np.median(dw, axis=1), 1e-12)[:, None]
            else:
                bw = float(fusion_config.bandwidth)
            w = _weights_from_sq_distances(dw**2, bw)
        else:
            w = weights[lo:hi]
        fused_vals, fused_valid = fuse_rows(
            prev_slid[idx], w, dist[:, :obs_k], fusion_config.variance_floor
        )

    t_vals = t_valid = None
    if col >= 3:
        vel = dataset.velocity_matrix()
        t_vals, t_valid = t_lid_rows(vel[lo:hi, : col - 1], vel[lo:hi, col - 1], lid_config)

    return s_vals, s_valid, fused_vals, fused_valid, t_vals, t_valid


def _worker_chunk(col, lo, hi, prev_slid):
    return _chunk_kernel(
        _W["dataset"],
        _W["lid_config"],
        _W["fusion_config"],
        _W["nbr_idx"],
        _W["weights"],
        _W["bandwidth"],
        col,
        lo,
        hi,
        prev_slid,
    )


def _static_weights(coords, fusion_config):
    """Neighbor indices plus, for physical weighting, the fixed kernel weights."""
    nbr_idx, nbr_dist = spatial_neighbors(coords, fusion_config.k)
    if fusion_config.weight_space == "kinematic":
        return nbr_idx, None, None
    if fusion_config.bandwidth == "median":
        bw = np.maximum(np.median(nbr_dist, axis=1), 1e-12)[:, None]
    else:
        bw = float(fusion_config.bandwidth)
    weights = _weights_from_sq_distances(nbr_dist**2, bw)
    return nbr_idx, weights, bw


def _pool_context():
    try:
        return multiprocessing.get_context("fork")
    except ValueError:  # platforms without fork
        return multiprocessing.get_context()


def _resolved_detection(dataset, config):
    cfg = DetectionConfig() if config is None else config
    if cfg.epsilon is None:
        cfg = DetectionConfig(
            n=cfg.n,
            epsilon=default_epsilon(dataset.coords),
            threshold=cfg.threshold,
            normalization=cfg.normalization,
        )
    return cfg


def iter_run(
    dataset: MonitoringDataset,
    lid_config: LidConfig | None = None,
    fusion_config: FusionConfig | None = None,
    detection_config: DetectionConfig | None = None,
    parallel: int = 1,
    stop_step: int | None = None,
    state: PipelineState | None = None,
):
    """Yield one StepRecord per step from the first velocity step onward.

    ``parallel`` is the number of worker processes (1 = fully in-process).
    ``stop_step`` ends the run after that external step. ``state`` is updated
    in place after every step, so saving it at any point makes the run
    resumable from the next step; pass a loaded PipelineState to continue.
    """
    lid_config = lid_config or LidConfig()
    fusion_config = fusion_config or FusionConfig()
    detection_config = detection_config or _resolved_detection(dataset, None)
    lid_config.validate()
    fusion_config.validate()
    detection_config.validate()
    if detection_config.epsilon is None:
        detection_config = _resolved_detection(dataset, detection_config)
    if parallel < 1:
        raise ConfigError(f"parallelism degree must be >= 1, got {parallel}")
    n = dataset.num_points
    kq = max(lid_config.s, fusion_config.effective_obs_k(lid_config))
    if n <= kq:
        raise ConfigError(f"dataset has {n} points but neighborhoods need more than {kq}")
    if n <= fusion_config.k:
        raise ConfigError(f"spatial k={fusion_config.k} needs more than k points, got {n}")

    nbr_idx, weights, bandwidth = _static_weights(dataset.coords, fusion_config)
    dataset.velocity_matrix()  # materialize before forking workers

    last_col = dataset.num_steps - 1
    if stop_step is not None:
        last_col = dataset.column(stop_step)
        if last_col < 1:
            raise ConfigError(
                f"pipeline needs velocity; first computable step is {dataset.start_step + 1}"
            )

    if state is None:
        state = PipelineState(next_col=1, prev_slid=None, det_state=DetectionState(), events=[])
    if state.det_state is None:
        state.det_state = DetectionState()
    if detection_config.normalization == "zscore-history" and state.t_count is None:
        state.t_count = np.zeros(n)
        state.t_mean = np.zeros(n)
        state.t_m2 = np.zeros(n)
    first_col = state.next_col
    prev_slid = state.prev_slid
    det_state = state.det_state

    bounds = np.linspace(0, n, max(parallel, 1) + 1).astype(int)
    chunks = [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]

    pool = None
    try:
        if parallel > 1:
            pool = ProcessPoolExecutor(
                max_workers=parallel,
                mp_context=_pool_context(),
                initializer=_init_worker,
                initargs=(dataset, lid_config, fusion_config, nbr_idx, weights, bandwidth),
            )
        for col in range(first_col, last_col + 1):
            t0 = time.perf_counter()
            step = dataset.start_step + col
            if pool is not None:
                futures = [
                    pool.submit(_worker_chunk, col, lo, hi, prev_slid) for lo, hi in chunks
                ]
                parts = [f.result() for f in futures]
            else:
                parts = [
                    _chunk_kernel(
                        dataset, lid_config, fusion_config, nbr_idx, weights, bandwidth,
                        col, lo, hi, prev_slid,
                    )
                    for lo, hi in chunks
                ]

            s_raw = np.concatenate([p[0] for p in parts])
            s_val = np.concatenate([p[1] for p in parts])
            s_filled = _fill_sentinel(s_raw, s_val)
            s_field = LidField(step, s_filled, s_val)

            if col == 1:
                fused_field = LidField(step, s_filled.copy(), s_val.copy())
            else:
                f_raw = np.concatenate([p[2] for p in parts])
                f_val = np.concatenate([p[3] for p in parts])
                fused_field = LidField(step, _fill_sentinel(f_raw, f_val), f_val)

            t_field = None
            st = None
            event = None
            if col >= 3:
                t_raw = np.concatenate([p[4] for p in parts])
                t_val = np.concatenate([p[5] for p in parts])
                t_field = LidField(step, _fill_sentinel(t_raw, t_val), t_val)

                t_stats = None
                if detection_config.normalization == "zscore-history":
                    state.t_count += 1.0
                    delta = t_field.values - state.t_mean
                    state.t_mean += delta / state.t_count
                    state.t_m2 += delta * (t_field.values - state.t_mean)
                    sd = np.sqrt(state.t_m2 / state.t_count)
                    sd[state.t_count < 2] = 0.0
                    t_stats = (state.t_mean.copy(), sd)

                st = st_lid_field(
                    fused_field.values,
                    t_field.values,
                    detection_config,
                    step=step,
                    valid=fused_field.valid & t_field.valid,
                    t_history_stats=t_stats,
                )
                det_state, event = update_detection(
                    det_state, st, dataset.coords, detection_config, dataset.ids
                )

            prev_slid = s_filled
            state.prev_slid = s_filled
            state.det_state = det_state
            state.next_col = col + 1
            if event is not None:
                state.events.append(event)
            yield StepRecord(
                step=step,
                s=s_field,
                fused=fused_field,
                t=t_field,
                st=st,
                state=det_state,
                event=event,
                seconds=time.perf_counter() - t0,
            )
    finally:
        if pool is not None:
            pool.shutdown()


def event_lead_times(events, truth: GroundTruth | None, step_interval_minutes: float):
    """Lead time per ground-truth region: time of failure minus the first
    event inside the region (0 when no event precedes the failure)."""
    leads = {}
    if truth is None:
        return leads
    for region in truth.regions:
        steps = 0
        for ev in sorted(events, key=lambda e: e.detection_step):
            if ev.detection_step <= region.tof and region.contains(
                np.array([ev.location])
            )[0]:
                steps = region.tof - ev.detection_step
                break
        leads[region.label] = (steps, steps * step_interval_minutes)
    return leads


def run_detection(
    dataset: MonitoringDataset,
    truth: GroundTruth | None = None,
    lid_config: LidConfig | None = None,
    fusion_config: FusionConfig | None = None,
    detection_config: DetectionConfig | None = None,
    parallel: int = 1,
    stop_step: int | None = None,
    store: str = "all",
) -> RunResult:
    """Run the full pipeline over the dataset and collect histories.

    ``store`` controls memory: "all" keeps every score family, "st" keeps only
    the st-LID fields, "none" keeps just events and timings.
    """
    if store not in ("all", "st", "none"):
        raise ConfigError(f"store must be 'all', 'st' or 'none', got {store!r}")
    if truth is not None:
        truth.validate_against(dataset)
    events = []
    s_steps, s_rows, s_valid_rows = [], [], []
    fused_rows, fused_valid_rows = [], []
    t_rows, t_valid_rows = [], []
    st_steps, st_rows, st_valid_rows = [], [], []
    seconds = []
    last_state = None
    epsilon = None
    detection_config = _resolved_detection(dataset, detection_config)
    epsilon = detection_config.epsilon

    for rec in iter_run(
        dataset,
        lid_config=lid_config,
        fusion_config=fusion_config,
        detection_config=detection_config,
        parallel=parallel,
        stop_step=stop_step,
    ):
        seconds.append(rec.seconds)
        last_state = rec.state
        if rec.event is not None:
            events.append(rec.event)
        if store == "all":
            s_steps.append(rec.step)
            s_rows.append(rec.s.values)
            s_valid_rows.append(rec.s.valid)
            fused_rows.append(rec.fused.values)
            fused_valid_rows.append(rec.fused.valid)
            if rec.t is not None:
                t_rows.append(rec.t.values)
                t_valid_rows.append(rec.t.valid)
        if store in ("all", "st") and rec.st is not None:
            st_steps.append(rec.step)
            st_rows.append(rec.st.values)
            st_valid_rows.append(rec.st.valid)

    result = RunResult(
        events=events,
        lead_times=event_lead_times(events, truth, dataset.step_interval_minutes),
        per_step_seconds=np.asarray(seconds),
        final_state=last_state,
        epsilon=epsilon,
    )
    if store == "all":
        result.s_steps = np.asarray(s_steps)
        result.s_hist = np.vstack(s_rows) if s_rows else None
        result.s_valid_hist = np.vstack(s_valid_rows) if s_valid_rows else None
        result.fused_hist = np.vstack(fused_rows) if fused_rows else None
        result.fused_valid_hist = np.vstack(fused_valid_rows) if fused_valid_rows else None
        result.t_hist = np.vstack(t_rows) if t_rows else None
        result.t_valid_hist = np.vstack(t_valid_rows) if t_valid_rows else None
    if store in ("all", "st"):
        result.st_steps = np.asarray(st_steps)
        result.st_hist = np.vstack(st_rows) if st_rows else None
        result.st_valid_hist = np.vstack(st_valid_rows) if st_valid_rows else None
    return result


# ---------------------------------------------------------------------------
# checkpointing and CSV output
# ---------------------------------------------------------------------------


def save_checkpoint(path, state: PipelineState) -> None:
    det = state.det_state
    meta = {
        "next_col": state.next_col,
        "candidate_coord": det.candidate_coord,
        "candidate_id": det.candidate_id,
        "hits": det.hits,
        "fired": det.fired,
        "has_prev": state.prev_slid is not None,
        "has_tstats": state.t_count is not None,
        "events": [
            [e.detection_step, e.point_id, e.location[0], e.location[1], e.value]
            for e in state.events
        ],
        "history": [
            [h[0], h[1], None if h[2] is None else list(h[2]), h[3], h[4]]
            for h in det.history
        ],
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    if state.prev_slid is not None:
        arrays["prev_slid"] = state.prev_slid
    if state.t_count is not None:
        arrays["t_count"] = state.t_count
        arrays["t_mean"] = state.t_mean
        arrays["t_m2"] = state.t_m2
    np.savez(path, **arrays)


def load_checkpoint(path) -> PipelineState:
    with np.load(path) as npz:
        meta = json.loads(bytes(npz["meta"]).decode())
        prev = npz["prev_slid"].copy() if meta["has_prev"] else None
        t_count = npz["t_count"].copy() if meta["has_tstats"] else None
        t_mean = npz["t_mean"].copy() if meta["has_tstats"] else None
        t_m2 = npz["t_m2"].copy() if meta["has_tstats"] else None
    det = DetectionState(
        candidate_coord=None
        if meta["candidate_coord"] is None
        else tuple(meta["candidate_coord"]),
        candidate_id=meta["candidate_id"],
        hits=meta["hits"],
        fired=meta["fired"],
        history=[
            (h[0], h[1], None if h[2] is None else tuple(h[2]), h[3], h[4])
            for h in meta["history"]
        ],
    )
    events = [
        DetectionEvent(int(e[0]), int(e[1]), (e[2], e[3]), e[4]) for e in meta["events"]
    ]
    return PipelineState(
        next_col=meta["next_col"],
        prev_slid=prev,
        det_state=det,
        events=events,
        t_count=t_count,
        t_mean=t_mean,
        t_m2=t_m2,
    )


def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_scores_csv(path, result: RunResult, dataset: MonitoringDataset) -> None:
    """Per-step score dump: ``t,point_id,s_lid,fused_s_lid,t_lid,st_lid``.

    Covers the steps where every family is defined (store="all" runs).
    """
    if result.s_hist is None or result.st_hist is None:
        raise ConfigError("score dump needs a run stored with store='all'")
    st_index = {int(s): i for i, s in enumerate(result.st_steps)}
    s_index = {int(s): i for i, s in enumerate(result.s_steps)}
    t_offset = int(result.s_steps[0]) + 2  # first step with a t-LID row
    with open(path, "w") as fh:
        fh.write("t,point_id,s_lid,fused_s_lid,t_lid,st_lid\n")
        for step, i_st in st_index.items():
            i_s = s_index[step]
            i_t = step - t_offset
            for j, pid in enumerate(dataset.ids):
                fh.write(
                    f"{step},{pid},{_fmt(result.s_hist[i_s, j])},"
                    f"{_fmt(result.fused_hist[i_s, j])},"
                    f"{_fmt(result.t_hist[i_t, j])},"
                    f"{_fmt(result.st_hist[i_st, j])}\n"
                )


def write_events_csv(path, events) -> None:
    """Event log: ``detection_step,point_id,x,y,st_lid``."""
    with open(path, "w") as fh:
        fh.write("detection_step,point_id,x,y,st_lid\n")
        for e in events:
            fh.write(
                f"{e.detection_step},{e.point_id},{_fmt(e.location[0])},"
                f"{_fmt(e.location[1])},{_fmt(e.value)}\n"
            )
