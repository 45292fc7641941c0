import numpy as np
import pytest

from stlid import (
    DetectionConfig,
    FusionConfig,
    LidConfig,
    fuse_all,
    iter_run,
    run_detection,
    s_lid_all,
    t_lid_field,
)
from stlid.errors import ConfigError
from stlid.pipeline import (
    PipelineState,
    load_checkpoint,
    save_checkpoint,
    write_events_csv,
    write_scores_csv,
)

from conftest import make_dataset

SMALL = dict(lid_config=LidConfig(s=6), fusion_config=FusionConfig(k=4))


def test_parallel_degrees_bit_identical(grid_noise_dataset):
    runs = [
        run_detection(grid_noise_dataset, parallel=p, **SMALL) for p in (1, 2, 3)
    ]
    for other in runs[1:]:
        assert np.array_equal(runs[0].s_hist, other.s_hist)
        assert np.array_equal(runs[0].fused_hist, other.fused_hist)
        assert np.array_equal(runs[0].t_hist, other.t_hist)
        assert np.array_equal(runs[0].st_hist, other.st_hist)
        assert runs[0].events == other.events


def test_step_layout(grid_noise_dataset):
    recs = list(iter_run(grid_noise_dataset, **SMALL, stop_step=4))
    assert [r.step for r in recs] == [1, 2, 3, 4]
    assert recs[0].st is None and recs[1].st is None
    assert recs[2].st is not None and recs[3].st is not None
    # bootstrap: the first fused field is exactly the raw field
    assert np.array_equal(recs[0].fused.values, recs[0].s.values)


def test_fields_match_standalone_functions(grid_noise_dataset):
    ds = grid_noise_dataset
    recs = {r.step: r for r in iter_run(ds, **SMALL, stop_step=5)}
    lid_cfg, fus_cfg = SMALL["lid_config"], SMALL["fusion_config"]
    s4 = s_lid_all(ds, 4, lid_cfg)
    assert np.allclose(recs[4].s.values, s4.values, rtol=1e-12)
    t4 = t_lid_field(ds, 4, lid_cfg)
    assert np.allclose(recs[4].t.values, t4.values, rtol=1e-12)
    fused4 = fuse_all(ds, recs[3].s.values, 4, fus_cfg, lid_cfg)
    assert np.allclose(recs[4].fused.values, fused4.values, rtol=1e-12)


def test_store_modes(grid_noise_dataset):
    full = run_detection(grid_noise_dataset, store="all", **SMALL)
    st_only = run_detection(grid_noise_dataset, store="st", **SMALL)
    lean = run_detection(grid_noise_dataset, store="none", **SMALL)
    assert full.s_hist is not None and full.t_hist is not None
    assert st_only.s_hist is None and st_only.st_hist is not None
    assert lean.st_hist is None and lean.per_step_seconds is not None
    assert np.array_equal(full.st_hist, st_only.st_hist)
    with pytest.raises(ConfigError):
        run_detection(grid_noise_dataset, store="some", **SMALL)


def test_stop_step(grid_noise_dataset):
    res = run_detection(grid_noise_dataset, stop_step=10, **SMALL)
    assert res.s_steps[-1] == 10
    with pytest.raises(ConfigError):
        run_detection(grid_noise_dataset, stop_step=0, **SMALL)


def test_checkpoint_resume_matches_uninterrupted(grid_noise_dataset, tmp_path):
    ds = grid_noise_dataset
    straight = run_detection(ds, **SMALL)

    state = PipelineState(next_col=1, prev_slid=None, det_state=None, events=[])
    first_half = []
    for rec in iter_run(ds, **SMALL, stop_step=20, state=state):
        if rec.st is not None:
            first_half.append(rec.st.values)
    save_checkpoint(tmp_path / "ck.npz", state)

    resumed = load_checkpoint(tmp_path / "ck.npz")
    second_half = []
    for rec in iter_run(ds, **SMALL, state=resumed):
        if rec.st is not None:
            second_half.append(rec.st.values)
    rebuilt = np.vstack(first_half + second_half)
    assert np.array_equal(rebuilt, straight.st_hist)
    assert resumed.events == straight.events


def test_checkpoint_roundtrip_detection_state(grid_noise_dataset, tmp_path):
    ds = grid_noise_dataset
    state = PipelineState(next_col=1, prev_slid=None, det_state=None, events=[])
    for _ in iter_run(ds, **SMALL, stop_step=12, state=state):
        pass
    save_checkpoint(tmp_path / "ck.npz", state)
    back = load_checkpoint(tmp_path / "ck.npz")
    assert back.next_col == state.next_col
    assert back.det_state.hits == state.det_state.hits
    assert back.det_state.candidate_coord == state.det_state.candidate_coord
    assert back.det_state.history == state.det_state.history
    assert np.array_equal(back.prev_slid, state.prev_slid)


def test_history_normalization_mode(grid_noise_dataset):
    cfg = DetectionConfig(normalization="zscore-history")
    res = run_detection(grid_noise_dataset, detection_config=cfg, store="st", **SMALL)
    default = run_detection(grid_noise_dataset, store="st", **SMALL)
    assert res.st_hist.shape == default.st_hist.shape
    assert not np.array_equal(res.st_hist, default.st_hist)


def test_raw_normalization_floor(grid_noise_dataset):
    # raw LID values are positive, so every sigmoid exceeds 0.5 and the
    # product exceeds 0.25: the documented weakness of the unnormalized mode
    cfg = DetectionConfig(normalization="raw")
    res = run_detection(grid_noise_dataset, detection_config=cfg, store="st", **SMALL)
    assert res.st_hist.min() > 0.25


def test_run_detection_lead_times(small_scenario):
    ds, truth = small_scenario
    res = run_detection(ds, truth=truth, store="st")
    assert len(res.events) == 1
    region = truth.regions[0]
    assert region.contains(np.array([res.events[0].location]))[0]
    steps, minutes = res.lead_times["failure"]
    assert steps > 0
    assert minutes == steps * ds.step_interval_minutes


def test_neighborhood_size_guard():
    ds = make_dataset(np.random.default_rng(0).normal(size=(8, 6)),
                      coords=np.random.default_rng(1).normal(size=(8, 2)))
    with pytest.raises(ConfigError):
        run_detection(ds, lid_config=LidConfig(s=8), fusion_config=FusionConfig(k=2))
    with pytest.raises(ConfigError):
        run_detection(ds, lid_config=LidConfig(s=3), fusion_config=FusionConfig(k=8))
    with pytest.raises(ConfigError):
        run_detection(ds, parallel=0, lid_config=LidConfig(s=3), fusion_config=FusionConfig(k=2))


def test_score_and_event_csv(grid_noise_dataset, tmp_path):
    res = run_detection(grid_noise_dataset, store="all", **SMALL)
    scores = tmp_path / "scores.csv"
    events = tmp_path / "events.csv"
    write_scores_csv(scores, res, grid_noise_dataset)
    write_events_csv(events, res.events)
    lines = scores.read_text().splitlines()
    assert lines[0] == "t,point_id,s_lid,fused_s_lid,t_lid,st_lid"
    n = grid_noise_dataset.num_points
    assert len(lines) == 1 + n * len(res.st_steps)
    first = lines[1].split(",")
    assert int(first[0]) == int(res.st_steps[0])
    assert float(first[5]) == res.st_hist[0, 0]  # 17-digit round trip
    assert events.read_text().splitlines()[0] == "detection_step,point_id,x,y,st_lid"
    with pytest.raises(ConfigError):
        write_scores_csv(scores, run_detection(grid_noise_dataset, store="st", **SMALL),
                         grid_noise_dataset)
