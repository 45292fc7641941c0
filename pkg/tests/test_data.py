import math

import numpy as np
import pytest

from stlid import (
    FailureRegion,
    GroundTruth,
    KinematicSample,
    load_dataset,
    load_ground_truth,
    sample_at,
    save_dataset,
    save_ground_truth,
    velocity_at,
)
from stlid.errors import ConsistencyError, DataError, ParseError

from conftest import make_dataset


def write_files(tmp_path, points_rows, series_rows):
    pts = tmp_path / "points.csv"
    ser = tmp_path / "series.csv"
    pts.write_text("id,x,y\n" + "\n".join(points_rows) + "\n")
    ser.write_text("id,t,displacement\n" + "\n".join(series_rows) + "\n")
    return pts, ser


def test_load_well_formed(tmp_path):
    pts, ser = write_files(
        tmp_path,
        ["1,0.0,0.0", "2,1.0,0.0", "3,0.0,1.0"],
        [f"{pid},{t},{pid * 10 + t}" for pid in (1, 2, 3) for t in range(4)],
    )
    ds = load_dataset(pts, ser)
    assert ds.displacement.shape == (3, 4)
    assert ds.start_step == 0
    assert ds.displacement[1, 2] == 22.0


def test_load_unknown_id(tmp_path):
    pts, ser = write_files(tmp_path, ["1,0,0"], ["1,0,1.0", "99,0,2.0"])
    with pytest.raises(ConsistencyError, match="99"):
        load_dataset(pts, ser)


def test_load_nan_cell_names_location(tmp_path):
    pts, ser = write_files(
        tmp_path, ["1,0,0"], ["1,0,1.0", "1,1,NaN"]
    )
    with pytest.raises(DataError) as exc:
        load_dataset(pts, ser)
    msg = str(exc.value)
    assert "1" in msg and "displacement" in msg


def test_load_malformed_row_reports_line(tmp_path):
    pts, ser = write_files(tmp_path, ["1,0,0"], ["1,0,1.0", "1,not_an_int,2.0"])
    with pytest.raises(ParseError, match=":3"):
        load_dataset(pts, ser)


def test_load_bad_header(tmp_path):
    pts = tmp_path / "p.csv"
    pts.write_text("idx,x,y\n1,0,0\n")
    with pytest.raises(ParseError, match="header"):
        load_dataset(pts, pts)


def test_load_non_contiguous_steps(tmp_path):
    pts, ser = write_files(tmp_path, ["1,0,0"], ["1,0,1.0", "1,2,2.0"])
    with pytest.raises(ConsistencyError, match="contiguous"):
        load_dataset(pts, ser)


def test_load_mismatched_step_ranges(tmp_path):
    pts, ser = write_files(
        tmp_path,
        ["1,0,0", "2,1,0"],
        ["1,0,1.0", "1,1,2.0", "2,0,1.0"],
    )
    with pytest.raises(ConsistencyError):
        load_dataset(pts, ser)


def test_load_duplicate_point_id(tmp_path):
    pts, ser = write_files(tmp_path, ["1,0,0", "1,2,0"], ["1,0,1.0"])
    with pytest.raises(ConsistencyError, match="duplicate"):
        load_dataset(pts, ser)


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    disp = rng.normal(0, 1, size=(5, 7)) * np.pi  # awkward decimals
    ds = make_dataset(disp, start_step=10)
    save_dataset(ds, tmp_path / "p.csv", tmp_path / "s.csv")
    back = load_dataset(tmp_path / "p.csv", tmp_path / "s.csv")
    assert back.start_step == 10
    assert np.array_equal(back.displacement, ds.displacement)
    assert np.array_equal(back.coords, ds.coords)


def test_velocity_at_basic():
    ds = make_dataset([[0.0, 2.0, 5.0]])
    assert velocity_at(ds, 0, 2) == 3.0
    assert velocity_at(ds, 0, 1) == 2.0


def test_velocity_constant_series_is_zero():
    ds = make_dataset([[4.0, 4.0, 4.0]])
    assert velocity_at(ds, 0, 1) == 0.0
    assert velocity_at(ds, 0, 2) == 0.0


def test_velocity_at_first_step_errors():
    ds = make_dataset([[0.0, 1.0]])
    with pytest.raises(DataError):
        velocity_at(ds, 0, 0)


def test_velocity_matches_exhaustive_differences():
    rng = np.random.default_rng(8)
    ds = make_dataset(rng.normal(size=(4, 6)))
    for p in range(4):
        for t in range(1, 6):
            expect = ds.displacement[p, t] - ds.displacement[p, t - 1]
            assert velocity_at(ds, p, t) == expect
    assert np.array_equal(ds.velocity_matrix(), np.diff(ds.displacement, axis=1))


def test_sample_at():
    ds = make_dataset([[0.0, 2.0, 5.0]])
    assert sample_at(ds, 0, 2) == KinematicSample(5.0, 3.0)
    ds2 = make_dataset([[1.0, 1.0]])
    assert sample_at(ds2, 0, 1) == KinematicSample(1.0, 0.0)
    with pytest.raises(DataError):
        sample_at(ds2, 0, 0)


def test_dataset_invariants():
    with pytest.raises(DataError, match="unique"):
        make_dataset(np.zeros((2, 3)), ids=[1, 1])
    with pytest.raises(DataError, match="2 time steps"):
        make_dataset(np.zeros((2, 1)))
    bad = np.zeros((2, 3))
    bad[1, 2] = np.inf
    with pytest.raises(DataError, match="non-finite"):
        make_dataset(bad)


def test_ground_truth_round_trip(tmp_path):
    truth = GroundTruth([FailureRegion("c1", 0.5, 1.5, 3.5, 4.5, 17)])
    save_ground_truth(truth, tmp_path / "t.csv")
    back = load_ground_truth(tmp_path / "t.csv")
    assert back.regions == truth.regions


def test_ground_truth_degenerate_rect():
    with pytest.raises(DataError, match="degenerate"):
        FailureRegion("bad", 1.0, 0.0, 1.0, 2.0, 5)


def test_ground_truth_tof_range():
    ds = make_dataset(np.zeros((2, 5)))
    truth = GroundTruth([FailureRegion("late", 0, 0, 1, 1, 99)])
    with pytest.raises(ConsistencyError):
        truth.validate_against(ds)


def test_region_contains():
    r = FailureRegion("r", 0.0, 0.0, 2.0, 2.0, 1)
    mask = r.contains(np.array([[1.0, 1.0], [2.0, 2.0], [2.1, 1.0]]))
    assert mask.tolist() == [True, True, False]


def test_serialization_precision(tmp_path):
    # ugly floats must survive the decimal round trip exactly
    vals = np.array([[1 / 3, math.pi, 1e-17 + 1, np.nextafter(2.0, 3.0)]])
    ds = make_dataset(vals)
    save_dataset(ds, tmp_path / "p.csv", tmp_path / "s.csv")
    back = load_dataset(tmp_path / "p.csv", tmp_path / "s.csv")
    assert np.array_equal(back.displacement, vals)
