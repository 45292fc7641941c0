"""Command-line front end: generate, detect, monitor, benchmark, validate.

Configuration comes from an optional flat key=value file plus repeated
``--set key=value`` overrides; ``--print-config`` dumps the effective values
so every run is self-documenting. Exit codes: 0 success, 1 usage error,
2 data error, 3 configuration error.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import pipeline
from .data import (
    load_dataset,
    load_ground_truth,
    save_dataset,
    save_ground_truth,
)
from .detection import DetectionConfig
from .errors import ConfigError, DataError, StlidError
from .fusion import FusionConfig
from .lid import LidConfig
from .metrics import (
    METHOD_NAMES,
    BaselineConfig,
    benchmark,
    report_csv,
    report_table,
)
from .synthetic import CreepScenarioSpec, generate_creep_scenario

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CONFIG = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


@dataclass
class RunSettings:
    lid: LidConfig = field(default_factory=LidConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    parallel: int = 1
    step_interval_minutes: float | None = None

    def validate(self):
        self.lid.validate()
        self.fusion.validate()
        self.detection.validate()
        if self.parallel < 1:
            raise ConfigError("parallel must be >= 1")


_SETTING_CASTS = {
    "lid.s": int,
    "lid.zero_distance_policy": str,
    "lid.epsilon_floor": float,
    "fusion.k": int,
    "fusion.obs_k": int,
    "fusion.bandwidth": lambda v: v if v == "median" else float(v),
    "fusion.variance_floor": float,
    "fusion.weight_space": str,
    "detection.n": int,
    "detection.epsilon": float,
    "detection.threshold": float,
    "detection.normalization": str,
    "baseline.dbscan_eps": float,
    "baseline.dbscan_min_pts": int,
    "baseline.lof_k": int,
    "baseline.lof_cutoff": float,
    "baseline.edq_levels": lambda v: tuple(float(x) for x in v.split(";")),
    "parallel": int,
    "step_interval_minutes": float,
}


def parse_kv_file(path) -> dict:
    values = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{line_no}: expected key=value, got {text!r}")
            key, val = text.split("=", 1)
            values[key.strip()] = val.strip()
    return values


def build_settings(file_values: dict | None, overrides: list[str] | None) -> RunSettings:
    settings = RunSettings()
    merged = dict(file_values or {})
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        merged[key.strip()] = val.strip()
    for key, raw in merged.items():
        if key not in _SETTING_CASTS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            val = _SETTING_CASTS[key](raw)
        except ValueError:
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
        if "." in key:
            section, name = key.split(".", 1)
            setattr(getattr(settings, section), name, val)
        else:
            setattr(settings, key, val)
    settings.validate()
    return settings


def format_settings(settings: RunSettings) -> str:
    lines = []
    for section in ("lid", "fusion", "detection", "baseline"):
        obj = getattr(settings, section)
        for f in fields(obj):
            val = getattr(obj, f.name)
            if f.name == "edq_levels":
                val = ";".join(str(v) for v in val)
            lines.append(f"{section}.{f.name}={val}")
    lines.append(f"parallel={settings.parallel}")
    lines.append(f"step_interval_minutes={settings.step_interval_minutes}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

_SPEC_CASTS = {
    "grid_nx": int,
    "grid_ny": int,
    "num_steps": int,
    "noise_sd": float,
    "region": lambda v: tuple(float(x) for x in v.split(",")),
    "time_of_failure": int,
    "steady_rate": float,
    "onset_step": int,
    "accel_exponent": float,
    "seed": int,
    "spacing": float,
    "drift_max": float,
    "transient_amp": float,
    "transient_tau": float,
    "rate_floor": float,
    "bump_width": float,
    "rate_jitter": float,
    "slip_theta": float,
    "slip_rho": float,
    "step_interval_minutes": float,
}


def load_scenario_spec(path) -> CreepScenarioSpec:
    values = parse_kv_file(path)
    kwargs = {}
    for key, raw in values.items():
        if key not in _SPEC_CASTS:
            raise ConfigError(f"{path}: unknown scenario field {key!r}")
        try:
            kwargs[key] = _SPEC_CASTS[key](raw)
        except ValueError:
            raise ConfigError(f"{path}: bad value for field {key!r}: {raw!r}") from None
    missing = {"grid_nx", "grid_ny", "num_steps"} - set(kwargs)
    if missing:
        raise ConfigError(f"{path}: missing scenario fields: {', '.join(sorted(missing))}")
    return CreepScenarioSpec(**kwargs)


def cmd_generate(args) -> int:
    spec = load_scenario_spec(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    dataset, truth = generate_creep_scenario(spec)
    save_dataset(dataset, args.points, args.series)
    if args.truth:
        save_ground_truth(truth, args.truth)
    print(
        f"generated {dataset.num_points} points x {dataset.num_steps} steps "
        f"(seed {spec.seed}) -> {args.points}, {args.series}"
        + (f", {args.truth}" if args.truth else "")
    )
    return EXIT_OK


def _load_inputs(args, settings):
    interval = settings.step_interval_minutes or 1.0
    dataset = load_dataset(args.points, args.series, step_interval_minutes=interval)
    truth = load_ground_truth(args.truth) if getattr(args, "truth", None) else None
    return dataset, truth


def cmd_detect(args) -> int:
    settings = build_settings(
        parse_kv_file(args.config) if args.config else None, args.set
    )
    if args.parallel is not None:
        settings.parallel = args.parallel
    if args.print_config:
        print(format_settings(settings))
    dataset, truth = _load_inputs(args, settings)
    stop = args.at_step
    if stop is not None and stop < dataset.start_step + 3:
        raise ConfigError(
            f"--at-step must be >= {dataset.start_step + 3} "
            "(velocity, fusion bootstrap and temporal history come first)"
        )
    result = pipeline.run_detection(
        dataset,
        truth=truth,
        lid_config=settings.lid,
        fusion_config=settings.fusion,
        detection_config=settings.detection,
        parallel=settings.parallel,
        stop_step=stop,
        store="all" if args.scores else "st",
    )
    if args.scores:
        pipeline.write_scores_csv(args.scores, result, dataset)
    if args.events:
        pipeline.write_events_csv(args.events, result.events)
    for ev in result.events:
        print(
            f"EVENT step={ev.detection_step} point={ev.point_id} "
            f"x={ev.location[0]:g} y={ev.location[1]:g} st={ev.value:.4f}"
        )
    for label, (steps, minutes) in result.lead_times.items():
        print(f"lead[{label}] = {steps} steps ({minutes:.1f} min)")
    if not result.events:
        print("no events")
    return EXIT_OK


def cmd_monitor(args) -> int:
    settings = build_settings(
        parse_kv_file(args.config) if args.config else None, args.set
    )
    if args.parallel is not None:
        settings.parallel = args.parallel
    dataset, truth = _load_inputs(args, settings)
    state = None
    if args.resume:
        if not args.checkpoint:
            raise ConfigError("--resume needs --checkpoint")
        state = pipeline.load_checkpoint(args.checkpoint)
        print(f"resuming at step {dataset.start_step + state.next_col}")
    if state is None:
        state = pipeline.PipelineState(
            next_col=1, prev_slid=None, det_state=None, events=[]
        )

    sleep_s = 0.0
    if args.realtime_factor > 0:
        sleep_s = dataset.step_interval_minutes * 60.0 * args.realtime_factor
    n_since_ckpt = 0
    for rec in pipeline.iter_run(
        dataset,
        lid_config=settings.lid,
        fusion_config=settings.fusion,
        detection_config=settings.detection,
        parallel=settings.parallel,
        state=state,
    ):
        if rec.st is not None:
            last = rec.state.history[-1]
            print(
                f"step={rec.step} argmax={last[1]} st={last[3]:.4f} hits={last[4]}"
            )
        else:
            print(f"step={rec.step} (warm-up)")
        if rec.event is not None:
            ev = rec.event
            print(
                f"EVENT step={ev.detection_step} point={ev.point_id} "
                f"x={ev.location[0]:g} y={ev.location[1]:g} st={ev.value:.4f}"
            )
        if args.checkpoint:
            n_since_ckpt += 1
            if n_since_ckpt >= args.checkpoint_every:
                n_since_ckpt = 0
                pipeline.save_checkpoint(args.checkpoint, state)
        if sleep_s:
            time.sleep(sleep_s)
    if args.events:
        pipeline.write_events_csv(args.events, state.events)
    print(f"done: {len(state.events)} event(s)")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    settings = build_settings(
        parse_kv_file(args.config) if args.config else None, args.set
    )
    if args.parallel is not None:
        settings.parallel = args.parallel
    methods = tuple(m.strip() for m in args.methods.split(",")) if args.methods else METHOD_NAMES
    for m in methods:
        if m not in METHOD_NAMES:
            raise _UsageError(
                f"unknown method {m!r}; valid methods: {', '.join(METHOD_NAMES)}"
            )
    dataset, truth = _load_inputs(args, settings)
    if truth is None:
        raise ConfigError("benchmark needs --truth")
    reports = benchmark(
        dataset,
        truth,
        methods=methods,
        lid_config=settings.lid,
        fusion_config=settings.fusion,
        detection_config=settings.detection,
        baseline_config=settings.baseline,
        parallel=settings.parallel,
        max_backscan=args.max_backscan,
    )
    table = report_table(reports)
    print(table)
    if args.table:
        with open(args.table, "w") as fh:
            fh.write(table + "\n")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(report_csv(reports))
    if args.method_scores:
        _dump_method_scores(args.method_scores, dataset, truth, methods, settings)
    return EXIT_OK


def _dump_method_scores(path, dataset, truth, methods, settings):
    """Per-point likelihoods of the comparison methods at the failure step."""
    from .baselines import (
        dbscan as _dbscan,
        edq_select,
        kmeans2,
        lof as _lof,
        raw_slid_baseline,
        write_baseline_scores_csv,
    )
    from .metrics import _kinematic_eps

    tof = truth.regions[0].tof
    results = []
    for name in methods:
        if name == "kmeans":
            results.append(kmeans2(dataset.displacement[:, dataset.column(tof)], step=tof))
        elif name == "dbscan":
            samples = dataset.samples_at(tof)
            eps = settings.baseline.dbscan_eps or _kinematic_eps(samples)
            results.append(_dbscan(samples, eps, settings.baseline.dbscan_min_pts, step=tof))
        elif name == "lof":
            results.append(
                _lof(dataset.samples_at(tof), settings.baseline.lof_k,
                     settings.baseline.lof_cutoff, step=tof)
            )
        elif name == "edq":
            results.append(edq_select(dataset, settings.baseline.edq_levels, end_step=tof))
        elif name == "slid":
            results.append(raw_slid_baseline(dataset, tof, settings.lid))
    write_baseline_scores_csv(path, results, dataset)


def _validate_scores(path):
    import csv as _csv

    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "point_id", "s_lid", "fused_s_lid", "t_lid", "st_lid"]:
            raise DataError(f"{path}: bad scores header: {header}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 6:
                raise DataError(f"{path}:{line_no}: expected 6 fields")
            int(row[0]), int(row[1])
            vals = [float(v) for v in row[2:]]
            if not all(np.isfinite(vals)):
                raise DataError(f"{path}:{line_no}: non-finite score")
            if not 0.0 <= vals[3] <= 1.0:
                raise DataError(f"{path}:{line_no}: st_lid outside [0, 1]")


def _validate_events(path):
    import csv as _csv

    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader, None)
        if header != ["detection_step", "point_id", "x", "y", "st_lid"]:
            raise DataError(f"{path}: bad events header: {header}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise DataError(f"{path}:{line_no}: expected 5 fields")
            int(row[0]), int(row[1])
            x, y, v = (float(c) for c in row[2:])
            if not (np.isfinite(x) and np.isfinite(y) and 0.0 <= v <= 1.0):
                raise DataError(f"{path}:{line_no}: bad event row")


def cmd_validate(args) -> int:
    kind, path = args.kind, args.path
    if kind == "points":
        from .data import load_points

        load_points(path)
    elif kind == "dataset":
        if not args.series:
            raise ConfigError("validate dataset needs PATH (points) and --series")
        load_dataset(path, args.series)
    elif kind == "truth":
        load_ground_truth(path)
    elif kind == "scores":
        _validate_scores(path)
    elif kind == "events":
        _validate_events(path)
    print(f"{kind} file {path}: OK")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--points", required=True, help="points CSV (id,x,y)")
    p.add_argument("--series", required=True, help="series CSV (id,t,displacement)")
    p.add_argument("--truth", help="ground-truth CSV (label,xmin,ymin,xmax,ymax,tof)")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--parallel", type=int, help="worker processes (default 1)")
    p.add_argument("--print-config", action="store_true", help="dump effective config")


def build_parser() -> _Parser:
    parser = _Parser(prog="stlid", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic scenario")
    g.add_argument("spec", help="scenario spec file (key=value)")
    g.add_argument("--points", required=True)
    g.add_argument("--series", required=True)
    g.add_argument("--truth")
    g.add_argument("--seed", type=int, help="override the spec seed")
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("detect", help="run the detector over a dataset")
    _add_common(d)
    d.add_argument("--at-step", type=int, help="stop after this step")
    d.add_argument("--scores", help="write per-step score dump CSV")
    d.add_argument("--events", help="write event log CSV")
    d.set_defaults(func=cmd_detect)

    m = sub.add_parser("monitor", help="streaming replay with per-step output")
    _add_common(m)
    m.add_argument("--realtime-factor", type=float, default=0.0,
                   help="sleep this fraction of the real step interval per step (0 = fast)")
    m.add_argument("--checkpoint", help="checkpoint file for resumable runs")
    m.add_argument("--checkpoint-every", type=int, default=50)
    m.add_argument("--resume", action="store_true", help="resume from --checkpoint")
    m.add_argument("--events", help="write event log CSV")
    m.set_defaults(func=cmd_monitor)

    b = sub.add_parser("benchmark", help="evaluate methods against ground truth")
    _add_common(b)
    b.add_argument("--methods", help=f"comma list from: {', '.join(METHOD_NAMES)}")
    b.add_argument("--max-backscan", type=int, help="cap the lead-time scan depth")
    b.add_argument("--table", help="write the text table here")
    b.add_argument("--csv", help="write the CSV report here")
    b.add_argument("--method-scores",
                   help="dump per-point method scores at the failure step to this CSV")
    b.set_defaults(func=cmd_benchmark)

    v = sub.add_parser("validate", help="check a file against its documented schema")
    v.add_argument("kind", choices=["points", "dataset", "truth", "scores", "events"])
    v.add_argument("path")
    v.add_argument("--series", help="series CSV when validating a dataset")
    v.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"stlid: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"stlid: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"stlid: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except StlidError as exc:
        print(f"stlid: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"stlid: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
