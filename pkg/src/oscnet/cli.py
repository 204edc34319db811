"""Command-line entry point.

Subcommands: ``simulate`` (roll a saved network forward), ``certify``
(stability certificate for a saved network), ``bench`` (random-bank accuracy
and throughput tables), ``sysid`` (fit a network to generated plant data),
``control`` (closed-loop setpoint runs against a plant), and ``dataset``
(write generated trajectories to disk).

Conventions shared by every subcommand: ``--config`` points at a JSON file,
``--seed`` feeds all randomness, ``--out`` is a directory that receives the
delimited results plus rendered figures.  Exit codes: 0 on success, 1 for
configuration problems (bad flags, malformed or invalid config JSON), 2 for
numerical failures (divergence, loss of finiteness).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from ._util import NumericalError, ParameterError, dumps17
from .bench import bench_accuracy, bench_throughput
from .control import (
    PSATID,
    PSATID_FF,
    ControllerGains,
    closed_loop_run,
    sample_setpoints,
    scaled_gains,
)
from .integrators import IntegratorSpec, Trajectory, rollout
from .network import field_w
from .params import load_params, materialized, params_from_json, params_to_json
from .plants import PLANT_KINDS, make_plant
from .plots import (
    bench_figure,
    closed_loop_figure,
    fit_history_figure,
    trajectory_figure,
)
from .stability import certify
from .sysid import (
    FitConfig,
    fit,
    generate_dataset,
    rollout_rmse,
    warm_start_params,
)

__all__ = ["main", "cli"]


class CliError(Exception):
    """Configuration-level failure; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    """Argparse that reports usage problems as CliError instead of exiting."""

    def error(self, message):
        raise CliError(f"{message}\n{self.format_usage()}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="oscnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="path to a JSON config")
        sp.add_argument("--seed", type=int, default=0, help="seed for all randomness")
        sp.add_argument("--out", help="output directory (created if missing)")

    common(sub.add_parser("simulate", help="roll a saved network forward"))
    common(sub.add_parser("certify", help="stability certificate for a saved network"))
    common(sub.add_parser("sysid", help="fit a network to generated plant data"))
    common(sub.add_parser("control", help="closed-loop setpoint tracking runs"))
    common(sub.add_parser("dataset", help="write generated trajectories to disk"))

    bench = sub.add_parser("bench", help="integration accuracy/throughput tables")
    common(bench, config_required=False)
    bench.add_argument("--configs", type=int, default=100, help="number of sampled banks")
    bench.add_argument("--horizon", type=float, default=60.0, help="rollout length [s]")
    bench.add_argument("--n", type=int, default=50, help="oscillators per bank")
    bench.add_argument("--underdamped", action="store_true",
                       help="restrict damping ratios below one and add the specialized method")
    bench.add_argument("--throughput", action="store_true",
                       help="also measure single-threaded wall time per method")
    bench.add_argument("--repeats", type=int, default=3,
                       help="throughput repeats (minimum is reported)")
    return parser


# ---------------------------------------------------------------------------
# config plumbing


def _load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(
            f"malformed JSON in {path}: {exc.msg} at line {exc.lineno}, column {exc.colno}"
        ) from exc
    if not isinstance(obj, dict):
        raise CliError(f"config {path} must hold a JSON object")
    return obj


def _params_from_config(cfg: dict, config_path):
    """Network parameters from an inline ``params`` object or a ``params_path``."""
    if "params" in cfg:
        return params_from_json(json.dumps(cfg["params"]))
    if "params_path" in cfg:
        path = Path(cfg["params_path"])
        if not path.is_absolute():
            path = Path(config_path).parent / path
        return load_params(path)
    raise CliError("config needs either 'params' (inline) or 'params_path'")


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _pick(cfg: dict, key: str, default):
    value = cfg.get(key, default)
    return value


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise CliError(f"config is missing required key {key!r}")
    return cfg[key]


def _write_trajectory_csv(path: Path, traj: Trajectory) -> None:
    n = traj.n
    m = 0 if traj.inputs is None else traj.inputs.shape[1]
    header = (
        ["t"]
        + [f"pos_{i}" for i in range(n)]
        + [f"vel_{i}" for i in range(n)]
        + [f"u_{i}" for i in range(m)]
    )
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for k in range(traj.times.size):
            row = [f"{traj.times[k]:.17g}"]
            row += [f"{v:.17g}" for v in traj.states[k]]
            if m:
                row += [f"{v:.17g}" for v in traj.inputs[k]]
            writer.writerow(row)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    p = _params_from_config(cfg, args.config)
    horizon = float(_require(cfg, "horizon"))
    spec = IntegratorSpec(
        method=_pick(cfg, "method", "rk4"),
        dt=float(_pick(cfg, "dt", 1e-3)),
        rtol=float(_pick(cfg, "rtol", 1e-8)),
        atol=float(_pick(cfg, "atol", 1e-10)),
    )
    y0 = np.asarray(_pick(cfg, "y0", np.zeros(2 * p.n)), dtype=float)
    if y0.shape != (2 * p.n,):
        raise CliError(f"y0 must have {2 * p.n} entries")
    forcing = cfg.get("forcing")
    u_fn = None
    if forcing is not None:
        tau = np.asarray(forcing, dtype=float)
        if tau.shape != (p.n,):
            raise CliError(f"forcing must have {p.n} entries")
        u_fn = lambda t: tau
    mats = materialized(p)
    field = lambda y, u=None, t=0.0: field_w(p, y, u, mats)
    traj = rollout(
        spec, field, y0, u_fn=u_fn, t0=0.0, t1=horizon,
        sample_dt=cfg.get("sample_dt"),
    )
    if not np.all(np.isfinite(traj.states)):
        raise NumericalError("simulation left the finite range")
    out = _out_dir(args)
    if out is not None:
        _write_trajectory_csv(out / "trajectory.csv", traj)
        trajectory_figure(traj, title="network rollout").savefig(out / "trajectory.png", dpi=120)
        (out / "simulate.json").write_text(dumps17({
            "horizon": horizon,
            "method": spec.method,
            "dt": spec.dt,
            "samples": int(traj.times.size),
            "final_state": traj.states[-1],
        }))
    else:
        print(f"rolled {traj.times.size} samples to t={traj.times[-1]:g}s; "
              f"final |y|={np.linalg.norm(traj.states[-1]):.6g}")
    return 0


def _certificate_json(cert) -> dict:
    return {
        "certified": bool(cert.certified),
        "reason": cert.reason,
        "mu": cert.mu,
        "theta": cert.theta,
        "equilibrium": cert.equilibrium,
        "lam_min_pv": cert.lam_min_pv,
        "lam_max_pv": cert.lam_max_pv,
        "lam_min_pvdot": cert.lam_min_pvdot,
        "mu_v": cert.mu_v,
        "mu_vdot": cert.mu_vdot,
    }


def _cmd_certify(args) -> int:
    try:
        p = load_params(args.config)
    except OSError as exc:
        raise CliError(f"cannot read network file {args.config}: {exc}") from exc
    cert = certify(p)
    text = dumps17(_certificate_json(cert))
    print(text, end="")
    out = _out_dir(args)
    if out is not None:
        (out / "certificate.json").write_text(text)
    return 0


def _cmd_bench(args) -> int:
    methods = ("high_order", "euler", "cfa_con")
    if args.underdamped:
        methods = methods + ("cfa_udcon",)
    report = bench_accuracy(
        n_configs=args.configs,
        horizon=args.horizon,
        methods=methods,
        n=args.n,
        underdamped_only=args.underdamped,
        seed0=args.seed,
    )
    summary = report.summary()
    if args.throughput:
        summary["throughput"] = bench_throughput(
            methods=("reference",) + methods,
            repeats=args.repeats,
            horizon=args.horizon,
            n=args.n,
            underdamped_only=args.underdamped,
            seed=args.seed,
        )
    out = _out_dir(args)
    if out is not None:
        with open(out / "bench.csv", "w", newline="\n") as fh:
            for row in report.csv_rows():
                fh.write(row + "\n")
        (out / "bench_summary.json").write_text(dumps17(summary))
        bench_figure(summary).savefig(out / "bench.png", dpi=120)
    else:
        for row in report.csv_rows():
            print(row)
    return 0


def _cmd_sysid(args) -> int:
    cfg = _load_config(args.config)
    kind = _require(cfg, "kind")
    data_keys = (
        "n_train", "n_val", "n_test", "horizon", "sample_dt",
        "input_scale", "start_scale",
    )
    data_kwargs = {k: cfg[k] for k in data_keys if k in cfg}
    dataset = generate_dataset(kind, seed=args.seed, **data_kwargs)
    fit_cfg = FitConfig(**cfg.get("fit", {}))
    init = warm_start_params(dataset) if cfg.get("warm_start", False) else None
    result = fit(dataset, fit_cfg, seed=args.seed, init=init)
    test_split = dataset.test if dataset.test else dataset.val
    test_rmse = (
        rollout_rmse(result.params, test_split, fit_cfg.spec) if test_split else None
    )
    out = _out_dir(args)
    summary = {
        "kind": kind,
        "epochs_run": len(result.history),
        "best_val_loss": result.best_val_loss,
        "test_position_rmse": test_rmse,
        "checkpoints": [epoch for epoch, _ in result.checkpoints],
    }
    if out is not None:
        (out / "model.json").write_text(params_to_json(result.params))
        with open(out / "history.csv", "w", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "train_loss", "val_loss", "lr"])
            for h in result.history:
                writer.writerow([
                    h["epoch"],
                    f"{h['train_loss']:.17g}",
                    f"{h['val_loss']:.17g}",
                    f"{h['lr']:.17g}",
                ])
        fit_history_figure(result.history).savefig(out / "fit.png", dpi=120)
        (out / "result.json").write_text(dumps17(summary))
    print(dumps17(summary), end="")
    return 0


def _control_gains(cfg: dict, model, mode: str) -> ControllerGains:
    spec = cfg.get("gains", "scaled")
    if spec == "scaled":
        return scaled_gains(model, mode)
    if spec == "stock":
        from .control import default_gains

        return default_gains(model.n, mode)
    if isinstance(spec, dict):
        return ControllerGains(
            kp=np.asarray(spec["kp"], dtype=float),
            ki=np.asarray(spec["ki"], dtype=float),
            kd=np.asarray(spec["kd"], dtype=float),
            sat_slope=float(spec.get("sat_slope", 1.0)),
            mode=mode,
        )
    raise CliError("gains must be 'scaled', 'stock', or an object with kp/ki/kd")


def _cmd_control(args) -> int:
    cfg = _load_config(args.config)
    plant_kind = _pick(cfg, "plant", "pcc")
    if plant_kind not in PLANT_KINDS:
        raise CliError(f"unknown plant {plant_kind!r}; expected one of {PLANT_KINDS}")
    plant = make_plant(plant_kind)
    model = _params_from_config(cfg, args.config)
    mode = _pick(cfg, "mode", PSATID)
    if mode not in (PSATID, PSATID_FF):
        raise CliError(f"mode must be {PSATID!r} or {PSATID_FF!r}")
    if "setpoints" in cfg:
        setpoints = np.asarray(cfg["setpoints"], dtype=float)
    else:
        setpoints = sample_setpoints(
            args.seed,
            count=int(_pick(cfg, "setpoint_count", 7)),
            n=model.n,
            bound=float(_pick(cfg, "setpoint_bound", 5 * np.pi)),
        )
    durations = _pick(cfg, "durations", 5.0)
    gains = _control_gains(cfg, model, mode)
    traj, metrics = closed_loop_run(
        plant,
        model,
        gains,
        setpoints,
        durations,
        control_hz=float(_pick(cfg, "control_hz", 100.0)),
        plant_dt=float(_pick(cfg, "plant_dt", 1e-4)),
        method=_pick(cfg, "method", "rk4"),
    )
    out = _out_dir(args)

    def clean(value):
        # a diverged run leaves inf/nan in the error metrics
        if isinstance(value, list):
            return [clean(v) for v in value]
        if isinstance(value, float) and not np.isfinite(value):
            return None
        return value

    report = {
        "mode": mode,
        "setpoints": setpoints,
        "rmse": clean(metrics["rmse"]),
        "settling_times": metrics["settling_times"],
        "steady_state_errors": clean(metrics["steady_state_errors"]),
        "diverged": metrics["diverged"],
    }
    if out is not None:
        _write_trajectory_csv(out / "closed_loop.csv", traj)
        closed_loop_figure(
            traj, setpoints, durations, float(_pick(cfg, "control_hz", 100.0))
        ).savefig(out / "closed_loop.png", dpi=120)
        (out / "metrics.json").write_text(dumps17(report))
    print(dumps17(report), end="")
    if metrics["diverged"]:
        raise NumericalError("closed-loop run diverged")
    return 0


def _cmd_dataset(args) -> int:
    cfg = _load_config(args.config)
    kind = _require(cfg, "kind")
    out = _out_dir(args)
    if out is None:
        raise CliError("dataset requires --out (one CSV per trajectory)")
    keys = (
        "n_train", "n_val", "n_test", "horizon", "sample_dt",
        "input_scale", "start_scale",
    )
    kwargs = {k: cfg[k] for k in keys if k in cfg}
    dataset = generate_dataset(kind, seed=args.seed, **kwargs)
    manifest = {"kind": kind, "seed": args.seed, "splits": {}}
    for split in ("train", "val", "test"):
        files = []
        for idx, traj in enumerate(getattr(dataset, split)):
            name = f"{split}_{idx:03d}.csv"
            _write_trajectory_csv(out / name, traj)
            files.append(name)
        manifest["splits"][split] = files
    manifest["sample_dt"] = dataset.sample_dt
    manifest["state_dim"] = dataset.state_dim
    (out / "manifest.json").write_text(dumps17(manifest))
    print(f"wrote {sum(len(v) for v in manifest['splits'].values())} trajectories to {out}")
    return 0


_HANDLERS = {
    "simulate": _cmd_simulate,
    "certify": _cmd_certify,
    "bench": _cmd_bench,
    "sysid": _cmd_sysid,
    "control": _cmd_control,
    "dataset": _cmd_dataset,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except CliError as exc:
        print(f"oscnet: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return _HANDLERS[args.command](args)
    except CliError as exc:
        print(f"oscnet: {exc}", file=sys.stderr)
        return 1
    except ParameterError as exc:
        print(f"oscnet: invalid configuration: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"oscnet: numerical failure: {exc}", file=sys.stderr)
        return 2


def cli(argv) -> int:
    """Programmatic entry point; same contract as the console script."""
    return main(argv)
