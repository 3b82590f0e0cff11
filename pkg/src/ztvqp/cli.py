"""Command-line front end: ``ztvqp solve|compare|robot|oracle --config FILE``.

Exit codes: 0 success, 1 run aborted, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dynamics import NoiseKind, NoiseModel, Scheme, SchemeConfig, default_zeta
from .integrator import (IntegratorConfig, Method, format_float, perturbed_start, settling_time,
                         simulate, steady_state_residual, write_csv, write_header)
from .oracle import EnumerationSizeError, InfeasibleError, reference_trajectory
from .problem import BUILTIN_INSTANCES, get_instance, static_instance

logger = logging.getLogger("ztvqp")

OUTPUT_ENV = "ZTVQP_OUTPUT_DIR"
ROBOT_INSTANCE = "robot_clover"
EXPERIMENTS = ("solve", "compare", "robot", "oracle")
EXIT_OK, EXIT_ABORT, EXIT_CONFIG = 0, 1, 2

# noise conditions of the standard comparison
DEFAULT_COMPARE_NOISES = (
    {"kind": "NONE"},
    {"kind": "SIN_SCALED", "level": 0.1},
    {"kind": "CONSTANT", "level": 0.5},
    {"kind": "SIN_SCALED", "level": 1.0},
)


class ConfigError(ValueError):
    def __init__(self, where: str, msg: str):
        super().__init__(f"{where}: {msg}")
        self.where = where


@dataclass
class ExperimentConfig:
    experiment: str
    instance: str | dict
    schemes: list
    noise: NoiseModel
    integrator: IntegratorConfig
    seed: int
    output_dir: Path | None
    perturbation: float = 1.0
    auto_zeta: list = field(default_factory=list)
    zeta_mode: str = "component"
    section: dict = field(default_factory=dict)
    robot: dict = field(default_factory=dict)
    noises: list = field(default_factory=list)

    def resolved(self) -> dict:
        """Plain dictionary of every setting that affects the numbers."""
        def plain(obj):
            if dataclasses.is_dataclass(obj):
                return {k: plain(v) for k, v in dataclasses.asdict(obj).items()}
            if isinstance(obj, dict):
                return {k: plain(v) for k, v in obj.items()}
            if isinstance(obj, (list, tuple)):
                return [plain(v) for v in obj]
            if hasattr(obj, "value"):
                return obj.value
            return obj

        out = {
            "experiment": self.experiment, "instance": self.instance,
            "schemes": [plain(s) for s in self.schemes], "integrator": plain(self.integrator),
            "seed": self.seed, "perturbation": self.perturbation, "zeta_mode": self.zeta_mode,
        }
        if self.experiment == "compare":
            out["noises"] = [plain(n) for n in self.noises]
        else:
            out["noise"] = plain(self.noise)
        if self.section:
            out[self.experiment] = self.section
        if self.robot:
            out["robot"] = plain(self.robot)
        return out


def _table(raw: dict, key: str) -> dict:
    val = raw.get(key, {})
    if not isinstance(val, dict):
        raise ConfigError(key, "must be a table")
    return val


def _check_keys(where: str, table: dict, allowed) -> None:
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise ConfigError(where, f"unknown field(s) {', '.join(map(repr, extra))}")


def _build(where: str, factory, kwargs: dict):
    try:
        return factory(**kwargs)
    except TypeError as exc:
        raise ConfigError(where, str(exc)) from exc
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from exc


def _parse_noise(where: str, table: dict, seed: int) -> NoiseModel:
    _check_keys(where, table, ("kind", "level"))
    kind = str(table.get("kind", "NONE")).upper()
    if kind not in NoiseKind.__members__:
        raise ConfigError(where + ".kind", f"unknown noise kind {kind!r}; "
                          f"expected one of {', '.join(NoiseKind.__members__)}")
    level = float(table.get("level", 1.0 if kind == "COMBINED" else 0.0))
    return NoiseModel(NoiseKind(kind), level, seed)


_SCHEME_FIELDS = {f.name for f in dataclasses.fields(SchemeConfig)}


def _parse_schemes(raw_list, where="schemes"):
    if raw_list is None:
        raw_list = [{}]
    if not isinstance(raw_list, list):
        raise ConfigError(where, "must be an array of tables")
    out, auto = [], []
    for i, entry in enumerate(raw_list):
        w = f"{where}[{i}]"
        if isinstance(entry, str):
            entry = {"scheme": entry}
        if not isinstance(entry, dict):
            raise ConfigError(w, "must be a table or a scheme name")
        _check_keys(w, entry, _SCHEME_FIELDS)
        name = str(entry.get("scheme", "PTC_NT_FOZNN")).upper()
        if name not in Scheme.__members__:
            raise ConfigError(w + ".scheme", f"unknown scheme {name!r}; "
                              f"expected one of {', '.join(Scheme.__members__)}")
        kwargs = dict(entry, scheme=Scheme(name))
        auto.append("zeta" not in entry)
        out.append(_build(w, SchemeConfig, kwargs))
    return out, auto


def _with_zeta(scheme: SchemeConfig, auto: bool, noise: NoiseModel, k: int, mode: str) -> SchemeConfig:
    if not auto:
        return scheme
    zeta = default_zeta(noise, k, mode)
    # xi follows zeta unless it was given explicitly
    xi = zeta / scheme.gamma if math.isclose(scheme.xi, scheme.zeta / scheme.gamma) else scheme.xi
    return dataclasses.replace(scheme, zeta=zeta, xi=xi)


def _parse_instance(raw) -> str | dict:
    if isinstance(raw, str):
        if raw not in BUILTIN_INSTANCES and raw != ROBOT_INSTANCE:
            names = ", ".join([*sorted(BUILTIN_INSTANCES), ROBOT_INSTANCE])
            raise ConfigError("instance", f"unknown built-in instance {raw!r}; expected one of {names}")
        return raw
    if isinstance(raw, dict):
        need = ("omega", "p", "a_mat", "b", "c_mat", "d")
        _check_keys("instance", raw, need + ("label",))
        missing = [k for k in need if k not in raw]
        if missing:
            raise ConfigError("instance", f"inline coefficients lack {', '.join(missing)}")
        return raw
    raise ConfigError("instance", "must be a built-in name or a table of coefficients")


def _instance_object(spec):
    if isinstance(spec, str):
        return get_instance(spec)
    try:
        return static_instance(**{k: np.array(v, dtype=float) if k != "label" else v
                                  for k, v in spec.items()})
    except ValueError as exc:
        raise ConfigError("instance", str(exc)) from exc


_TOP_KEYS = ("experiment", "instance", "schemes", "noise", "integrator", "seed", "output_dir",
             "start", "solve", "compare", "robot", "oracle")
_SECTION_KEYS = {
    "solve": ("threshold", "window"),
    "compare": ("window", "noises"),
    "oracle": ("t_range", "times", "samples"),
    "robot": ("petals", "radius", "period", "mu", "kappa1", "kappa2", "theta0", "center",
              "plane_u", "plane_v", "dh_rows", "theta_min", "theta_max", "vel_min", "vel_max"),
}


def load_config(path, experiment: str, seed: int | None = None) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config ({exc.strerror})") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"parse error: {exc}") from exc
    return parse_config(raw, experiment, seed)


def parse_config(raw: dict, experiment: str, seed: int | None = None) -> ExperimentConfig:
    _check_keys("config", raw, _TOP_KEYS)
    declared = raw.get("experiment", experiment)
    if declared != experiment:
        raise ConfigError("experiment", f"config declares {declared!r} but {experiment!r} was requested")
    if seed is None:
        seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", f"must be a non-negative integer, got {seed!r}")

    default_instance = ROBOT_INSTANCE if experiment == "robot" else "sec4_1"
    instance = _parse_instance(raw.get("instance", default_instance))
    if (instance == ROBOT_INSTANCE) != (experiment == "robot"):
        raise ConfigError("instance", f"{instance!r} cannot be used with the {experiment!r} experiment")

    itable = _table(raw, "integrator")
    _check_keys("integrator", itable, [f.name for f in dataclasses.fields(IntegratorConfig)])
    if "method" in itable:
        method = str(itable["method"]).upper()
        if method not in Method.__members__:
            raise ConfigError("integrator.method", f"unknown method {method!r}")
        itable = dict(itable, method=method)
    if experiment == "robot":
        itable.setdefault("t_end", float(_table(raw, "robot").get("period", 30.0)))
    icfg = _build("integrator", IntegratorConfig, itable)

    schemes, auto = _parse_schemes(raw.get("schemes"))
    if experiment == "compare" and len(schemes) < 2:
        raise ConfigError("schemes", f"compare needs at least 2 schemes, got {len(schemes)}")
    if experiment in ("solve", "robot") and len(schemes) != 1:
        raise ConfigError("schemes", f"{experiment} takes exactly one scheme, got {len(schemes)}")

    start = _table(raw, "start")
    _check_keys("start", start, ("perturbation", "zeta_mode"))
    perturbation = float(start.get("perturbation", 0.0 if experiment == "robot" else 1.0))
    if perturbation < 0:
        raise ConfigError("start.perturbation", "must be non-negative")
    zeta_mode = start.get("zeta_mode", "component")
    if zeta_mode not in ("component", "norm"):
        raise ConfigError("start.zeta_mode", "must be 'component' or 'norm'")

    default_noise = {"kind": "COMBINED"} if experiment == "robot" else {}
    noise = _parse_noise("noise", _table(raw, "noise") or default_noise, seed)

    section = dict(_table(raw, experiment))
    _check_keys(experiment, section, _SECTION_KEYS[experiment])
    noises = []
    if experiment == "compare":
        entries = section.pop("noises", None)
        if entries is None:
            entries = [_table(raw, "noise")] if "noise" in raw else list(DEFAULT_COMPARE_NOISES)
        if not isinstance(entries, list) or not entries:
            raise ConfigError("compare.noises", "must be a non-empty array of tables")
        noises = [_parse_noise(f"compare.noises[{i}]", e if isinstance(e, dict) else {}, seed)
                  for i, e in enumerate(entries)]
    if "window" in section or experiment in ("solve", "compare"):
        window = section.get("window", 0.5)
        if isinstance(window, bool) or not isinstance(window, (int, float)) or not 0 < window:
            raise ConfigError(f"{experiment}.window", "must be a positive number")
        if not window < icfg.t_end - icfg.t0:
            raise ConfigError(f"{experiment}.window",
                              f"{window:g} s is not shorter than the run [{icfg.t0:g}, {icfg.t_end:g}]")
    robot_section = section if experiment == "robot" else {}
    if experiment == "robot":
        section = {}

    out_dir = raw.get("output_dir")
    return ExperimentConfig(
        experiment=experiment, instance=instance, schemes=schemes, noise=noise, integrator=icfg,
        seed=seed, output_dir=Path(out_dir) if out_dir else None, perturbation=perturbation,
        auto_zeta=auto, zeta_mode=zeta_mode, section=section, robot=robot_section, noises=noises)


# --------------------------------------------------------------------- output

def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save_fig(fig, path: Path, resolved: dict) -> None:
    meta = {"Description": json.dumps(resolved, sort_keys=True, default=str), "Software": None}
    fig.savefig(path, dpi=110, metadata=meta)
    _plt().close(fig)


def _write_text(path: Path, lines, resolved: dict, seed) -> None:
    with open(path, "w") as fh:
        write_header(fh, resolved, seed)
        for line in lines:
            fh.write(line + "\n")


# ----------------------------------------------------------------- experiments

def run_solve(cfg: ExperimentConfig, out: Path) -> int:
    instance = _instance_object(cfg.instance)
    scheme = _with_zeta(cfg.schemes[0], cfg.auto_zeta[0], cfg.noise, instance.size, cfg.zeta_mode)
    cfg.schemes = [scheme]
    resolved = cfg.resolved()
    threshold = float(cfg.section.get("threshold", 1e-3))
    window = float(cfg.section.get("window", 0.5))
    z0 = _start(cfg, instance, scheme)
    rec = simulate(instance, z0, scheme, None, cfg.noise, cfg.integrator)
    write_csv(rec, out / "trace.csv", resolved)
    tau = settling_time(rec, threshold) if rec.times.size else None
    try:
        ss = steady_state_residual(rec, window)
    except ValueError:
        ss = float("nan")
    summary = (f"scheme={scheme.scheme.value} settling_time({threshold:g})="
               f"{'none' if tau is None else f'{tau:.6g}'} steady_state_residual({window:g}s)={ss:.6g}"
               f" solve_warnings={rec.solve_warnings}")
    if rec.error:
        summary += f" ABORTED: {rec.error}"
    _write_text(out / "summary.txt", [summary], resolved, cfg.seed)
    print(summary)

    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(rec.times, np.maximum(rec.residual_norms, 1e-300))
    ax.set_xlabel("t (s)")
    ax.set_ylabel("residual norm")
    ax.set_title(f"{scheme.scheme.value} on {rec.config.get('instance')}")
    ax.grid(True, which="both", alpha=0.3)
    _save_fig(fig, out / "residual.png", resolved)
    return EXIT_ABORT if rec.error else EXIT_OK


def _start(cfg: ExperimentConfig, instance, scheme: SchemeConfig) -> np.ndarray:
    try:
        return perturbed_start(instance, cfg.integrator.t0, cfg.perturbation, cfg.seed, scheme.eps_fb)
    except (InfeasibleError, EnumerationSizeError) as exc:
        raise ConfigError("instance", f"cannot build the initial state: {exc}") from exc


def _noise_label(noise: NoiseModel) -> str:
    if noise.kind in (NoiseKind.NONE, NoiseKind.COMBINED):
        return noise.kind.value.lower()
    return f"{noise.kind.value.lower()}_{noise.level:g}"


def run_compare(cfg: ExperimentConfig, out: Path) -> int:
    instance = _instance_object(cfg.instance)
    k = instance.size
    window = float(cfg.section.get("window", 0.5))
    resolved = cfg.resolved()
    report = []
    any_failed = False
    plt = _plt()
    for noise in cfg.noises:
        label = _noise_label(noise)
        rows = []
        traces = {}
        for scheme, auto in zip(cfg.schemes, cfg.auto_zeta):
            scheme = _with_zeta(scheme, auto, noise, k, cfg.zeta_mode)
            name = scheme.scheme.value
            try:
                rec = simulate(instance, _start(cfg, instance, scheme), scheme, None, noise, cfg.integrator)
                err = rec.error
            except (ArithmeticError, ValueError) as exc:
                rec, err = None, str(exc)
            if rec is not None and rec.times.size:
                traces[name] = rec
            if err:
                any_failed = True
                rows.append((math.inf, name, f"FAILED: {err}"))
                continue
            ss = steady_state_residual(rec, window)
            rows.append((ss, name, f"{ss:.6e}"))
        rows.sort(key=lambda r: (r[0], r[1]))
        report.append(f"noise={label} (steady-state residual, trailing {window:g} s)")
        for rank, (_, name, txt) in enumerate(rows, 1):
            report.append(f"  {rank}. {name:<14s} {txt}")
        _write_wide_csv(out / f"compare_{label}.csv", traces, resolved, cfg.seed)
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for name, rec in traces.items():
            ax.semilogy(rec.times, np.maximum(rec.residual_norms, 1e-300), label=name)
        ax.set_xlabel("t (s)")
        ax.set_ylabel("residual norm")
        ax.set_title(f"noise: {label}")
        ax.legend(fontsize=7)
        ax.grid(True, which="both", alpha=0.3)
        _save_fig(fig, out / f"compare_{label}.png", resolved)
    _write_text(out / "compare_report.txt", report, resolved, cfg.seed)
    print("\n".join(report))
    return EXIT_ABORT if any_failed else EXIT_OK


def _write_wide_csv(path: Path, traces: dict, resolved: dict, seed) -> None:
    names = list(traces)
    longest = max(traces.values(), key=lambda r: r.times.size, default=None)
    with open(path, "w", newline="") as fh:
        write_header(fh, resolved, seed)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"residual_{n}" for n in names])
        if longest is None:
            return
        for i, t in enumerate(longest.times):
            row = [format_float(t)]
            for n in names:
                res = traces[n].residual_norms
                row.append(format_float(res[i]) if i < res.size else "")
            writer.writerow(row)


def _robot_objects(cfg: ExperimentConfig):
    from .robot import ArmModel, TaskSpec, default_task

    sec = cfg.robot
    arm_keys = ("dh_rows", "theta_min", "theta_max", "vel_min", "vel_max")
    arm = _build("robot", ArmModel, {k: sec[k] for k in arm_keys if k in sec})
    task_kw = {k: sec[k] for k in ("petals", "radius", "period", "mu", "kappa1", "kappa2",
                                    "plane_u", "plane_v") if k in sec}
    theta0 = sec.get("theta0")
    if theta0 is not None and len(theta0) != arm.n_joints:
        raise ConfigError("robot.theta0", f"needs {arm.n_joints} entries")
    try:
        if "center" in sec:
            from .robot import DEFAULT_THETA0
            return arm, TaskSpec(center=sec["center"],
                                 theta0=DEFAULT_THETA0 if theta0 is None else theta0, **task_kw)
        return arm, default_task(arm, theta0, **task_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError("robot", str(exc)) from exc


def run_robot(cfg: ExperimentConfig, out: Path) -> int:
    from .robot import clover_point, simulate_motion, write_motion_csv

    arm, task = _robot_objects(cfg)
    if task.period > cfg.integrator.t_end + 1e-12:
        raise ConfigError("integrator.t_end", f"must cover one path period ({task.period} s)")
    k = arm.n_joints * 3 + 3
    scheme = _with_zeta(cfg.schemes[0], cfg.auto_zeta[0], cfg.noise, k, cfg.zeta_mode)
    cfg.schemes = [scheme]
    resolved = cfg.resolved()
    resolved["robot_resolved"] = {"center": task.center.tolist(), "theta0": task.theta0.tolist()}
    rec = simulate_motion(arm, task, scheme, None, cfg.noise, cfg.integrator)
    write_motion_csv(rec, out / "robot.csv", resolved)
    after = 2.0 * scheme.t_c
    summary = (f"scheme={scheme.scheme.value} alpha={scheme.alpha:g} "
               f"max_tracking_error(t>={after:g})={rec.max_tracking_error(after):.6g} m "
               f"joint_return={rec.joint_return():.6g} rad "
               f"max_residual(t>={after:g})={np.max(rec.residual_norms[rec.times >= after], initial=0):.6g}")
    if rec.error:
        summary += f" ABORTED: {rec.error}"
    _write_text(out / "summary.txt", [summary], resolved, cfg.seed)
    print(summary)

    plt = _plt()
    ref = np.array([clover_point(task, t)[0] for t in rec.times])
    fig = plt.figure(figsize=(6, 5))
    ax = fig.add_subplot(projection="3d")
    ax.plot(*ref.T, "k--", lw=1, label="reference")
    ax.plot(*rec.end_effector_positions.T, lw=1, label="end-effector")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_zlabel("z (m)")
    ax.legend()
    _save_fig(fig, out / "path.png", resolved)

    fig, axes = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
    axes[0].plot(rec.times, rec.joint_angles)
    axes[0].set_ylabel("theta (rad)")
    axes[1].plot(rec.times, rec.joint_velocities)
    axes[1].set_ylabel("thetadot (rad/s)")
    axes[2].semilogy(rec.times, np.maximum(rec.tracking_errors, 1e-300))
    axes[2].set_ylabel("tracking error (m)")
    axes[2].set_xlabel("t (s)")
    _save_fig(fig, out / "joints.png", resolved)
    return EXIT_ABORT if rec.error else EXIT_OK


def _oracle_times(cfg: ExperimentConfig) -> np.ndarray:
    sec = cfg.section
    t_range = sec.get("t_range", [0.0, 2.0])
    if not isinstance(t_range, list) or len(t_range) != 2 or not 0 <= t_range[0] <= t_range[1]:
        raise ConfigError("oracle.t_range", "must be [t_min, t_max] with 0 <= t_min <= t_max")
    lo, hi = float(t_range[0]), float(t_range[1])
    if "times" in sec:
        times = np.asarray(sec["times"], dtype=float)
        bad = times[(times < lo) | (times > hi) | ~np.isfinite(times)]
        if bad.size:
            raise ConfigError("oracle.times", f"{bad[0]:g} lies outside the declared range [{lo:g}, {hi:g}]")
        return times
    samples = sec.get("samples", 201)
    if isinstance(samples, bool) or not isinstance(samples, int) or samples < 1:
        raise ConfigError("oracle.samples", "must be a positive integer")
    return np.linspace(lo, hi, samples)


def run_oracle(cfg: ExperimentConfig, out: Path) -> int:
    instance = _instance_object(cfg.instance)
    times = _oracle_times(cfg)
    resolved = cfg.resolved()
    try:
        sols = reference_trajectory(instance, times)
    except EnumerationSizeError as exc:
        raise ConfigError("instance", str(exc)) from exc
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORT
    n = instance.dims[0]
    with open(out / "oracle.csv", "w", newline="") as fh:
        write_header(fh, resolved, cfg.seed)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"y{i + 1}_star" for i in range(n)])
        for t, sol in zip(times, sols):
            writer.writerow([format_float(t)] + [format_float(v) for v in sol.y_star])
    print(f"wrote {len(sols)} oracle samples to {out / 'oracle.csv'}")
    return EXIT_OK


RUNNERS = {"solve": run_solve, "compare": run_compare, "robot": run_robot, "oracle": run_oracle}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ztvqp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log warnings from the solver")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="TOML configuration file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None,
                       help=f"output directory (default: config output_dir, then ${OUTPUT_ENV})")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.experiment, args.seed)
        out = Path(args.out or cfg.output_dir or os.environ.get(OUTPUT_ENV) or "ztvqp_out")
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError("output_dir", f"cannot create {out} ({exc.strerror})") from exc
        if not os.access(out, os.W_OK):
            raise ConfigError("output_dir", f"{out} is not writable")
        return RUNNERS[args.experiment](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
