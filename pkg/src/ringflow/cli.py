"""Command-line front end: run experiments, tabulate diagrams, certify
stability, and measure convergence against the exact travelling wave.

Configuration comes from an optional flat key=value file overridden by
command-line flags; the RINGFLOW_OUTDIR environment variable supplies the
output directory when no flag sets one. Outputs are plain CSV plus a flat
summary.txt, byte-identical for identical configurations.
"""

from __future__ import annotations

import argparse
import math
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import analysis, kernels, solver, speedlaws, wave
from .grid import DensityProfile, l2_deviation, sample, stats, write_snapshot_csv

__all__ = ["main"]

_COMPONENT_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\((.*)\))?\s*$")

_CONFIG_KEYS = {
    "model": str,
    "mode": str,
    "f": str,
    "g": str,
    "down": str,
    "up": str,
    "eta": float,
    "zeta": float,
    "ic": str,
    "n": int,
    "lambda": float,
    "T": float,
    "snapshot_every": int,
    "outdir": str,
}


def _parse_component(text: str) -> tuple[str, list[float], dict[str, float]]:
    m = _COMPONENT_RE.match(text)
    if m is None:
        raise ValueError(f"cannot parse component spec {text!r}")
    name = m.group(1)
    pos: list[float] = []
    kw: dict[str, float] = {}
    body = m.group(2)
    if body is not None and body.strip():
        for part in body.split(","):
            part = part.strip()
            if "=" in part:
                key, val = part.split("=", 1)
                kw[key.strip()] = float(val)
            else:
                pos.append(float(part))
    return name, pos, kw


def _bind_args(
    spec: str, name: str, order: list[str], pos: list[float], kw: dict[str, float]
) -> dict[str, float]:
    if len(pos) > len(order):
        raise ValueError(f"{spec!r}: too many positional arguments for {name}")
    args = dict(zip(order, pos))
    for key, val in kw.items():
        if key not in order:
            raise ValueError(f"{spec!r}: unknown argument {key!r} for {name}")
        if key in args:
            raise ValueError(f"{spec!r}: argument {key!r} given twice")
        args[key] = val
    missing = [key for key in order if key not in args]
    if missing:
        raise ValueError(f"{spec!r}: missing argument(s) {missing} for {name}")
    return args


def build_f(spec: str) -> speedlaws.LawComponent:
    name, pos, kw = _parse_component(spec)
    if name == "exp":
        args = _bind_args(spec, name, ["A", "b"], pos, kw)
        return speedlaws.builtin_exp_f(args["A"], args["b"])
    raise ValueError(f"unknown f family {name!r} (expected: exp)")


def build_g(spec: str | None) -> speedlaws.LawComponent:
    if spec is None:
        return speedlaws.constant_one_g()
    name, pos, kw = _parse_component(spec)
    if name == "none":
        return speedlaws.constant_one_g()
    if name == "logistic":
        args = _bind_args(spec, name, ["kappa", "a"], pos, kw)
        return speedlaws.builtin_logistic_g(args["kappa"], args["a"])
    if name == "rational":
        args = _bind_args(spec, name, ["a", "gamma"], pos, kw)
        return speedlaws.builtin_rational_g(args["a"], args["gamma"])
    raise ValueError(f"unknown g family {name!r} (expected: logistic, rational, none)")


def build_down(spec: str | None) -> kernels.KernelSpec | None:
    if spec is None:
        return None
    name, pos, kw = _parse_component(spec)
    if name == "none":
        return None
    if name == "uniform":
        args = _bind_args(spec, name, ["eta"], pos, kw)
        return kernels.builtin_uniform_downstream(args["eta"])
    raise ValueError(f"unknown downstream kernel {name!r} (expected: uniform, none)")


def build_up(spec: str | None) -> kernels.KernelSpec | None:
    if spec is None:
        return None
    name, pos, kw = _parse_component(spec)
    if name == "none":
        return None
    if name == "linear":
        args = _bind_args(spec, name, ["zeta"], pos, kw)
        return kernels.builtin_linear_upstream(args["zeta"])
    raise ValueError(f"unknown upstream kernel {name!r} (expected: linear, none)")


def _step41(x: float) -> float:
    return 2.35 if (0.5 - 1e-12) <= x <= (0.75 + 1e-12) else 0.55


def make_ic(spec: str, n_cells: int | None) -> tuple[DensityProfile, str]:
    """Build the initial profile from an IC spec and the requested size."""
    if spec.startswith("table:"):
        path = Path(spec[len("table:") :])
        rows = [ln.strip() for ln in path.read_text().strip().split("\n") if ln.strip()]
        if rows and rows[0].lower() == "rho":
            rows = rows[1:]
        vals = np.array([float(r) for r in rows])
        if n_cells is not None and vals.size != n_cells:
            raise ValueError(
                f"table holds {vals.size} cells but n = {n_cells} was requested"
            )
        return DensityProfile(vals), "table"
    n = 500 if n_cells is None else n_cells
    if spec == "step41":
        return sample(_step41, n), "step41"
    name, pos, kw = _parse_component(spec)
    if name == "sine":
        # positional: amplitude, frequency, optional mean (default 1)
        amp = kw.get("amplitude", pos[0] if len(pos) > 0 else None)
        freq = kw.get("frequency", pos[1] if len(pos) > 1 else None)
        mean = kw.get("mean", pos[2] if len(pos) > 2 else 1.0)
        if amp is None or freq is None:
            raise ValueError(f"{spec!r}: sine needs amplitude and frequency")
        freq_i = int(round(freq))
        ic = lambda x: mean + amp * math.sin(2.0 * math.pi * freq_i * x)
        return sample(ic, n), "sine"
    raise ValueError(f"unknown ic {spec!r} (expected: step41, sine(...), table:PATH)")


def _read_config_file(path: str) -> dict:
    out: dict = {}
    for raw in Path(path).read_text().split("\n"):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}: malformed line {raw!r} (expected key = value)")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}: unknown config key {key!r}")
        out[key] = _CONFIG_KEYS[key](val)
    return out


def _preset(model: str, eta: float, zeta: float) -> dict:
    if model == "1":
        return {"mode": "lwr_godunov", "f": "exp(A=0.96, b=1)", "g": "none",
                "down": "none", "up": "none"}
    if model == "2":
        return {"mode": "nonlocal", "f": "exp(A=0.96, b=1)", "g": "none",
                "down": f"uniform(eta={eta!r})", "up": "none"}
    if model == "3":
        a = 1.8 / (zeta * (2.0 - zeta))
        return {"mode": "nonlocal", "f": "exp(A=0.75, b=1)",
                "g": f"logistic(kappa=0.6, a={a!r})",
                "down": f"uniform(eta={eta!r})", "up": f"linear(zeta={zeta!r})"}
    raise ValueError(f"unknown model {model!r} (expected: 1, 2, 3)")


def _resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, preset, config file, and flags (flags win)."""
    explicit: dict = {}
    if args.config:
        explicit.update(_read_config_file(args.config))
    for key, attr in [
        ("model", "model"), ("mode", "mode"), ("f", "f_spec"), ("g", "g_spec"),
        ("down", "down_spec"), ("up", "up_spec"), ("eta", "eta"), ("zeta", "zeta"),
        ("ic", "ic"), ("n", "n"), ("lambda", "lam"), ("T", "horizon"),
        ("snapshot_every", "snapshot_every"), ("outdir", "outdir"),
    ]:
        val = getattr(args, attr, None)
        if val is not None:
            explicit[key] = val

    eta = explicit.get("eta", 0.1)
    zeta = explicit.get("zeta", 1.0)
    preset = _preset(str(explicit["model"]), eta, zeta) if "model" in explicit else {}

    def pick(key, default=None):
        return explicit.get(key, preset.get(key, default))

    merged = {
        "model": explicit.get("model"),
        "mode": pick("mode", "nonlocal"),
        "f": pick("f"),
        "g": pick("g"),
        "down": pick("down"),
        "up": pick("up"),
        "eta": eta,
        "zeta": zeta,
        "ic": pick("ic", "step41"),
        "n": pick("n", 500),
        "n_explicit": "n" in explicit,
        "lambda": pick("lambda", 0.25),
        "T": pick("T"),
        "snapshot_every": pick("snapshot_every"),
        "outdir": explicit.get("outdir") or os.environ.get("RINGFLOW_OUTDIR"),
    }
    if merged["f"] is None:
        raise ValueError("no f specified; pass --model or --f")
    return merged


def _summary_lines(items: list[tuple[str, object]]) -> str:
    return "\n".join(f"{key} = {val!r}" if isinstance(val, float) else f"{key} = {val}"
                     for key, val in items) + "\n"


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    f = build_f(cfg["f"])
    g = build_g(cfg["g"])
    down_kernel = build_down(cfg["down"])
    up_kernel = build_up(cfg["up"])
    law = speedlaws.make_speed_law(f, g)

    table_ic = cfg["ic"].startswith("table:")
    profile, ic_kind = make_ic(
        cfg["ic"], cfg["n"] if (cfg["n_explicit"] or not table_ic) else None
    )
    n = profile.n_cells
    horizon = cfg["T"]
    if horizon is None:
        horizon = 5.0 if ic_kind == "sine" else 40.0

    config = solver.SchemeConfig(
        n_cells=n,
        lam=cfg["lambda"],
        horizon=horizon,
        snapshot_every=cfg["snapshot_every"],
        mode=cfg["mode"],
    )
    down = kernels.discretize(down_kernel, n) if down_kernel else None
    up = kernels.discretize(up_kernel, n) if up_kernel else None
    if config.mode == "nonlocal" and down is None:
        raise ValueError("nonlocal mode needs a downstream kernel; pass --down")

    check = solver.lambda_check(config.lam, law.v_max if config.mode == "nonlocal"
                                else solver._GodunovScheme(f).cfl_speed)
    result = solver.run(config, profile, law,
                        down if config.mode == "nonlocal" else None,
                        up if config.mode == "nonlocal" else None)

    outdir = Path(cfg["outdir"] or "ringflow-out")
    outdir.mkdir(parents=True, exist_ok=True)
    solver.write_series_csv(outdir / "series.csv", result.series)
    for t, prof, vel in zip(result.times, result.profiles, result.velocities):
        step = int(round(t / config.delta))
        write_snapshot_csv(outdir / f"snapshot_{step:08d}.csv", float(t), prof, vel.values)

    s0 = stats(result.profiles[0])
    mass_drift = float(np.max(np.abs(result.series.mass - result.series.mass[0]))
                       / result.series.mass[0])
    items: list[tuple[str, object]] = [
        ("model", cfg["model"] if cfg["model"] is not None else "custom"),
        ("mode", config.mode),
        ("n_cells", n),
        ("lambda", float(config.lam)),
        ("ic", cfg["ic"]),
        ("horizon_requested", float(horizon)),
        ("realized_horizon", float(result.realized_horizon)),
        ("n_steps", result.n_steps),
        ("rho_star", float(result.rho_star)),
        ("lambda_admissible", check.admissible),
        ("lambda_max", float(check.max_lambda)),
        ("mass_initial", float(result.series.mass[0])),
        ("mass_final", float(result.series.mass[-1])),
        ("mass_drift", mass_drift),
        ("min_density", float(result.series.min.min())),
        ("max_density", float(result.series.max.max())),
        ("l2_initial", float(result.series.l2[0])),
        ("l2_final", float(result.series.l2[-1])),
        ("n_snapshots", len(result.profiles)),
    ]
    try:
        fit = analysis.fit_decay_rate(result.series.t, result.series.l2)
        items += [("fitted_rate", float(fit.rate)),
                  ("fit_r_squared", float(fit.r_squared)),
                  ("fit_window_start", float(fit.window[0])),
                  ("fit_window_end", float(fit.window[1]))]
    except ValueError:
        items += [("fitted_rate", "nan")]
    if result.nudged and g.name != "none":
        report = analysis.stability_condition(law, cfg["eta"], s0.min, s0.max, result.rho_star)
        items += [("stability_feasible", report.feasible),
                  ("stability_margin", float(report.margin)),
                  ("c_bar", float(report.c_bar))]
    (outdir / "summary.txt").write_text(_summary_lines(items))
    print(f"wrote {outdir}/series.csv, {len(result.profiles)} snapshots, summary.txt")
    print(f"mass_drift = {mass_drift!r}")
    return 0


def _cmd_fd(args: argparse.Namespace) -> int:
    f = build_f(args.f_spec if args.f_spec else "exp(A=0.96, b=1)")
    g = build_g(args.g_spec)
    law = speedlaws.make_speed_law(f, g)
    if args.sigma is not None:
        sig = args.sigma
    elif args.zeta is not None:
        sig = kernels.sigma(kernels.builtin_linear_upstream(args.zeta))
    else:
        sig = 0.5
    grid_rho = np.linspace(0.0, args.rho_max, args.points)
    fd = analysis.fundamental_diagram(law, sig, grid_rho)
    out = Path(args.out) if args.out else _default_outdir(args) / "fd.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    analysis.write_fd_csv(out, fd)
    print(f"wrote {out}")
    print(f"critical_base = {fd.critical_base!r}")
    print(f"critical_nudge = {fd.critical_nudge!r}")
    return 0


def _cmd_check_stability(args: argparse.Namespace) -> int:
    f = build_f(args.f_spec if args.f_spec else "exp(A=0.75, b=1)")
    g = build_g(args.g_spec)
    law = speedlaws.make_speed_law(f, g)
    rho_star = args.rho_star
    rho_min = args.rho_min if args.rho_min is not None else rho_star
    rho_max = args.rho_max if args.rho_max is not None else rho_star
    report = analysis.stability_condition(law, args.eta, rho_min, rho_max, rho_star)
    for key in ("eta", "rho_min", "rho_max", "rho_star", "F_max", "F_min",
                "f_min", "g_max", "g_min", "G_min", "lhs", "rhs",
                "feasible", "margin", "c_bar"):
        val = getattr(report, key)
        print(f"{key} = {val!r}" if isinstance(val, float) else f"{key} = {val}")
    halfwidth = analysis.feasible_halfwidth(law, args.eta, rho_star)
    print(f"feasible_halfwidth = {halfwidth!r}")
    return 0


def _cmd_wave_test(args: argparse.Namespace) -> int:
    sizes = [int(part) for part in args.n_list.split(",") if part.strip()]
    if not sizes:
        raise ValueError("wave-test needs at least one grid size")
    f = build_f(f"exp(A={args.A!r}, b={args.b!r})")
    law = speedlaws.make_speed_law(f)
    wv = wave.TravellingWave.for_law(law, args.rho_star, args.amplitude,
                                     args.k, args.q)
    wave.perceived_density_identity(wv, args.eta, 0.0, 0.0)  # rejects incommensurate windows
    down_kernel = kernels.builtin_uniform_downstream(args.eta)
    outdir = _default_outdir(args)
    outdir.mkdir(parents=True, exist_ok=True)

    finals = []
    rates = []
    for n in sizes:
        ic = sample(lambda x: wave.wave_density(wv, 0.0, x), n)
        config = solver.SchemeConfig(n_cells=n, lam=args.lam, horizon=args.horizon)
        result = solver.run(config, ic, law, kernels.discretize(down_kernel, n))
        cmp = wave.compare_to_wave(result, wv)
        wave.write_wave_csv(outdir / f"wave_n{n}.csv", cmp)
        fit = analysis.fit_decay_rate(result.series.t, result.series.l2)
        finals.append(float(cmp.l2_error[-1]))
        rates.append(float(fit.rate))
        print(f"n = {n}: final_l2_error = {finals[-1]!r}, "
              f"sup_error = {float(cmp.sup_error[-1])!r}, "
              f"damping_rate = {rates[-1]!r}")
    for a, b in zip(sizes[:-1], sizes[1:]):
        i = sizes.index(a)
        err_ratio = finals[i] / finals[i + 1] if finals[i + 1] else math.inf
        rate_ratio = rates[i + 1] / rates[i] if rates[i] else math.inf
        print(f"error_ratio_n{a}_to_n{b} = {err_ratio!r}")
        print(f"rate_ratio_n{b}_over_n{a} = {rate_ratio!r}")
    return 0


def _default_outdir(args: argparse.Namespace) -> Path:
    out = getattr(args, "outdir", None) or os.environ.get("RINGFLOW_OUTDIR")
    return Path(out) if out else Path("ringflow-out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ringflow",
        description="Non-local ring-road traffic: simulate, tabulate, certify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate one configuration")
    run_p.add_argument("--config", help="flat key = value config file")
    run_p.add_argument("--model", choices=["1", "2", "3"],
                       help="preset: 1 local Godunov, 2 look-ahead, 3 look-ahead plus nudging")
    run_p.add_argument("--mode", choices=["nonlocal", "lwr_godunov"])
    run_p.add_argument("--f", dest="f_spec", help="free-flow factor, e.g. exp(A=0.96, b=1)")
    run_p.add_argument("--g", dest="g_spec", help="nudging factor, e.g. logistic(kappa=0.6, a=1.8)")
    run_p.add_argument("--down", dest="down_spec", help="downstream kernel, e.g. uniform(eta=0.1)")
    run_p.add_argument("--up", dest="up_spec", help="upstream kernel, e.g. linear(zeta=1)")
    run_p.add_argument("--eta", type=float, help="look-ahead window for presets (default 0.1)")
    run_p.add_argument("--zeta", type=float, help="look-behind window for presets (default 1.0)")
    run_p.add_argument("--ic", help="step41, sine(amplitude, frequency), or table:PATH")
    run_p.add_argument("--n", type=int, help="number of cells (default 500)")
    run_p.add_argument("--lambda", dest="lam", type=float, help="time step ratio (default 0.25)")
    run_p.add_argument("--T", dest="horizon", type=float,
                       help="time horizon (default 40, or 5 for sine ICs)")
    run_p.add_argument("--snapshot-every", dest="snapshot_every", type=int)
    run_p.add_argument("--outdir")
    run_p.set_defaults(func=_cmd_run)

    fd_p = sub.add_parser("fd", help="tabulate the fundamental diagram")
    fd_p.add_argument("--f", dest="f_spec")
    fd_p.add_argument("--g", dest="g_spec")
    fd_p.add_argument("--sigma", type=float, help="upstream kernel mass")
    fd_p.add_argument("--zeta", type=float, help="derive sigma from linear(zeta)")
    fd_p.add_argument("--rho-max", dest="rho_max", type=float, default=3.0)
    fd_p.add_argument("--points", type=int, default=601)
    fd_p.add_argument("--out", help="output CSV path (default OUTDIR/fd.csv)")
    fd_p.add_argument("--outdir")
    fd_p.set_defaults(func=_cmd_fd)

    cs_p = sub.add_parser("check-stability", help="evaluate the decay certificate")
    cs_p.add_argument("--f", dest="f_spec")
    cs_p.add_argument("--g", dest="g_spec")
    cs_p.add_argument("--eta", type=float, default=0.1)
    cs_p.add_argument("--rho-star", dest="rho_star", type=float, required=True)
    cs_p.add_argument("--rho-min", dest="rho_min", type=float)
    cs_p.add_argument("--rho-max", dest="rho_max", type=float)
    cs_p.set_defaults(func=_cmd_check_stability)

    wt_p = sub.add_parser("wave-test", help="convergence against the exact wave")
    wt_p.add_argument("--n", dest="n_list", default="500,1000",
                      help="comma-separated grid sizes")
    wt_p.add_argument("--T", dest="horizon", type=float, default=5.0)
    wt_p.add_argument("--lambda", dest="lam", type=float, default=0.25)
    wt_p.add_argument("--rho-star", dest="rho_star", type=float, default=1.0)
    wt_p.add_argument("--amplitude", type=float, default=0.2)
    wt_p.add_argument("--k", type=int, default=1)
    wt_p.add_argument("--q", type=int, default=10)
    wt_p.add_argument("--eta", type=float, default=0.1)
    wt_p.add_argument("--A", type=float, default=0.96)
    wt_p.add_argument("--b", type=float, default=1.0)
    wt_p.add_argument("--outdir")
    wt_p.set_defaults(func=_cmd_wave_test)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
