"""Command-line experiment runner.

Every subcommand accepts ``--config FILE``, a flat ``key = value`` file whose
keys are long option names; options given on the command line win. Exit codes:
0 success, 1 failed validation, 2 bad configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .energy import energy_trace, free_energy, jko_flow
from .errors import InvalidInputError, NumericalError, WassflowError
from .eulerian import EulerianTrajectory, fp_evolve, shock_time
from .lagrangian import ddpm_chain, simulate_probability_flow_ode, simulate_sde
from .measures import (
    DEFAULT_GRID,
    Density1D,
    DiffusionSchedule,
    Grid1D,
    ParticleEnsemble,
    PotentialSpec,
    density_moments,
    named_field,
    sample_from_density,
)
from .transport import (
    benamou_brenier_action,
    displacement_interpolation,
    geodesic_trajectory,
    quantile_map,
    w2_distance,
)
from .validation import SUITES, run_suite, thread_count

EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 1, 2, 3
OT_GRID = Grid1D(-20.0, 20.0, 4096)


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# descriptors


def _floats(text, n, what):
    try:
        vals = [float(v) for v in text.split(",")] if text else []
    except ValueError:
        raise ConfigError(f"{what}: expected numbers, got {text!r}") from None
    if len(vals) not in n:
        raise ConfigError(f"{what}: expected {' or '.join(map(str, n))} values, got {text!r}")
    return vals


def parse_density(text: str, grid: Grid1D) -> Density1D:
    """``gauss:m,var`` | ``uniform:a,b`` | ``file:path``."""
    kind, _, rest = text.partition(":")
    if kind == "gauss":
        m, var = _floats(rest, (2,), "gauss")
        if var <= 0:
            raise ConfigError(f"gauss: variance must be positive, got {var}")
        return Density1D.gaussian(grid, m, var)
    if kind == "uniform":
        a, b = _floats(rest, (2,), "uniform")
        return Density1D.uniform(grid, a, b)
    if kind == "file":
        try:
            return io.read_density(rest)
        except OSError as exc:
            raise ConfigError(f"file: cannot read {rest!r}: {exc.strerror}") from None
    raise ConfigError(f"unknown density descriptor {text!r}; use gauss:m,var, uniform:a,b or file:path")


def parse_ensemble(text: str, grid: Grid1D, n: int, seed: int) -> ParticleEnsemble:
    """Densities as above, sampled; also ``point:x`` and ``file:ensemble.csv``."""
    kind, _, rest = text.partition(":")
    if kind == "point":
        (x0,) = _floats(rest, (1,), "point")
        return ParticleEnsemble(np.full(n, x0))
    if kind == "file":
        with open(rest) as fh:
            header = fh.readline().strip()
        if header == "x":
            return io.read_ensemble(rest)
    return sample_from_density(parse_density(text, grid), n, seed)


def parse_potential(text: str) -> PotentialSpec:
    """``quad:beta`` (psi = beta x^2 / 2) or ``zero``."""
    kind, _, rest = text.partition(":")
    if kind == "zero":
        return PotentialSpec.zero()
    if kind == "quad":
        (beta,) = _floats(rest or "1", (1,), "quad")
        return PotentialSpec.quadratic(beta)
    raise ConfigError(f"unknown potential {text!r}; use quad:beta or zero")


def parse_schedule(text: str) -> DiffusionSchedule:
    """``vp:beta[,D]`` | ``ddpm:beta`` | ``ve:c,p`` (alpha = c t^p) | ``ode:field``."""
    kind, _, rest = text.partition(":")
    if kind == "vp":
        vals = _floats(rest, (1, 2), "vp")
        return DiffusionSchedule.vp(vals[0], None if len(vals) == 1 else vals[1])
    if kind == "ddpm":
        (beta,) = _floats(rest, (1,), "ddpm")
        return DiffusionSchedule.ddpm(beta)
    if kind == "ve":
        c, p = _floats(rest, (2,), "ve")
        if c <= 0 or p < 1:
            raise ConfigError("ve: need c > 0 and p >= 1 in alpha = c t^p")
        return DiffusionSchedule.ve(
            lambda t: c * np.asarray(t, dtype=float) ** p,
            lambda t: c * p * np.asarray(t, dtype=float) ** (p - 1),
        )
    if kind == "ode":
        field, _ = named_field(rest)
        return DiffusionSchedule.ode(field)
    raise ConfigError(f"unknown schedule {text!r}; use vp:beta[,D], ddpm:beta, ve:c,p or ode:field")


def read_config(path) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment, quotes are optional."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path!r}: {exc.strerror}") from None
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"config line {no}: expected key = value")
        value = value.strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        out[key.strip().replace("_", "-")] = value
    return out


# ---------------------------------------------------------------------------
# output helpers


def _write_json_or_print(args, obj):
    if args.out:
        io.write_json(args.out, obj)
        return f"wrote {args.out}"
    return json.dumps(obj)


def _write_density(args, rho: Density1D):
    if not args.out:
        return
    if args.format == "json":
        io.write_json(args.out, {"x": rho.x.tolist(), "rho": rho.values.tolist()})
    else:
        io.write_density(args.out, rho)


def _write_ensemble(args, ens: ParticleEnsemble):
    if not args.out:
        return
    if args.format == "json":
        io.write_json(args.out, {"time": ens.time, "x": ens.positions.tolist()})
    else:
        io.write_ensemble(args.out, ens)


def _trace_rows_json(rows):
    return [dict(zip(io.ENERGY_HEADER, (None if np.isnan(v) else v for v in r))) for r in rows]


def _grid(args, default=DEFAULT_GRID) -> Grid1D:
    return Grid1D.parse(args.grid) if args.grid else default


# ---------------------------------------------------------------------------
# commands


def cmd_fp_evolve(args):
    grid = _grid(args)
    rho0 = parse_density(args.init, grid)
    pot = parse_potential(args.potential)
    traj = fp_evolve(rho0, args.diffusion, pot, args.t_end, dt=args.dt, n_save=args.n_save)
    rows = energy_trace(traj, args.diffusion, pot)
    if args.out:
        if args.format == "json":
            io.write_json(args.out, _trace_rows_json(rows))
        else:
            io.write_energy_trace(args.out, rows)
    if args.trajectory:
        io.write_trajectory(args.trajectory, traj)
    m, v = density_moments(traj.final)
    return f"fp-evolve t={args.t_end:g} mean={m:.6g} var={v:.6g} E={rows[-1][3]:.8g}"


def cmd_energy_trace(args):
    pot = parse_potential(args.potential)
    if args.trajectory:
        traj = _read_trajectory(args.trajectory)
    else:
        rho0 = parse_density(args.init, _grid(args))
        traj = fp_evolve(rho0, args.diffusion, pot, args.t_end, dt=args.dt, n_save=args.n_save)
    rows = energy_trace(traj, args.diffusion, pot)
    if args.out:
        if args.format == "json":
            io.write_json(args.out, _trace_rows_json(rows))
        else:
            io.write_energy_trace(args.out, rows)
    totals = np.array([r[3] for r in rows])
    rise = float(np.max(np.diff(totals))) if totals.size > 1 else 0.0
    return f"energy-trace snapshots={len(rows)} E0={totals[0]:.8g} E1={totals[-1]:.8g} max_rise={rise:.3g}"


def _read_trajectory(path) -> EulerianTrajectory:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if header[:3] != ["t", "x", "rho"]:
        raise ConfigError(f"{path}: expected a t,x,rho trajectory CSV")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    times = np.unique(data[:, 0])
    dens = []
    for t in times:
        block = data[data[:, 0] == t]
        x = block[:, 1]
        h = (x[-1] - x[0]) / (x.size - 1)
        dens.append(Density1D.normalize(Grid1D(x[0] - h / 2, x[-1] + h / 2, x.size), block[:, 2]))
    return EulerianTrajectory(times, dens)


def cmd_sde_sample(args):
    grid = _grid(args)
    sched = parse_schedule(args.schedule)
    ens0 = parse_ensemble(args.init, grid, args.n, args.seed)
    ens = simulate_sde(ens0, sched, args.t_end, args.dt or 1e-3, seed=args.seed)
    _write_ensemble(args, ens)
    return f"sde-sample n={len(ens)} t={args.t_end:g} mean={ens.mean():.6g} var={ens.variance():.6g}"


def cmd_ode_sample(args):
    grid = _grid(args)
    sched = parse_schedule(args.schedule)
    dt = args.dt or 1e-2
    if sched.pattern == "ODE":
        ens0 = parse_ensemble(args.init, grid, args.n, args.seed)
        source = None
    else:
        rho0 = parse_density(args.init, grid)
        ens0 = sample_from_density(rho0, args.n, args.seed)
        n_save = max(1, int(np.ceil(args.t_end / dt)))
        source = fp_evolve(rho0, sched.D, sched.potential, args.t_end, n_save=n_save)
    ens = simulate_probability_flow_ode(ens0, sched, source, args.t_end, dt)
    _write_ensemble(args, ens)
    return f"ode-sample n={len(ens)} t={args.t_end:g} mean={ens.mean():.6g} var={ens.variance():.6g}"


def cmd_ddpm_chain(args):
    grid = _grid(args)
    ens0 = parse_ensemble(args.init, grid, args.n, args.seed)
    ens = ddpm_chain(ens0, [args.beta] * args.steps, seed=args.seed)
    _write_ensemble(args, ens)
    return f"ddpm-chain n={len(ens)} steps={args.steps} mean={ens.mean():.6g} var={ens.variance():.6g}"


def cmd_ot(args):
    grid = _grid(args, OT_GRID)
    mu, nu = parse_density(args.mu, grid), parse_density(args.nu, grid)
    w2 = w2_distance(mu, nu)
    if args.out:
        io.write_map(args.out, quantile_map(mu, nu))
    if args.report:
        io.write_json(args.report, {"w2": w2, "w2_squared": w2 * w2})
    return f"ot w2={w2:.10g}"


def cmd_interpolate(args):
    if not 0.0 <= args.t <= 1.0:
        raise ConfigError(f"--t must lie in [0, 1], got {args.t}")
    grid = _grid(args, OT_GRID)
    rho = displacement_interpolation(parse_density(args.mu, grid), parse_density(args.nu, grid), args.t)
    _write_density(args, rho)
    m, v = density_moments(rho)
    return f"interpolate t={args.t:g} mean={m:.6g} var={v:.6g}"


def cmd_action(args):
    grid = _grid(args, OT_GRID)
    mu, nu = parse_density(args.mu, grid), parse_density(args.nu, grid)
    action = benamou_brenier_action(geodesic_trajectory(mu, nu, args.n_times))
    w2sq = w2_distance(mu, nu) ** 2
    report = {"action": action, "w2_squared": w2sq, "ratio": action / w2sq if w2sq > 0 else None}
    return _write_json_or_print(args, report)


def cmd_shock_scan(args):
    field, grid = named_field(args.field)
    if args.grid:
        grid = Grid1D.parse(args.grid)
    rep = shock_time(field, grid, args.t_max)
    return _write_json_or_print(args, rep.to_json())


def cmd_jko(args):
    grid = _grid(args)
    rho0 = parse_density(args.init, grid)
    pot = parse_potential(args.potential)
    traj = jko_flow(rho0, args.tau, args.steps, args.diffusion, pot)
    if args.out:
        if args.format == "json":
            io.write_json(args.out, _trace_rows_json(energy_trace(traj, args.diffusion, pot)))
        else:
            io.write_trajectory(args.out, traj)
    E = free_energy(traj.final, args.diffusion, pot).total
    m, v = density_moments(traj.final)
    return f"jko steps={args.steps} t={args.steps * args.tau:g} mean={m:.6g} var={v:.6g} E={E:.8g}"


def cmd_validate(args):
    if args.suite != "all" and args.suite not in SUITES:
        raise ConfigError(f"unknown suite {args.suite!r}; choose all or one of {', '.join(SUITES)}")
    records = run_suite(args.suite, threads=thread_count())
    ok = all(r["pass"] for r in records)
    if args.out:
        io.write_json(args.out, records)
        print(f"validate {sum(r['pass'] for r in records)}/{len(records)} passed, report {args.out}")
    else:
        print(json.dumps(records, indent=2))
    return None if ok else EXIT_FAILED


# ---------------------------------------------------------------------------
# parser


def _common(p, grid=True):
    if grid:
        p.add_argument("--grid", help="a:b:M")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dt", type=float)
    p.add_argument("--out", help="output file")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--config", help="flat key = value file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wassflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        _common(p)
        return p

    for name, func, help_ in (
        ("fp-evolve", cmd_fp_evolve, "Fokker-Planck evolution; writes the energy trace"),
        ("energy-trace", cmd_energy_trace, "free-energy trace of an evolution or trajectory CSV"),
    ):
        p = add(name, func, help_)
        p.add_argument("--init", default="gauss:0,1")
        p.add_argument("--potential", default="quad:1")
        p.add_argument("--diffusion", type=float, default=1.0)
        p.add_argument("--t-end", type=float, default=1.0)
        p.add_argument("--n-save", type=int, default=100)
        p.add_argument("--trajectory", help="trajectory CSV (written by fp-evolve, read by energy-trace)")

    for name, func, help_ in (
        ("sde-sample", cmd_sde_sample, "Euler-Maruyama particle sampling"),
        ("ode-sample", cmd_ode_sample, "probability-flow ODE sampling with grid scores"),
    ):
        p = add(name, func, help_)
        p.add_argument("--schedule", default="vp:1")
        p.add_argument("--init", default="gauss:0,1")
        p.add_argument("--n", type=int, default=10_000)
        p.add_argument("--t-end", type=float, default=1.0)

    p = add("ddpm-chain", cmd_ddpm_chain, "discrete DDPM forward chain")
    p.add_argument("--init", default="gauss:0,1")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--beta", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=100)

    p = add("ot", cmd_ot, "W2 distance and monotone map between two densities")
    p.add_argument("--mu", required=True)
    p.add_argument("--nu", required=True)
    p.add_argument("--report", help="JSON report path")

    p = add("interpolate", cmd_interpolate, "displacement interpolation at time t")
    p.add_argument("--mu", required=True)
    p.add_argument("--nu", required=True)
    p.add_argument("--t", type=float, default=0.5)

    p = add("action", cmd_action, "kinetic action of the displacement-interpolation path")
    p.add_argument("--mu", required=True)
    p.add_argument("--nu", required=True)
    p.add_argument("--n-times", type=int, default=32)

    p = add("shock-scan", cmd_shock_scan, "first crossing of Burgers characteristics")
    p.add_argument("--field", required=True, help="neg-identity | neg-sine | monotone-demo")
    p.add_argument("--t-max", type=float, default=2.0)

    p = add("jko", cmd_jko, "minimizing-movement steps of the free energy")
    p.add_argument("--init", default="gauss:0,1")
    p.add_argument("--potential", default="quad:1")
    p.add_argument("--diffusion", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=20)

    p = sub.add_parser("validate", help="run acceptance checks")
    p.set_defaults(func=cmd_validate)
    p.add_argument("--suite", default="all")
    _common(p, grid=False)
    return parser


def _apply_config(parser, argv):
    """Re-parse with config-file values installed as subparser defaults."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    values = read_config(args.config)
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[args.command]
    actions = {a.dest: a for a in sub._actions if a.option_strings}
    defaults = {}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        if dest in ("config", "help") or dest not in actions:
            raise ConfigError(f"config: unknown key {key!r} for {args.command}")
        act = actions[dest]
        try:
            val = act.type(raw) if act.type else raw
        except (TypeError, ValueError):
            raise ConfigError(f"config: bad value {raw!r} for key {key!r}") from None
        if act.choices and val not in act.choices:
            raise ConfigError(f"config: key {key!r} must be one of {list(act.choices)}")
        defaults[dest] = val
    sub.set_defaults(**defaults)
    # required options may now come from the file
    for act in sub._actions:
        if act.dest in defaults:
            act.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    # --config may supply required options, so relax them for the first pass
    try:
        if "--config" in argv or any(a.startswith("--config=") for a in argv):
            pre = argparse.ArgumentParser(add_help=False)
            pre.add_argument("--config")
            known, _ = pre.parse_known_args(argv)
            if known.config:
                keys = set(read_config(known.config))
                for sp in next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices.values():
                    for act in sp._actions:
                        if act.option_strings and act.dest.replace("_", "-") in keys:
                            act.required = False
        args = _apply_config(parser, argv)
        result = args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except WassflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    if isinstance(result, int):
        return result
    if isinstance(result, str):
        print(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
