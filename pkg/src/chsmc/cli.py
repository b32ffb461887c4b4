"""Batch front end: config parsing, run dispatch, report writing.

Configuration files are INI-style (named sections with ``key = value``
lines).  Spatial profiles come from a small closed set of named shapes
with numeric parameters instead of a general expression language, so a
config fully determines a run::

    [grid]
    dim = 1
    cells = 128
    lengths = 0.5

    [potential]
    kind = regular            ; or logarithmic (c1 = ...), obstacle (c2 = ...)

    [bc]
    kind = dirichlet          ; or neumann
    datum = constant value=0

    [control]
    rho = 0
    eps = 1e-3

    [data]
    tau = 1.0
    g = constant value=0
    phi0 = cosine amplitude=0.5 mode=1 offset=0.2
    phistar = constant value=0.2

    [time]
    dt = 1e-3
    T = 1.0
    outputs = 21

    [solver]
    scheme = eliminated_dirichlet
    eps = 1e-3

Profiles: ``constant value=``, ``cosine amplitude= mode= offset=``,
``sine amplitude= mode= offset=``, ``tanh_front center= width= amplitude=
offset=``, ``ramp slope= offset=`` (mode may be comma-separated per axis;
tanh_front and ramp act along the first axis).

Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 verification
failure.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys

import numpy as np

from . import analysis, potentials as pot, smc, solver
from .errors import (ChsmcError, ConfigError, ConvergenceError, MeanError,
                     MissingDataError, NewtonError, ParamError, RegimeError,
                     SolveError, VolumeError)
from .grid import Grid, write_snapshot

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VERIFICATION = 4

_NUMERICAL_ERRORS = (NewtonError, SolveError, ConvergenceError, ParamError,
                     VolumeError, MeanError, MissingDataError)


# -- profile language ----------------------------------------------------


def parse_profile(text: str, lengths=None):
    """``name key=value ...`` -> callable (X, t) -> field.

    ``lengths`` fixes the box size used by the trigonometric profiles;
    without it the size is inferred from the coordinate samples (valid
    for full cell-center meshes only).
    """
    parts = text.split()
    if not parts:
        raise ConfigError("empty profile")
    name = parts[0]
    params = {}
    for tok in parts[1:]:
        if "=" not in tok:
            raise ConfigError(f"malformed profile parameter {tok!r}")
        key, val = tok.split("=", 1)
        params[key] = val

    def fnum(key, default=None):
        if key in params:
            return float(params[key])
        if default is None:
            raise ConfigError(f"profile {name!r} needs parameter {key!r}")
        return default

    if name == "constant":
        c = fnum("value")
        return lambda X, t: np.full_like(X[0], c)
    if name in ("cosine", "sine"):
        amp = fnum("amplitude")
        off = fnum("offset", 0.0)
        modes = [int(m) for m in params.get("mode", "1").split(",")]
        trig = np.cos if name == "cosine" else np.sin

        def profile(X, t, amp=amp, off=off, modes=modes, trig=trig,
                    lengths=lengths):
            out = np.full_like(X[0], amp)
            for a, x in enumerate(X):
                m = modes[a] if a < len(modes) else 0
                if lengths is not None:
                    L = lengths[a]
                else:
                    L = np.max(x) + np.min(x)  # cell centers are symmetric
                out = out * trig(np.pi * m * x / L)
            return out + off
        return profile
    if name == "tanh_front":
        c = fnum("center")
        w = fnum("width")
        amp = fnum("amplitude", 1.0)
        off = fnum("offset", 0.0)
        return lambda X, t: amp * np.tanh((X[0] - c) / w) + off
    if name == "ramp":
        s = fnum("slope")
        off = fnum("offset", 0.0)
        return lambda X, t: s * X[0] + off
    raise ConfigError(f"unknown profile {name!r}")


def parse_boundary_profile(text: str):
    """Profile as a boundary datum callable (point, t) -> value."""
    f = parse_profile(text)

    def datum(x, t):
        X = tuple(np.asarray([xi]) for xi in x)
        return float(f(X, t)[0])
    return datum


# -- config loading -------------------------------------------------------


def _get(cp, section, key, cast=str, default=None):
    if not cp.has_section(section) or key not in cp[section]:
        if default is not None:
            return default
        raise ConfigError(f"missing key [{section}] {key}")
    try:
        return cast(cp[section][key])
    except ValueError as exc:
        raise ConfigError(f"bad value for [{section}] {key}: {exc}") from exc


def load_config(path):
    """Parse a config file into (ProblemData, SolverConfig, extras)."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.read(path)

    dim = _get(cp, "grid", "dim", int)
    cells = [int(v) for v in str(_get(cp, "grid", "cells")).split(",")]
    lengths = [float(v) for v in str(_get(cp, "grid", "lengths")).split(",")]
    if len(cells) == 1:
        cells = cells * dim
    if len(lengths) == 1:
        lengths = lengths * dim
    if len(cells) != dim or len(lengths) != dim:
        raise ConfigError("cells/lengths do not match dim")
    grid = Grid(shape=tuple(cells), lengths=tuple(lengths))

    kind = _get(cp, "potential", "kind")
    if kind == "regular":
        spec = pot.regular()
    elif kind == "logarithmic":
        spec = pot.logarithmic(_get(cp, "potential", "c1", float))
    elif kind == "obstacle":
        spec = pot.double_obstacle(_get(cp, "potential", "c2", float))
    else:
        raise ConfigError(f"unknown potential kind {kind!r}")

    bc_kind = _get(cp, "bc", "kind")
    if bc_kind == "neumann":
        bc = solver.neumann_bc()
    elif bc_kind == "dirichlet":
        bc = solver.dirichlet_bc(
            parse_boundary_profile(_get(cp, "bc", "datum")))
    else:
        raise ConfigError(f"unknown bc kind {bc_kind!r}")

    rho = _get(cp, "control", "rho", float, 0.0)
    ctrl_eps = _get(cp, "control", "eps", float)
    tau = _get(cp, "data", "tau", float)
    g = parse_profile(_get(cp, "data", "g", str, "constant value=0"),
                      lengths)
    phistar = parse_profile(_get(cp, "data", "phistar", str,
                                 "constant value=0"), lengths)
    phi0_profile = parse_profile(_get(cp, "data", "phi0"), lengths)
    phi0 = phi0_profile(grid.meshgrid(), 0.0)

    # static profiles: target derivatives vanish, curvature from the
    # discrete operator would also work but constants dominate usage
    dphistar_dt = lambda X, t: np.zeros_like(X[0])
    from .grid import laplacian_neumann
    lap_phistar = lambda X, t: laplacian_neumann(grid, phistar(X, t))

    data = solver.ProblemData(grid=grid, spec=spec, phi0=phi0, g=g,
                              phistar=phistar, bc=bc, tau=tau,
                              control=smc.SmcParams(
                                  rho=rho if rho > 0 else 0.0,
                                  eps=ctrl_eps),
                              dphistar_dt=dphistar_dt,
                              lap_phistar=lap_phistar)

    dt = _get(cp, "time", "dt", float)
    T = _get(cp, "time", "T", float)
    n_out = _get(cp, "time", "outputs", int, 11)
    output_times = list(np.linspace(0.0, T, n_out)) if T > 0 else []
    scheme = _get(cp, "solver", "scheme")
    cfg = solver.SolverConfig(
        eps=_get(cp, "solver", "eps", float, ctrl_eps),
        dt=dt, T=T, scheme=scheme,
        n_modes=_get(cp, "solver", "n_modes", int, 0),
        output_times=output_times)
    if solver._SCHEME_BC.get(scheme) != bc_kind:
        raise ConfigError(f"scheme {scheme!r} incompatible with bc "
                          f"{bc_kind!r}")

    extras = {}
    if cp.has_section("experiment"):
        extras = dict(cp["experiment"])
    if cp.has_section("contdep"):
        extras["contdep"] = dict(cp["contdep"])
    return data, cfg, extras


# -- commands -------------------------------------------------------------


def _outdir(args):
    out = args.out or "chsmc-out"
    os.makedirs(out, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    data, cfg, _ = load_config(args.config)
    out = _outdir(args)
    traj = solver.run(data, cfg)
    traj.diagnostics.to_csv(os.path.join(out, "diagnostics.csv"))
    for k, snap in enumerate(traj.snapshots):
        write_snapshot(os.path.join(out, f"snapshot_{k:04d}.bin"),
                       data.grid, snap.t, snap.phi)
    if not args.quiet:
        print(f"wrote {len(traj.snapshots)} snapshots and diagnostics "
              f"to {out}")
    return EXIT_OK


def cmd_sliding_check(args) -> int:
    data, cfg, extras = load_config(args.config)
    if data.bc.kind != "dirichlet":
        raise RegimeError("sliding check needs the Dirichlet regime")
    out = _outdir(args)
    tau, T = data.tau, cfg.T
    margin = float(extras.get("rho_margin", 2.0))
    stiff_cap = float(extras.get("dt_stability_factor", 0.3))

    from dataclasses import replace

    def make_data(rho):
        return replace(data, control=smc.SmcParams(
            rho=rho, eps=data.control.eps))

    def make_cfg(rho):
        dt = cfg.dt
        if rho > 0:
            dt = min(dt, stiff_cap * data.control.eps * tau / rho)
        return replace(cfg, dt=dt)

    tol = extras.get("tol_slide", "auto")
    tol_slide = None if tol == "auto" else float(tol)
    report, comparison, traj = analysis.run_sliding_experiment(
        make_data, make_cfg, T=T, tau=tau, rho_margin=margin,
        tol_slide=tol_slide)
    traj.diagnostics.to_csv(os.path.join(out, "sliding_diagnostics.csv"))
    lines = [
        f"verdict: {report.verdict}",
        f"rho: {report.rho!r}",
        f"eps: {report.eps!r}",
        f"w0: {report.w0!r}",
        f"M_meas: {report.M_meas!r}  (measured drift, not a certified "
        "constant)",
        f"Tstar_bound: {report.Tstar_bound!r}",
        f"Tstar_observed: {report.Tstar_observed!r}",
        f"tol_slide: {report.tol_slide!r}",
        f"comparison bound: {'pass' if comparison.passed else 'fail'} "
        f"(worst margin {comparison.worst_margin!r}, "
        f"tol {comparison.tol_cmp!r})",
    ]
    with open(os.path.join(out, "sliding_report.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    if not args.quiet:
        print("\n".join(lines))
    ok = report.verdict == "achieved" and comparison.passed
    return EXIT_OK if ok else EXIT_VERIFICATION


def cmd_contdep(args) -> int:
    data, cfg, extras = load_config(args.config)
    out = _outdir(args)
    cd = extras.get("contdep", {})
    which = cd.get("which", "g")
    shape = parse_profile(cd.get("shape", "cosine amplitude=1 mode=1"))
    deltas = [float(v) for v in
              cd.get("deltas", "1e-1,1e-2,1e-3").split(",")]
    report = analysis.contdep_experiment(data, cfg, which, shape, deltas)
    path = os.path.join(out, "contdep.csv")
    with open(path, "w") as fh:
        fh.write("delta,lhs,rhs,ratio\n")
        for row in report.rows:
            fh.write(f"{row.delta!r},{row.lhs!r},{row.rhs!r},"
                     f"{row.ratio!r}\n")
    if not args.quiet:
        print(f"perturbation target: {which}; ratio spread "
              f"{report.ratio_spread:.3g}; wrote {path}")
    return EXIT_OK


def cmd_ode_oracle(args) -> int:
    tstar = smc.sliding_time(args.w0, args.M, args.rho, args.tau)
    print(f"T* = tau*w0/(rho - M) = {tstar!r}")
    if args.w0 > 0 and args.eps >= args.w0:
        raise ParamError("need eps in (0, w0)")
    times, w_num = smc.ode_weps_integrate(args.eps, args.M, args.rho,
                                          args.tau, args.w0, args.dt,
                                          args.T)
    print("t,w_numeric,w_limit_closed_form" +
          (",w_eps_closed_form" if args.w0 == 0 else ""))
    stride = max(1, len(times) // 20)
    for k in range(0, len(times), stride):
        t = float(times[k])
        w_lim = smc.ode_w_closed_form(args.w0, args.M, args.rho, args.tau,
                                      t)
        row = f"{t!r},{float(w_num[k])!r},{w_lim!r}"
        if args.w0 == 0:
            row += f",{smc.ode_weps_closed_form_zero(args.eps, args.M, args.rho, args.tau, t)!r}"
        print(row)
    return EXIT_OK


def cmd_design_rho(args) -> int:
    design = smc.design_parameters(args.Chat, args.Cstr, args.betastar,
                                   args.tau, args.w0, args.T, args.vol)
    print(f"deltastar = {design.deltastar!r}")
    print(f"rhostar = {design.rhostar!r}")
    rho = 2.0 * design.rhostar
    design.choose_rho(rho)
    print(f"example rho = 2*rhostar = {rho!r}: M = {design.M!r}, "
          f"T* = {design.Tstar!r}")
    return EXIT_OK


def cmd_verify_all(args) -> int:
    data, cfg, _ = load_config(args.config)
    out = _outdir(args)
    failures = []
    traj = solver.run(data, cfg)
    traj.diagnostics.to_csv(os.path.join(out, "verify_diagnostics.csv"))
    if data.bc.kind == "neumann":
        mass = analysis.check_mass_conservation(traj)
        status = "pass" if mass.passed else "fail"
        print(f"mass conservation: {status} (drift {mass.max_drift:.3e})")
        if not mass.passed:
            failures.append("mass")
    if data.control.rho == 0.0 and data.bc.kind == "neumann":
        fe = np.asarray(traj.diagnostics.free_energy_reg)
        diss_ok = bool(np.all(np.diff(fe) <= 10 * cfg.newton_tol + 1e-12))
        print(f"energy decay: {'pass' if diss_ok else 'fail'}")
        if not diss_ok:
            failures.append("energy")
    sup_zeta = max(data.grid.sup_norm(s.zeta) for s in traj.snapshots)
    zeta_ok = sup_zeta <= data.control.rho + 1e-12
    print(f"control saturation: {'pass' if zeta_ok else 'fail'} "
          f"(sup |zeta| = {sup_zeta:.3e}, rho = {data.control.rho})")
    if not zeta_ok:
        failures.append("zeta")
    return EXIT_OK if not failures else EXIT_VERIFICATION


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="chsmc",
        description="Viscous Cahn-Hilliard simulator with sliding-mode "
                    "control")
    p.add_argument("--threads", type=int, default=1,
                   help="reserved; runs are single-threaded")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", required=True, help="config file path")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--quiet", action="store_true")

    with_config(sub.add_parser("simulate", help="run one simulation"))
    with_config(sub.add_parser("sliding-check",
                               help="calibrate, design the gain and verify "
                                    "the sliding property"))
    with_config(sub.add_parser("contdep",
                               help="continuous-dependence ratio sweep"))
    with_config(sub.add_parser("verify-all",
                               help="run the property checks on a config"))

    ode = sub.add_parser("ode-oracle",
                         help="comparison ODE: closed forms vs integration")
    ode.add_argument("--w0", type=float, required=True)
    ode.add_argument("--M", type=float, required=True)
    ode.add_argument("--rho", type=float, required=True)
    ode.add_argument("--tau", type=float, default=1.0)
    ode.add_argument("--eps", type=float, default=1e-3)
    ode.add_argument("--dt", type=float, default=1e-3)
    ode.add_argument("--T", type=float, default=1.0)

    des = sub.add_parser("design-rho",
                         help="volume threshold and minimal gain")
    des.add_argument("--Chat", type=float, required=True)
    des.add_argument("--Cstr", type=float, required=True)
    des.add_argument("--betastar", type=float, required=True)
    des.add_argument("--tau", type=float, default=1.0)
    des.add_argument("--w0", type=float, required=True)
    des.add_argument("--T", type=float, default=1.0)
    des.add_argument("--vol", type=float, required=True)
    return p


_COMMANDS = {
    "simulate": cmd_simulate,
    "sliding-check": cmd_sliding_check,
    "contdep": cmd_contdep,
    "verify-all": cmd_verify_all,
    "ode-oracle": cmd_ode_oracle,
    "design-rho": cmd_design_rho,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except RegimeError as exc:
        print(f"regime error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ChsmcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
