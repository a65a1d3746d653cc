"""Command line entry point: kinelim {run, nsf, sweep, transport, report}.

Exit codes: 0 success, 1 failed thresholds or a numerical failure, 2 usage
or configuration errors.  KINELIM_THREADS caps every thread and process pool.
"""

import argparse
import os
import sys

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS")


def _apply_thread_cap():
    raw = os.environ.get("KINELIM_THREADS")
    if raw and raw.isdigit() and int(raw) > 0:
        for var in THREAD_VARS:
            os.environ.setdefault(var, raw)


def _parser():
    p = argparse.ArgumentParser(prog="kinelim", description="Kinetic-to-hydrodynamic limit laboratory")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("run", "integrate the kinetic equation"),
        ("nsf", "run the incompressible Navier-Stokes-Fourier reference"),
        ("sweep", "epsilon sweep with convergence report"),
        ("transport", "viscosity and heat conductivity of a kernel"),
    ):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, help="TOML config file")
        s.add_argument("--out", help="output directory (overrides the config)")
    r = sub.add_parser("report", help="re-render a sweep report")
    r.add_argument("--in", dest="inp", required=True, help="sweep output directory")
    r.add_argument("--out", help="render into this directory instead")
    return p


def _cmd_run(args):
    from .io import load_toml
    from .kinetic import RunConfig, run_simulation

    cfg = RunConfig.from_dict(load_toml(args.config))
    out = args.out or cfg.out_dir or "kinelim_run"
    traj = run_simulation(cfg, out_dir=out)
    last = traj.moment_rows[-1]
    print(f"run finished: t = {last['t']:g}, dt = {traj.dt_used:.6g}, outputs in {out}")
    return 0


def _nsf_config(doc):
    from .errors import ConfigError

    allowed = {"nsf", "space", "initial", "kernel", "velocity", "output"}
    bad = set(doc) - allowed
    if bad:
        raise ConfigError(f"unknown config sections: {sorted(bad)}")
    nsf = dict(doc.get("nsf", {}))
    keys = {"nu", "kappa", "dt", "t_end", "output_dt", "cfl_max", "snapshots"}
    if set(nsf) - keys:
        raise ConfigError(f"unknown keys in [nsf]: {sorted(set(nsf) - keys)}")
    return nsf


def _cmd_nsf(args):
    from .collision import CollisionKernel
    from .harness import write_fluid_outputs
    from .io import load_toml, write_json
    from .nsf import ic_from_config, run_nsf
    from .spectral import Torus
    from .transport import compute_transport
    from .velocity import build_velocity_grid

    doc = load_toml(args.config)
    nsf = _nsf_config(doc)
    sp = doc.get("space", {})
    space = Torus(sp.get("d", 2), sp.get("n", 64))
    nu, kappa = nsf.get("nu"), nsf.get("kappa")
    source = "config"
    if nu is None or kappa is None:
        vel = doc.get("velocity", {})
        kern = CollisionKernel.from_config(doc.get("kernel", {"model": "bgk"}))
        tc = compute_transport(kern, build_velocity_grid(vel.get("cutoff", 6.0), vel.get("n", 16), vel.get("tol_mass", 1e-6)))
        nu = tc.nu_limit if nu is None else nu
        kappa = tc.kappa_limit if kappa is None else kappa
        source = "transport"
    ic = ic_from_config(doc.get("initial", {}), space)
    traj = run_nsf(ic, float(nu), float(kappa), float(nsf.get("t_end", 1.0)), space, float(nsf.get("dt", 1e-3)),
                   output_dt=nsf.get("output_dt"), cfl_max=float(nsf.get("cfl_max", 0.5)))
    out = args.out or doc.get("output", {}).get("dir") or "kinelim_nsf"
    write_fluid_outputs(traj, space, out, snapshots=bool(nsf.get("snapshots", False)), meta={"nu": nu, "kappa": kappa})
    write_json(os.path.join(out, "manifest.json"), {
        "nu": nu, "kappa": kappa, "coefficients_from": source, "space": {"d": space.d, "n": space.n},
        "scheme": "pseudo-spectral, 2/3 dealiasing, Heun with integrating-factor diffusion",
        "config": doc,
    })
    print(f"nsf finished: nu = {nu:.8g}, kappa = {kappa:.8g}, outputs in {out}")
    return 0


def _cmd_sweep(args):
    from .harness import SweepConfig, epsilon_sweep
    from .io import load_toml

    cfg = SweepConfig.from_dict(load_toml(args.config))
    if args.out:
        cfg.out_dir = args.out
    if not cfg.out_dir:
        cfg.out_dir = "kinelim_sweep"
    rep = epsilon_sweep(cfg)
    print(open(os.path.join(cfg.out_dir, "report.txt")).read(), end="")
    return 0 if rep.passed else 1


def _cmd_transport(args):
    from .collision import CollisionKernel
    from .errors import ConfigError
    from .io import load_toml, write_json
    from .transport import compute_transport
    from .velocity import build_velocity_grid

    doc = load_toml(args.config)
    bad = set(doc) - {"kernel", "velocity", "transport", "output"}
    if bad:
        raise ConfigError(f"unknown config sections: {sorted(bad)}")
    vel = doc.get("velocity", {})
    tr = doc.get("transport", {})
    kern = CollisionKernel.from_config(doc.get("kernel", {"model": "bgk"}))
    grid = build_velocity_grid(vel.get("cutoff", 6.0), vel.get("n", 16), vel.get("tol_mass", 1e-6))
    tc = compute_transport(kern, grid, method=tr.get("method", "auto"), tol=float(tr.get("tol", 1e-10)))
    out = args.out or doc.get("output", {}).get("dir") or "kinelim_transport"
    os.makedirs(out, exist_ok=True)
    write_json(os.path.join(out, "transport.json"), tc.as_dict())
    print(f"nu = {tc.nu:.10g}  kappa = {tc.kappa:.10g}  nu_limit = {tc.nu_limit:.10g}  kappa_limit = {tc.kappa_limit:.10g}")
    return 0


def _cmd_report(args):
    from .harness import load_report, render_report

    data = load_report(args.inp)
    out = args.out or (args.inp if os.path.isdir(args.inp) else os.path.dirname(args.inp))
    render_report(data, out)
    print(open(os.path.join(out, "report.txt")).read(), end="")
    return 0 if data["checks"]["all_passed"] else 1


COMMANDS = {"run": _cmd_run, "nsf": _cmd_nsf, "sweep": _cmd_sweep, "transport": _cmd_transport, "report": _cmd_report}


def main(argv=None):
    _apply_thread_cap()
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    from .errors import ConfigError, KinelimError, UsageError

    try:
        from .harness import thread_cap

        thread_cap()  # reject a malformed KINELIM_THREADS before any work starts
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError) as exc:
        print(f"kinelim: error: {exc}", file=sys.stderr)
        return 2
    except KinelimError as exc:
        print(f"kinelim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
