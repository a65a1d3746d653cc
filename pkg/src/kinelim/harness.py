"""Epsilon sweeps, limit diagnostics (incompressibility, Boussinesq, weak fluid residuals) and convergence reports."""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .collision import CollisionKernel
from .errors import ConfigError, KinelimError, UsageError
from .io import SnapshotWriter, write_csv, write_json
from .kinetic import RunConfig, run_simulation
from .nsf import ic_from_config, run_nsf
from .spectral import Torus
from .transport import compute_transport
from .velocity import build_velocity_grid

__all__ = [
    "SweepConfig",
    "ConvergenceReport",
    "epsilon_sweep",
    "incompressibility_residual",
    "boussinesq_residual",
    "fluid_system_residual",
    "windowed_residual",
    "trig_battery",
    "temporal_bump",
    "fit_order",
    "render_report",
    "thread_cap",
    "load_report",
    "write_fluid_outputs",
    "BATTERY_VERSION",
]

BATTERY_VERSION = "trig-kinf2-smoothstep-v1"


def thread_cap():
    """Worker count from KINELIM_THREADS (default: all cores)."""
    raw = os.environ.get("KINELIM_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"KINELIM_THREADS must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"KINELIM_THREADS must be a positive integer, got {raw!r}")
    return n


# ------------------------------------------------------------------ residuals


def incompressibility_residual(u_series, space):
    """||div u(t)||_{L^2} for each entry of a (T, 3, *spatial) series."""
    return np.array([space.l2(space.div(np.asarray(u)[: space.d])) for u in u_series])


def boussinesq_residual(rho_series, theta_series, space):
    """||grad(rho + theta)(t)||_{L^2}."""
    return np.array([space.l2(space.grad(np.asarray(r) + np.asarray(t))) for r, t in zip(rho_series, theta_series)])


def _bump_weights(times, centre, half_width):
    """Trapezoid weights of a normalized C^1 bump (1 - s^2)^2 on [centre - w, centre + w]."""
    t = np.asarray(times, float)
    s = (t - centre) / half_width
    b = np.where(np.abs(s) < 1.0, (1.0 - s * s) ** 2, 0.0)
    w = np.zeros_like(t)
    dt = np.diff(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    q = w * b
    total = q.sum()
    if total <= 0:
        raise UsageError(f"no samples inside the window around t = {centre}")
    return q / total


def windowed_residual(times, fields, centre, half_width, space, kind):
    """Residual of the bump-weighted time average: the distributional form of the limit constraints.

    ``kind`` is "div" (fields: u series) or "boussinesq" (fields: (rho, theta)).
    """
    w = _bump_weights(times, centre, half_width)
    idx = np.nonzero(w)[0]
    if kind == "div":
        avg = sum(w[i] * np.asarray(fields[i]) for i in idx)
        return space.l2(space.div(avg[: space.d]))
    rho, theta = fields
    avg = sum(w[i] * (np.asarray(rho[i]) + np.asarray(theta[i])) for i in idx)
    return space.l2(space.grad(avg))


def trig_battery(space, kmax=2):
    """Trigonometric test functions cos(k.x), sin(k.x) with 0 < |k|_inf <= kmax, one k per +/- pair."""
    out = []
    for k in np.ndindex(*([2 * kmax + 1] * space.d)):
        kk = tuple(int(v) - kmax for v in k)
        if not any(kk):
            continue
        first = next(v for v in kk if v != 0)
        if first < 0:
            continue
        arg = np.tensordot(np.array(kk, float), space.x, axes=(0, 0))
        out.append((f"cos{kk}", np.cos(arg)))
        out.append((f"sin{kk}", np.sin(arg)))
    return out


def temporal_bump(t, T):
    """C^1 smoothstep-down: psi(0) = 1, psi(T) = 0, psi'(0) = psi'(T) = 0; zero beyond T."""
    s = np.clip(np.asarray(t, float) / T, 0.0, 1.0)
    return 1.0 - 3.0 * s**2 + 2.0 * s**3, (-6.0 * s + 6.0 * s**2) / T


@dataclass
class FluidResidual:
    pairs_u: dict
    pairs_theta: dict
    max_u: float
    max_theta: float
    horizon: float
    battery: str = BATTERY_VERSION

    def as_dict(self):
        return asdict(self)


def fluid_system_residual(times, rho, u, theta, eps, nu, kappa, space, horizon=None):
    """Weak pairings of div R_u and div R_theta against the test battery times a temporal bump.

    The rewritten local conservation laws are
      u_t + (1/eps) grad(rho + theta) + div(u (x) u - |u|^2/3 I) - nu div Sigma(u) = div R_u,
      theta_t + (2/(3 eps)) div u + (5/3) div(u theta) - (5/3) kappa lap theta = div R_theta,
    with Sigma(u) = grad u + grad u^T - (2/3) div u I; ``nu`` and ``kappa``
    are the limit viscosity and the diffusivity of (3/5) theta - (2/5) rho.
    The time derivative is moved onto the bump, so
      <div R, phi> = -int <w, chi> psi' dt - <w(0), chi> + int psi <F, chi> dt.
    """
    times = np.asarray(times, float)
    if len(times) < 3:
        raise UsageError("the weak residual needs at least three time samples")
    rho, u, theta = np.asarray(rho), np.asarray(u), np.asarray(theta)
    T = float(horizon if horizon is not None else times[-1])
    psi, dpsi = temporal_bump(times, T)
    wt = np.zeros_like(times)
    dt = np.diff(times)
    wt[:-1] += 0.5 * dt
    wt[1:] += 0.5 * dt
    d = space.d
    vol = space.dx**d
    battery = trig_battery(space)
    chis = np.stack([c for _, c in battery])  # (M, *spatial)
    labels = [lab for lab, _ in battery]

    def pair(f):  # <f, chi> for all chi
        return np.tensordot(chis, f, axes=(tuple(range(1, d + 1)), tuple(range(d)))) * vol

    kappa_t = 5.0 / 3.0 * kappa
    acc_u = np.zeros((len(battery), d))
    acc_t = np.zeros(len(battery))
    for n, t in enumerate(times):
        if wt[n] == 0.0:
            continue
        un, rn, tn = u[n][:d], rho[n], theta[n]
        grad_p = space.grad(rn + tn) / eps
        Fu = []
        for c in range(d):
            f = grad_p[c].copy()
            for a in range(d):
                flux = un[c] * un[a] - (np.sum(un * un, axis=0) / 3.0 if a == c else 0.0)
                f += space.deriv(flux, a)
            f -= nu * space.laplacian(un[c])
            f -= nu * (1.0 / 3.0) * space.deriv(space.div(un), c)
            Fu.append(f)
        Ft = (2.0 / (3.0 * eps)) * space.div(un) - kappa_t * space.laplacian(tn)
        for a in range(d):
            Ft = Ft + (5.0 / 3.0) * space.deriv(un[a] * tn, a)
        for c in range(d):
            acc_u[:, c] += wt[n] * (psi[n] * pair(Fu[c]) - dpsi[n] * pair(un[c]))
        acc_t += wt[n] * (psi[n] * pair(Ft) - dpsi[n] * pair(tn))
    for c in range(d):
        acc_u[:, c] -= pair(u[0][c])
    acc_t -= pair(theta[0])
    pu = {f"{labels[i]}:u{c + 1}": float(acc_u[i, c]) for i in range(len(labels)) for c in range(d)}
    pt = {labels[i]: float(acc_t[i]) for i in range(len(labels))}
    return FluidResidual(pu, pt, float(np.max(np.abs(acc_u))), float(np.max(np.abs(acc_t))), T)


# ------------------------------------------------------------------ sweep


@dataclass
class SweepConfig:
    base: dict  # RunConfig fields shared by every eps
    eps_list: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    times: list = field(default_factory=lambda: [0.25, 0.5, 1.0])
    etas: list = field(default_factory=lambda: [0.5, 1.0])
    dt_mode: str = "eps2"  # dt = coeff * eps^2 | coeff * eps | coeff
    dt_coeff: float = 0.1
    nsf_dt: float = 1e-3
    window: float = 0.125  # half-width of the temporal bump for div / Boussinesq
    out_dir: str = None
    weak_factor: float = 1.5
    t0_tol: float = 1e-10

    def __post_init__(self):
        eps = [float(e) for e in self.eps_list]
        if not eps or any(not (0 < e <= 1) for e in eps):
            raise ConfigError("every eps must lie in (0, 1]")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("eps values must be strictly decreasing")
        self.eps_list = eps
        if self.dt_mode not in ("eps2", "eps", "fixed"):
            raise ConfigError("dt_mode must be 'eps2', 'eps' or 'fixed'")
        if not self.dt_coeff > 0:
            raise ConfigError("dt_coeff must be positive")
        self.times = [float(t) for t in self.times]
        RunConfig(**self.run_fields(eps[0]))  # validate the template

    def dt_for(self, eps):
        return {"eps2": self.dt_coeff * eps * eps, "eps": self.dt_coeff * eps, "fixed": self.dt_coeff}[self.dt_mode]

    def run_fields(self, eps):
        d = dict(self.base)
        d.update(eps=eps, dt=self.dt_for(eps), record_macro=True, out_dir=None)
        return d

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        sweep = dict(doc.pop("sweep", {}))
        allowed = {"eps", "times", "etas", "dt_mode", "dt_coeff", "nsf_dt", "window", "out_dir", "weak_factor", "t0_tol"}
        bad = set(sweep) - allowed
        if bad:
            raise ConfigError(f"unknown keys in [sweep]: {sorted(bad)}")
        out = doc.get("output", {}).get("dir")
        doc.setdefault("run", {}).setdefault("eps", 0.1)
        doc["run"].setdefault("dt", 1e-3)
        base = RunConfig.from_dict(doc).as_dict()
        kw = {k: sweep[k] for k in allowed - {"eps", "out_dir"} if k in sweep}
        return cls(base=base, eps_list=sweep.get("eps", [0.2, 0.1, 0.05]), out_dir=sweep.get("out_dir", out), **kw)

    def as_dict(self):
        return asdict(self)


@dataclass
class ConvergenceReport:
    data: dict

    @property
    def passed(self):
        return bool(self.data["checks"]["all_passed"])


def _run_one(fields):
    cfg = RunConfig(**fields)
    try:
        traj = run_simulation(cfg, out_dir=cfg.out_dir)
    except KinelimError as exc:
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
    t, M = traj.macro_arrays()
    return {"ok": True, "t": t, "M": M, "dt": traj.dt_used, "energy": traj.energy_rows}


def fit_order(eps, errs):
    """Least-squares slope of log(err) against log(eps) and its residual norm."""
    e, r = np.log(np.asarray(eps, float)), np.asarray(errs, float)
    if len(e) < 3 or np.any(r <= 0) or not np.all(np.isfinite(r)):
        return None
    A = np.vstack([e, np.ones_like(e)]).T
    coef, res, *_ = np.linalg.lstsq(A, np.log(r), rcond=None)
    resid = float(np.sqrt(res[0])) if res.size else 0.0
    return {"order": float(coef[0]), "residual": resid}


def _strictly_decreasing(vals):
    return all(b < a for a, b in zip(vals, vals[1:]))


def epsilon_sweep(cfg, workers=None):
    """Run the kinetic family and the NSF reference; return a ConvergenceReport (and write it when out_dir is set)."""
    base = RunConfig(**cfg.run_fields(cfg.eps_list[0]))
    kernel = CollisionKernel.from_config(base.kernel)
    grid = build_velocity_grid(base.cutoff, base.nv, base.tol_mass)
    space = Torus(base.d, base.nx)
    tc = compute_transport(kernel, grid)
    out = Path(cfg.out_dir) if cfg.out_dir else None

    ic = ic_from_config(base.initial, space)
    t_end = base.t_end
    ref = run_nsf(ic, tc.nu_limit, tc.kappa_limit, t_end, space, cfg.nsf_dt, output_dt=base.output_dt)
    ref_times = np.array(ref.times)
    for t in cfg.times:
        if t > t_end + 1e-12 or np.min(np.abs(ref_times - t)) > 1e-9:
            raise ConfigError(f"comparison time {t} is not an output time of the runs")
    if out:
        (out / "nsf_ref").mkdir(parents=True, exist_ok=True)
        header = list(ref.rows[0].keys())
        write_csv(out / "nsf_ref" / "fluid.csv", header, ref.rows)

    jobs = []
    for e in cfg.eps_list:
        f = cfg.run_fields(e)
        if out:
            f["out_dir"] = str(out / f"eps_{e:g}")
        jobs.append(f)
    n_workers = min(workers or thread_cap(), len(jobs))
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as ex:
            results = list(ex.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    N = base.energy_N
    per_eps = []
    for e, res in zip(cfg.eps_list, results):
        row = {"eps": e, "ok": res["ok"]}
        if not res["ok"]:
            row["error"] = res["error"]
            per_eps.append(row)
            continue
        t, M = res["t"], res["M"]
        row["dt"] = res["dt"]
        rho, u, theta = M[:, 0], M[:, 1:4], M[:, 4]
        times = {}
        for tc_ in [0.0] + cfg.times:
            i = int(np.argmin(np.abs(t - tc_)))
            k = int(np.argmin(np.abs(ref_times - tc_)))
            st = ref.states[k]
            Pu = space.leray(u[i])
            th5 = 0.6 * theta[i] - 0.4 * rho[i]
            du, dth = Pu - st.u, th5 - st.theta
            ent = {
                "u_l2": space.l2(du),
                "theta_l2": space.l2(dth),
                "div_u": space.l2(space.div(u[i][: space.d])),
                "boussinesq": space.l2(space.grad(rho[i] + theta[i])),
            }
            for eta in cfg.etas:
                s = N - eta
                ent[f"u_H{s:g}"] = float(space.hs_norm(du, s, comp_axes=1))
                ent[f"theta_H{s:g}"] = float(space.hs_norm(dth, s))
            if tc_ > 0:
                ent["div_u_weak"] = windowed_residual(t, u, tc_, cfg.window, space, "div")
                ent["boussinesq_weak"] = windowed_residual(t, (rho, theta), tc_, cfg.window, space, "boussinesq")
            times[f"{tc_:g}"] = ent
        row["times"] = times
        fr = fluid_system_residual(t, rho, u, theta, e, tc.nu_limit, tc.kappa_limit, space, horizon=t_end)
        row["fluid_residual"] = fr.as_dict()
        row["sup_E_N"] = max(r["E_N"] for r in res["energy"])
        row["energy_series"] = [[r["t"], r["E_N"]] for r in res["energy"]]
        per_eps.append(row)

    data = {
        "version": __version__,
        "header": (
            "strong L2(dx) and H^(N-eta)(dx) moment errors at fixed times; the limit holds weak-* in t "
            "and weak in v, so these errors are a stronger finite-dimensional substitute. div / Boussinesq "
            "residuals are reported pointwise and tested against a C1 temporal bump (distributional form)."
        ),
        "config": {**cfg.as_dict(), "out_dir": None},
        "transport": tc.as_dict(),
        "reference": {"nu": tc.nu_limit, "kappa": tc.kappa_limit, "dt": cfg.nsf_dt},
        "per_eps": per_eps,
    }
    data["orders"] = _orders(cfg, per_eps)
    data["checks"] = _checks(cfg, per_eps)
    report = ConvergenceReport(data)
    if out:
        write_json(out / "report.json", data)
        render_report(data, out)
    return report


_METRICS = ("u_l2", "theta_l2", "div_u_weak", "boussinesq_weak")


def _ok(per_eps):
    return [r for r in per_eps if r["ok"]]


def _orders(cfg, per_eps):
    ok = _ok(per_eps)
    if len(ok) < 3:
        return {}
    eps = [r["eps"] for r in ok]
    out = {}
    for m in _METRICS:
        sup = [max(r["times"][f"{t:g}"][m] for t in cfg.times) for r in ok]
        out[m] = fit_order(eps, sup)
    out["fluid_residual_u"] = fit_order(eps, [r["fluid_residual"]["max_u"] for r in ok])
    out["fluid_residual_theta"] = fit_order(eps, [r["fluid_residual"]["max_theta"] for r in ok])
    return out


def _checks(cfg, per_eps):
    ok = _ok(per_eps)
    checks = {"all_eps_succeeded": len(ok) == len(per_eps)}
    for m in _METRICS:
        for t in cfg.times:
            vals = [r["times"][f"{t:g}"][m] for r in ok]
            checks[f"{m}@{t:g}_decreasing"] = len(vals) >= 2 and _strictly_decreasing(vals)
    checks["t0_errors_below_tol"] = all(
        r["times"]["0"]["u_l2"] <= cfg.t0_tol and r["times"]["0"]["theta_l2"] <= cfg.t0_tol for r in ok
    )
    # weak remainder pairings: each significant pairing shrinks by weak_factor per halving
    weak_ok = True
    for key in ("pairs_u", "pairs_theta"):
        for a, b in zip(ok, ok[1:]):
            ratio_eps = a["eps"] / b["eps"]
            need = cfg.weak_factor ** math.log2(ratio_eps)
            pa, pb = a["fluid_residual"][key], b["fluid_residual"][key]
            floor = 1e-8 * max([abs(v) for v in pa.values()] + [1e-300])
            for lab, va in pa.items():
                if abs(va) <= floor:
                    continue
                if abs(pb[lab]) * need > abs(va):
                    weak_ok = False
    checks["weak_residual_pairings_shrink"] = weak_ok
    checks["all_passed"] = all(checks.values())
    return checks


# ------------------------------------------------------------------ rendering


def render_report(data, out_dir):
    """report.csv, report.txt and plots/*.csv from a report.json dictionary (byte-deterministic)."""
    out = Path(out_dir)
    (out / "plots").mkdir(parents=True, exist_ok=True)
    cfg_times = data["config"]["times"]
    metrics = list(_METRICS) + ["div_u", "boussinesq"]
    header = ["eps", "t"] + metrics
    rows = []
    for r in data["per_eps"]:
        if not r["ok"]:
            continue
        for t in ["0"] + [f"{t:g}" for t in cfg_times]:
            ent = r["times"][t]
            rows.append([r["eps"], float(t)] + [ent.get(m, float("nan")) for m in metrics])
    write_csv(out / "report.csv", header, rows)

    for m in _METRICS:
        for t in cfg_times:
            pts = [[r["eps"], r["times"][f"{t:g}"][m]] for r in data["per_eps"] if r["ok"]]
            write_csv(out / "plots" / f"{m}_vs_eps_t{t:g}.csv", ["eps", m], pts)
    for r in data["per_eps"]:
        if r["ok"]:
            write_csv(out / "plots" / f"energy_vs_t_eps{r['eps']:g}.csv", ["t", "E_N"], r["energy_series"])

    lines = ["kinelim convergence report", "=" * 26, "", data["header"], ""]
    tr = data["transport"]
    lines.append(f"reference: nu = {tr['nu_limit']:.10g}, kappa = {tr['kappa_limit']:.10g}")
    lines.append("")
    lines.append(f"{'eps':>8} {'t':>6} " + " ".join(f"{m:>16}" for m in metrics))
    for row in rows:
        lines.append(f"{row[0]:>8g} {row[1]:>6g} " + " ".join(f"{v:>16.6e}" for v in row[2:]))
    for r in data["per_eps"]:
        if not r["ok"]:
            lines.append(f"{r['eps']:>8g} FAILED: {r['error']}")
    lines.append("")
    lines.append("weak fluid residuals (max over the test battery)")
    for r in _ok(data["per_eps"]):
        fr = r["fluid_residual"]
        lines.append(f"  eps {r['eps']:g}: R_u {fr['max_u']:.6e}  R_theta {fr['max_theta']:.6e}")
    lines.append("")
    lines.append("observed orders in eps (least squares, not asserted)")
    for k in sorted(data["orders"]):
        o = data["orders"][k]
        lines.append(f"  {k}: " + ("n/a" if o is None else f"{o['order']:.4f} (residual {o['residual']:.3e})"))
    lines.append("")
    lines.append("checks")
    for k in sorted(data["checks"]):
        lines.append(f"  [{'PASS' if data['checks'][k] else 'FAIL'}] {k}")
    (out / "report.txt").write_text("\n".join(lines) + "\n")


def load_report(path):
    import json

    p = Path(path)
    if p.is_dir():
        p = p / "report.json"
    if not p.is_file():
        raise UsageError(f"no report.json under {path}")
    return json.loads(p.read_text())


def write_fluid_outputs(traj, space, out_dir, snapshots=False, meta=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "fluid.csv", list(traj.rows[0].keys()), traj.rows)
    if snapshots:
        w = SnapshotWriter(out / "snapshots.bin", (4,) + space.shape, {"fields": ["u1", "u2", "u3", "theta"], **(meta or {})})
        for st in traj.states:
            w.append(st.t, np.concatenate([st.u, st.theta[None]]))

