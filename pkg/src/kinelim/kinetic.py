"""Scaled fluctuation equation on a periodic torus: Lie-split IMEX stepping, Picard iteration and run orchestration.

The equation is  g_t + (1/eps) v.grad g + (1/eps^2) L g = (1/eps) Gamma(g, g).
One step of length dt applies, in order,

1. a fraction theta of the explicit source (dt/eps) Gamma(g0, g0),
2. exact spectral free streaming over dt/eps,
3. the remaining fraction 1 - theta of the same source,
4. the implicit relaxation g <- Pg + phi(dt L / eps^2) g2.

With ``relaxation = "crank_nicolson"`` phi(x) = (1 - x/2)/(1 + x/2) and
theta = 1/2; the split scheme then reproduces the Chapman-Enskog viscosity
and the nonlinear flux of the continuous equation for any x.
``"implicit_euler"`` uses phi = 1/(1 + x) with theta = 0, and
``"exponential"`` uses phi = exp(-x) with theta = 1/x - 1/(e^x - 1).
"""

import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .collision import CollisionKernel, assemble_L_matrix, gamma_bilinear
from .energy import energy_functionals, triple_norm_matrix
from .errors import ConfigError, KinelimError, NonContraction, ResourceError, StepRejected
from .io import SnapshotWriter, write_csv, write_json
from .macro import null_basis, project_P, reconstruct
from .nsf import WellPreparedIC, ic_from_config
from .spectral import Torus
from .transport import solve_inverse_L
from .velocity import build_velocity_grid

__all__ = [
    "Distribution",
    "RunConfig",
    "KineticSolver",
    "Trajectory",
    "PicardResult",
    "initial_fluctuation",
    "step_imex",
    "picard_solve",
    "run_simulation",
    "write_outputs",
    "RELAXATIONS",
]

RELAXATIONS = ("crank_nicolson", "implicit_euler", "exponential")
NULL_WARN = 1e-8
PICARD_MEMORY = 2e9  # bytes of stored iterates before Picard refuses


@dataclass
class Distribution:
    values: np.ndarray  # (*spatial, Nv)
    t: float = 0.0
    eps: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("distribution has non-finite entries")


# ------------------------------------------------------------------ config

_SECTIONS = {
    "run": {"eps", "dt", "t_end", "output_dt", "integrator", "relaxation", "cfl_max", "gamma_ceiling", "max_halvings"},
    "space": {"d", "n"},
    "velocity": {"cutoff", "n", "tol_mass"},
    "kernel": {"model", "tau", "gamma", "b0", "n_theta", "n_phi", "sigma_nodes"},
    "initial": None,  # validated by ic_from_config
    "energy": {"N", "c0", "every", "d1"},
    "picard": {"iterations", "max_energy"},
    "output": {"dir", "snapshots", "record_macro"},
}


@dataclass
class RunConfig:
    eps: float = 0.1
    dt: float = 1e-3
    t_end: float = 1.0
    output_dt: float = None
    integrator: str = "imex"
    relaxation: str = "crank_nicolson"
    cfl_max: float = 0.9
    gamma_ceiling: float = 0.5
    max_halvings: int = 4
    d: int = 2
    nx: int = 16
    cutoff: float = 6.0
    nv: int = 16
    tol_mass: float = 1e-6
    kernel: dict = field(default_factory=lambda: {"model": "bgk", "tau": 1.0})
    initial: dict = field(default_factory=lambda: {"kind": "taylor_green", "amplitude": 0.1})
    energy_N: int = 2
    c0: float = 0.0
    energy_every: int = 1
    d1: float = 0.01
    picard_iterations: int = 6
    picard_max_energy: float = 1.0
    out_dir: str = None
    snapshots: str = "full"
    record_macro: bool = True

    def __post_init__(self):
        if not (0 < self.eps <= 1):
            raise ConfigError(f"eps must lie in (0, 1], got {self.eps}")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.t_end < 0:
            raise ConfigError("t_end must be nonnegative")
        if self.output_dt is None:
            self.output_dt = self.t_end if self.t_end > 0 else self.dt
        if not self.output_dt > 0:
            raise ConfigError("output_dt must be positive")
        if self.t_end > 0:
            k = round(self.t_end / self.output_dt)
            if k < 1 or abs(k * self.output_dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
                raise ConfigError("t_end must be a positive multiple of output_dt")
        if self.integrator not in ("imex", "picard"):
            raise ConfigError(f"integrator must be 'imex' or 'picard', got {self.integrator!r}")
        if self.relaxation not in RELAXATIONS:
            raise ConfigError(f"relaxation must be one of {RELAXATIONS}, got {self.relaxation!r}")
        if self.d not in (2, 3):
            raise ConfigError("spatial dimension must be 2 or 3")
        if self.snapshots not in ("full", "none"):
            raise ConfigError("snapshots must be 'full' or 'none'")
        if self.energy_N < 1 or self.energy_every < 1:
            raise ConfigError("energy.N and energy.every must be at least 1")
        CollisionKernel.from_config(self.kernel)  # validate early

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        unknown = set(doc) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        for sec, keys in _SECTIONS.items():
            if keys is None or sec not in doc:
                continue
            if not isinstance(doc[sec], dict):
                raise ConfigError(f"[{sec}] must be a table")
            bad = set(doc[sec]) - keys
            if bad:
                raise ConfigError(f"unknown keys in [{sec}]: {sorted(bad)}")
        run, sp, vel = doc.get("run", {}), doc.get("space", {}), doc.get("velocity", {})
        en, pic, out = doc.get("energy", {}), doc.get("picard", {}), doc.get("output", {})
        kw = dict(run)
        kw.update({"d": sp.get("d", 2), "nx": sp.get("n", 16)})
        kw.update({"cutoff": vel.get("cutoff", 6.0), "nv": vel.get("n", 16), "tol_mass": vel.get("tol_mass", 1e-6)})
        if "kernel" in doc:
            kw["kernel"] = dict(doc["kernel"])
        if "initial" in doc:
            kw["initial"] = dict(doc["initial"])
        for k_src, k_dst in (("N", "energy_N"), ("c0", "c0"), ("every", "energy_every"), ("d1", "d1")):
            if k_src in en:
                kw[k_dst] = en[k_src]
        if "iterations" in pic:
            kw["picard_iterations"] = pic["iterations"]
        if "max_energy" in pic:
            kw["picard_max_energy"] = pic["max_energy"]
        if "dir" in out:
            kw["out_dir"] = out["dir"]
        for k in ("snapshots", "record_macro"):
            if k in out:
                kw[k] = out[k]
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def as_dict(self):
        return asdict(self)

    def replace(self, **kw):
        d = self.as_dict()
        d.update(kw)
        return RunConfig(**d)


# ------------------------------------------------------------------ scheme


def _phi(x, kind):
    x = np.asarray(x, float)
    if kind == "crank_nicolson":
        return (1.0 - 0.5 * x) / (1.0 + 0.5 * x)
    if kind == "implicit_euler":
        return 1.0 / (1.0 + x)
    return np.exp(-x)


def _theta(x, kind):
    x = np.asarray(x, float)
    if kind == "crank_nicolson":
        return np.full(x.shape, 0.5)
    if kind == "implicit_euler":
        return np.zeros(x.shape)
    small = x < 1e-4
    xs = np.where(small, 1.0, x)
    return np.where(small, 0.5 - x / 12.0, 1.0 / xs - 1.0 / np.expm1(xs))


class KineticSolver:
    """Grids, operators and cached step factors for one RunConfig."""

    def __init__(self, cfg, workers=None):
        self.cfg = cfg
        self.grid = build_velocity_grid(cfg.cutoff, cfg.nv, cfg.tol_mass)
        self.space = Torus(cfg.d, cfg.nx, workers=workers)
        self.kernel = CollisionKernel.from_config(cfg.kernel)
        self.op = None if self.kernel.is_bgk else assemble_L_matrix(self.kernel, self.grid)
        self._tmatrix = None
        self._factors = {}

    # ---------------------------------------------------------------- pieces
    @property
    def tmatrix(self):
        if self._tmatrix is None and not self.kernel.is_bgk:
            self._tmatrix = triple_norm_matrix(self.kernel, self.grid)
        return self._tmatrix

    def gamma(self, g):
        return gamma_bilinear(g, g, self.kernel, self.grid)

    def _step_factors(self, dt):
        key = float(dt)
        if key in self._factors:
            return self._factors[key]
        eps, kind = self.cfg.eps, self.cfg.relaxation
        if self.kernel.is_bgk:
            x = dt / (eps**2 * self.kernel.tau)
            fac = (float(_phi(x, kind)), float(_theta(x, kind)))
        else:
            w, vecs = self.op.eigh()
            null = w < 1e-8 * np.abs(w).max()
            x = np.where(null, 0.0, dt * w / eps**2)
            ph = np.where(null, 1.0, _phi(x, kind))
            th = np.where(null, 0.0, _theta(x, kind))
            fac = ((vecs * ph) @ vecs.T, (vecs * th) @ vecs.T)
        self._factors[key] = fac
        return fac

    def equilibrium_factor(self, g2, dt):
        """Map a continuous N-perp corrector to the post-relaxation state the scheme settles on.

        Per mode the factor is x phi(x) / (1 - phi(x)): 1 - x/2 for
        Crank-Nicolson, 1 for implicit Euler, x / (e^x - 1) for exponential.
        """
        eps, kind = self.cfg.eps, self.cfg.relaxation

        def fac(x):
            x = np.asarray(x, float)
            xs = np.where(x > 0, x, 1.0)
            ph = _phi(xs, kind)
            return np.where(x > 0, xs * ph / (1.0 - ph), 1.0)

        if self.kernel.is_bgk:
            return float(fac(dt / (eps**2 * self.kernel.tau))) * g2
        w, vecs = self.op.eigh()
        null = w < 1e-8 * np.abs(w).max()
        f = np.where(null, 0.0, fac(np.where(null, 0.0, dt * w / eps**2)))
        return g2 @ ((vecs * f) @ vecs.T).T

    def check_cfl(self, dt):
        c = dt * self.grid.cutoff / (self.cfg.eps * self.space.dx)
        if c > self.cfg.cfl_max:
            safe = self.cfg.cfl_max * self.cfg.eps * self.space.dx / self.grid.cutoff
            raise StepRejected(f"transport CFL {c:.4g} exceeds {self.cfg.cfl_max}", advisory_dt=safe)

    def relax(self, g, dt):
        phi, _ = self._step_factors(dt)
        if self.kernel.is_bgk:
            _, Pg, g2 = project_P(g, self.grid)
            return Pg + phi * g2
        return g @ phi.T

    def step(self, g, dt, source=None):
        """One IMEX step; ``source`` freezes Gamma (Picard mode)."""
        self.check_cfl(dt)
        eps = self.cfg.eps
        G = self.gamma(g) if source is None else source
        gn = float(np.linalg.norm(g))
        if gn > 0:
            ratio = dt / eps * float(np.linalg.norm(G)) / gn
            if ratio > self.cfg.gamma_ceiling:
                raise StepRejected(
                    f"explicit source ratio {ratio:.3g} exceeds the ceiling {self.cfg.gamma_ceiling}",
                    advisory_dt=0.9 * dt * self.cfg.gamma_ceiling / ratio,
                )
        c = dt / eps
        _, theta = self._step_factors(dt)
        if self.kernel.is_bgk:
            pre, post = theta * c * G, (1.0 - theta) * c * G
        else:
            pre = c * (G @ theta.T)
            post = c * G - pre
        g = g + pre
        g = self.space.free_stream(g, self.grid.nodes, c)
        g = g + post
        return self.relax(g, dt)

    def energy(self, g, t):
        c = self.cfg
        return energy_functionals(g, self.kernel, self.grid, self.space, c.energy_N, t=t, eps=c.eps, d1=c.d1, tmatrix=self.tmatrix)

    def fluid(self, g):
        fields, _, _ = project_P(g, self.grid)
        return fields

    def invariants(self, g):
        """Domain integrals of (g, phi sqrt(mu)) for phi = 1, v1, v2, v3, |v|^2."""
        nb = null_basis(self.grid)
        out = self.space.integrate(np.tensordot(g, nb.chi.T, axes=([-1], [0])) * nb.h3)
        return np.asarray(out)


# ---------------------------------------------------------------- initial data


def _random_remainder(ic, grid, space):
    rng = np.random.default_rng(ic.seed)
    x = space.x
    out = np.zeros(space.shape + (grid.size,))
    modes = [k for k in np.ndindex(*([3] * space.d))]
    for k in modes:
        kk = np.array(k) - 1
        if not kk.any():
            continue
        phase = np.cos(np.tensordot(kk, x, axes=(0, 0)) + rng.uniform(0, 2 * np.pi))
        prof = rng.standard_normal(grid.size) * grid.maxwellian**0.25
        out += phase[..., None] * prof
    _, _, out = project_P(out, grid)
    norm = space.l2(out) * math.sqrt(grid.h**3)
    return out * (ic.amplitude * math.sqrt(space.volume) / norm) if norm > 0 else out


def _chapman_enskog(Pg, eps, kernel, grid, space, op):
    """eps L^{-1} [Gamma(Pg, Pg) - (I - P) v.grad Pg] in N-perp."""
    rhs = gamma_bilinear(Pg, Pg, kernel, grid) - space.v_grad(Pg, grid.nodes)
    _, _, rhs = project_P(rhs, grid)
    if kernel.is_bgk:
        return eps * kernel.tau * rhs
    if not np.any(rhs):
        return np.zeros_like(rhs)
    return eps * solve_inverse_L(rhs, op or assemble_L_matrix(kernel, grid), grid)


def initial_fluctuation(ic, grid, space, eps=1.0, kernel=None, op=None, remainder_field=None, solver=None):
    """g0 = {rho0 + u0.v + theta0 (|v|^2/2 - 3/2)} sqrt(mu) + remainder.

    ``remainder_field`` overrides ic.remainder with an explicit array; an
    N component above 1e-8 (relative) is warned about and projected away.
    With a ``solver`` the chapman_enskog remainder is mapped to the
    scheme's own post-relaxation equilibrium (see equilibrium_factor).
    """
    if not isinstance(ic, WellPreparedIC):
        ic = ic_from_config(ic, space)
    if ic.rho0.shape != space.shape:
        raise ConfigError(f"initial fields have shape {ic.rho0.shape}, torus has {space.shape}")
    a = ic.rho0 - 1.5 * ic.theta0
    c = 0.5 * ic.theta0
    Pg = reconstruct(a, ic.u0, c, grid)
    if remainder_field is not None:
        rem = np.asarray(remainder_field, float)
        _, Pr, r2 = project_P(rem, grid)
        total = np.linalg.norm(rem)
        if total > 0 and np.linalg.norm(Pr) / total > NULL_WARN:
            warnings.warn("remainder had a null-space component; projected onto N-perp", stacklevel=2)
        rem = r2
    elif ic.remainder == "zero":
        rem = 0.0
    elif ic.remainder == "random":
        rem = _random_remainder(ic, grid, space)
    else:
        if kernel is None:
            raise ConfigError("the chapman_enskog remainder needs the collision kernel")
        rem = _chapman_enskog(Pg, eps, kernel, grid, space, op)
        if solver is not None:
            rem = solver.equilibrium_factor(rem, _plan(solver.cfg, solver.cfg.dt)[2])
    return Distribution(Pg + rem, 0.0, eps)


def step_imex(g, cfg, solver=None, dt=None, source=None):
    """Advance a Distribution (or raw array) by one step of cfg.dt."""
    solver = solver or KineticSolver(cfg)
    dt = cfg.dt if dt is None else dt
    if isinstance(g, Distribution):
        return Distribution(solver.step(g.values, dt, source), g.t + dt, cfg.eps)
    return solver.step(np.asarray(g, float), dt, source)


# ---------------------------------------------------------------- trajectories


@dataclass
class Trajectory:
    times: list = field(default_factory=list)  # output times
    snapshots: list = field(default_factory=list)
    energy_rows: list = field(default_factory=list)
    moment_rows: list = field(default_factory=list)
    macro_t: list = field(default_factory=list)  # every step when record_macro
    macro: list = field(default_factory=list)  # (5, *spatial): rho, u1, u2, u3, theta
    dt_used: float = None
    status: str = "ok"
    error: str = None
    meta: dict = field(default_factory=dict)

    def macro_arrays(self):
        return np.array(self.macro_t), np.stack(self.macro) if self.macro else None


ENERGY_HEADER = ["step", "t", "E_N", "C_N", "D_N", "E_N_combined", "psi", "dissipation_sum"]
MOMENT_HEADER = [
    "t", "rho_l2", "u1_l2", "u2_l2", "u3_l2", "theta_l2", "theta5_l2", "div_u_l2",
    "rho_probe", "u1_probe", "u2_probe", "u3_probe", "theta_probe",
    "mass", "momentum1", "momentum2", "momentum3", "energy",
]


class _Monitor:
    """Per-step energy bookkeeping and per-output moment rows."""

    def __init__(self, solver, traj):
        self.s, self.traj = solver, traj
        self.diss = 0.0
        self.prev = None  # (t, rate)
        self.E0sq = None

    def energy(self, step, t, g):
        rep = self.s.energy(g, t)
        cfg = self.s.cfg
        rate = (rep.D_N**2 / cfg.eps**2 + rep.C_N**2) * (1.0 - cfg.c0 * rep.E_N)
        if self.prev is not None:
            t0, r0 = self.prev
            self.diss += 0.5 * (t - t0) * (r0 + rate)
        self.prev = (t, rate)
        psi = rep.E_N**2 + self.diss
        row = {"step": step, **{k: getattr(rep, k) for k in ("t", "E_N", "C_N", "D_N", "E_N_combined")}}
        row.update(psi=psi, dissipation_sum=self.diss)
        self.traj.energy_rows.append(row)

    def macro(self, t, g):
        f = self.s.fluid(g)
        self.traj.macro_t.append(t)
        self.traj.macro.append(np.concatenate([f.rho[None], f.u, f.theta[None]]))

    def moments(self, t, g):
        sp = self.s.space
        f = self.s.fluid(g)
        inv = self.s.invariants(g)
        probe = (0,) * sp.d
        row = {
            "t": t,
            "rho_l2": sp.l2(f.rho),
            "u1_l2": sp.l2(f.u[0]),
            "u2_l2": sp.l2(f.u[1]),
            "u3_l2": sp.l2(f.u[2]),
            "theta_l2": sp.l2(f.theta),
            "theta5_l2": sp.l2(f.theta5),
            "div_u_l2": sp.l2(sp.div(f.u[: sp.d])),
            "rho_probe": float(f.rho[probe]),
            "u1_probe": float(f.u[0][probe]),
            "u2_probe": float(f.u[1][probe]),
            "u3_probe": float(f.u[2][probe]),
            "theta_probe": float(f.theta[probe]),
            "mass": float(inv[0]),
            "momentum1": float(inv[1]),
            "momentum2": float(inv[2]),
            "momentum3": float(inv[3]),
            "energy": float(inv[4]),
        }
        self.traj.moment_rows.append(row)


def _plan(cfg, dt):
    n_out = int(round(cfg.t_end / cfg.output_dt)) if cfg.t_end > 0 else 0
    per = max(1, int(math.ceil(cfg.output_dt / dt - 1e-9)))
    return n_out, per, cfg.output_dt / per


def _manifest(cfg, solver, traj):
    return {
        "package": "kinelim",
        "version": __version__,
        "numpy": np.__version__,
        "config": {**cfg.as_dict(), "out_dir": None},  # outputs must not depend on where they are written
        "kernel": solver.kernel.as_dict(),
        "velocity_grid": {"cutoff": solver.grid.cutoff, "n": solver.grid.n, "mass_defect": solver.grid.mass_defect()},
        "spatial_domain": {
            "kind": "periodic torus",
            "d": cfg.d,
            "n": cfg.nx,
            "length": solver.space.length,
            "note": "periodic torus in x with 3-D velocities; substitutes for the whole space",
        },
        "scheme": {
            "name": "lie_imex",
            "relaxation": cfg.relaxation,
            "transport": "exact spectral free streaming",
            "dt_used": traj.dt_used,
        },
        "status": traj.status,
        "error": traj.error,
        "outputs": {"times": list(traj.times)},
    }


def write_outputs(traj, cfg, solver, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "energy.csv", ENERGY_HEADER, traj.energy_rows)
    write_csv(out / "moments.csv", MOMENT_HEADER, traj.moment_rows)
    if cfg.snapshots == "full" and traj.snapshots:
        w = SnapshotWriter(out / "snapshots.bin", traj.snapshots[0].shape, {"eps": cfg.eps, "layout": "spatial axes then velocity index"})
        for t, s in zip(traj.times, traj.snapshots):
            w.append(t, s)
    write_json(out / "manifest.json", _manifest(cfg, solver, traj))


def _integrate(solver, g0, traj, monitor, sources=None, keep_all=False):
    """March g0 to t_end; returns the per-step states when keep_all."""
    cfg = solver.cfg
    dt = cfg.dt
    halvings = 0
    while True:
        n_out, per, h = _plan(cfg, dt)
        try:
            solver.check_cfl(h)
            break
        except StepRejected as exc:
            if halvings >= cfg.max_halvings:
                raise
            halvings += 1
            dt = min(dt / 2, exc.advisory_dt)
    traj.dt_used = h
    g = g0
    states = [g0] if keep_all else None
    traj.times.append(0.0)
    if cfg.snapshots == "full":
        traj.snapshots.append(g0.copy())
    monitor.moments(0.0, g0)
    monitor.energy(0, 0.0, g0)
    if cfg.record_macro:
        monitor.macro(0.0, g0)
    step = 0
    for m in range(n_out):
        for j in range(per):
            src = None if sources is None else sources(step)
            g = solver.step(g, h, src)
            step += 1
            t = (m * per + j + 1) * h
            if j == per - 1:
                t = (m + 1) * cfg.output_dt
            if keep_all:
                states.append(g)
            if step % cfg.energy_every == 0 or j == per - 1:
                monitor.energy(step, t, g)
            if cfg.record_macro:
                monitor.macro(t, g)
        t = (m + 1) * cfg.output_dt
        traj.times.append(t)
        if cfg.snapshots == "full":
            traj.snapshots.append(g.copy())
        monitor.moments(t, g)
    return g, states


def run_simulation(cfg, solver=None, out_dir=None, g0=None):
    """Integrate to t_end and return a Trajectory; writes outputs when a directory is given.

    A step failure records ``status = "error"``, flushes what was produced
    and re-raises.
    """
    solver = solver or KineticSolver(cfg)
    out_dir = out_dir or cfg.out_dir
    if g0 is None:
        ic = ic_from_config(cfg.initial, solver.space)
        g0 = initial_fluctuation(ic, solver.grid, solver.space, cfg.eps, solver.kernel, solver.op, solver=solver).values
    traj = Trajectory()
    monitor = _Monitor(solver, traj)
    try:
        if cfg.integrator == "picard":
            res = picard_solve(g0, cfg, solver=solver)
            traj = res.trajectory
            traj.meta["picard"] = {"increments": res.increments, "E0": res.E0}
        else:
            _integrate(solver, g0, traj, monitor)
    except KinelimError as exc:
        traj.status, traj.error = "error", f"{type(exc).__name__}: {exc}"
        if out_dir:
            write_outputs(traj, cfg, solver, out_dir)
        raise
    if out_dir:
        write_outputs(traj, cfg, solver, out_dir)
    return traj


# ---------------------------------------------------------------- Picard


@dataclass
class PicardResult:
    finals: list  # g^n at t_end for n = 1..K
    increments: list  # sup_t ||g^{n+1} - g^n||_{L^2_{x,v}}, first entry against g^0 = 0
    E0: float
    trajectory: Trajectory = None
    states: list = None  # per-step states of the last iterate

    @property
    def ratios(self):
        inc = self.increments
        return [inc[i + 1] / inc[i] if inc[i] > 0 else 0.0 for i in range(len(inc) - 1)]


def picard_solve(g0, cfg, iterations=None, solver=None):
    """Iterates of the linear problems with Gamma frozen from the previous iterate (g^0 = 0).

    Each iterate is integrated by the same IMEX steps as the nonlinear run,
    so the fixed point of the iteration is exactly the nonlinear discrete
    solution.  Three consecutive increment growths raise NonContraction.
    """
    solver = solver or KineticSolver(cfg)
    K = int(iterations or cfg.picard_iterations)
    if K < 1:
        raise ConfigError("Picard needs at least one iteration")
    g0 = np.asarray(g0.values if isinstance(g0, Distribution) else g0, float)
    E0 = solver.energy(g0, 0.0).E_N
    if E0 > cfg.picard_max_energy:
        raise ConfigError(f"E_N(g0) = {E0:.4g} exceeds the small-data threshold {cfg.picard_max_energy}")
    n_out, per, _ = _plan(cfg, cfg.dt)
    need = 2 * (n_out * per + 1) * g0.size * 8
    if need > PICARD_MEMORY:
        raise ResourceError(f"Picard would store {need / 1e9:.2f} GB of iterates")
    sp = solver.space
    h3 = solver.grid.h**3
    prev = None
    finals, incs = [], []
    growth = 0
    traj = None
    for n in range(K):
        traj = Trajectory()
        mon = _Monitor(solver, traj)
        if prev is None:
            zero = np.zeros_like(g0)
            sources = lambda m: zero  # noqa: E731
        else:
            cache = {}

            def sources(m, prev=prev, cache=cache):
                if m not in cache:
                    cache.clear()
                    cache[m] = solver.gamma(prev[m])
                return cache[m]

        _, states = _integrate(solver, g0, traj, mon, sources=sources, keep_all=True)
        if prev is None:
            inc = max(sp.l2(s) * math.sqrt(h3) for s in states)
        else:
            inc = max(sp.l2(a - b) * math.sqrt(h3) for a, b in zip(states, prev))
        incs.append(float(inc))
        finals.append(states[-1])
        if len(incs) > 1 and incs[-1] > incs[-2]:
            growth += 1
            if growth >= 3:
                raise NonContraction(f"Picard increments grew three times in a row ({incs})", E0)
        else:
            growth = 0
        prev = states
    return PicardResult(finals, incs, float(E0), traj, prev)
