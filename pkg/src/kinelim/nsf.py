"""Pseudo-spectral incompressible Navier-Stokes-Fourier reference solver and the well-prepared initial data."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, StepRejected

__all__ = [
    "WellPreparedIC",
    "FluidState",
    "FluidTrajectory",
    "leray_project",
    "nsf_initial_data",
    "nsf_step",
    "nsf_pressure",
    "run_nsf",
    "ic_from_config",
    "fluid_row",
]


@dataclass
class WellPreparedIC:
    """rho0, u0 (3 components), theta0 on the spatial grid plus the kinetic remainder description.

    ``remainder`` is "zero", "random" (an N-perp field of the given
    amplitude and seed) or "chapman_enskog" (the first-order corrector
    -eps tau (I - P)(v . grad) of the macroscopic part, which removes the
    initial layer for BGK).
    """

    rho0: np.ndarray
    u0: np.ndarray
    theta0: np.ndarray
    remainder: str = "zero"
    amplitude: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.remainder not in ("zero", "random", "chapman_enskog"):
            raise ConfigError(f"unknown remainder kind {self.remainder!r}")
        self.rho0 = np.asarray(self.rho0, float)
        self.theta0 = np.asarray(self.theta0, float)
        u0 = np.asarray(self.u0, float)
        if u0.shape[0] < 3:
            u0 = np.concatenate([u0, np.zeros((3 - u0.shape[0],) + u0.shape[1:])])
        self.u0 = u0
        if not (self.rho0.shape == self.theta0.shape == self.u0.shape[1:]):
            raise ConfigError("rho0, u0 and theta0 must share the spatial grid")
        for name in ("rho0", "u0", "theta0"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ConfigError(f"{name} has non-finite entries")


def _mode(x, k, phase):
    return np.cos(sum(ki * xi for ki, xi in zip(k, x)) + phase)


def ic_from_config(d, space):
    """Build a WellPreparedIC from a config table.

    kind = "taylor_green": u0 = A (sin x1 cos x2, -cos x1 sin x2, 0) and
    theta0 = B sin(x1) sin(2 x2) with B = ``theta_amplitude``; rho0 = -theta0
    unless ``boussinesq`` is false.
    kind = "zero": all fields zero.
    kind = "modes": a list of {field, k, amplitude, phase} entries.
    """
    d = dict(d)
    kind = d.get("kind", "taylor_green")
    x = space.x
    shape = space.shape
    rho0 = np.zeros(shape)
    theta0 = np.zeros(shape)
    u0 = np.zeros((3,) + shape)
    if kind == "taylor_green":
        A = float(d.get("amplitude", 1.0))
        u0[0] = A * np.sin(x[0]) * np.cos(x[1])
        u0[1] = -A * np.cos(x[0]) * np.sin(x[1])
        B = float(d.get("theta_amplitude", 0.0))
        theta0 = B * np.sin(x[0]) * np.sin(2 * x[1])
        rho0 = -theta0 if d.get("boussinesq", True) else float(d.get("rho_amplitude", 0.0)) * np.cos(x[0] + x[1])
    elif kind == "modes":
        for m in d.get("modes", []):
            k = [int(v) for v in m["k"]]
            if len(k) != space.d:
                raise ConfigError(f"mode {m} needs {space.d} wave numbers")
            val = float(m.get("amplitude", 1.0)) * _mode(x, k, float(m.get("phase", 0.0)))
            f = m["field"]
            if f == "rho":
                rho0 = rho0 + val
            elif f == "theta":
                theta0 = theta0 + val
            elif f in ("u1", "u2", "u3"):
                u0[int(f[1]) - 1] += val
            else:
                raise ConfigError(f"unknown field {f!r} in mode list")
        if d.get("boussinesq", False):
            rho0 = -theta0
    elif kind != "zero":
        raise ConfigError(f"unknown initial-data kind {kind!r}")
    return WellPreparedIC(
        rho0, u0, theta0,
        remainder=d.get("remainder", "zero"),
        amplitude=float(d.get("remainder_amplitude", 0.0)),
        seed=int(d.get("seed", 0)),
    )


# ------------------------------------------------------------------ solver


@dataclass
class FluidState:
    u: np.ndarray  # (3, *shape); the first d components are spatial
    theta: np.ndarray
    t: float = 0.0


def leray_project(w, space):
    """I - k (k .) / |k|^2 on the first d components; the zero mode passes through."""
    return space.leray(w)


def nsf_initial_data(ic, space):
    u = leray_project(ic.u0, space)
    theta = 0.6 * ic.theta0 - 0.4 * ic.rho0
    return FluidState(u, theta, 0.0)


class _Spectral:
    """Cached wave-number tables for one torus."""

    def __init__(self, space):
        self.space = space
        kr = space.kr
        self.ksq = np.sum(kr**2, axis=0)
        cut = space.n // 3  # 2/3 rule on the integer wave numbers
        kint = np.abs(kr) * space.length / (2 * np.pi)
        self.dealias = np.all(kint <= cut, axis=0)
        self.kr_odd = space.kr_odd

    def grad_hat(self, fh):
        return [1j * self.kr_odd[a] * fh for a in range(self.space.d)]


def _tables(space):
    tab = getattr(space, "_nsf_tables", None)
    if tab is None:
        tab = _Spectral(space)
        space._nsf_tables = tab
    return tab


def _nonlinear(uh, th, tab):
    """Dealiased -P[(u.grad) u] and -u.grad theta in Fourier space."""
    sp = tab.space
    d = sp.d
    uh = uh * tab.dealias
    th = th * tab.dealias
    u = np.stack([sp.irfft(uh[c]) for c in range(3)])
    nl = np.empty_like(uh)
    for c in range(3):
        g = tab.grad_hat(uh[c])
        adv = sum(u[a] * sp.irfft(g[a]) for a in range(d))
        nl[c] = -sp.rfft(adv)
    gt = tab.grad_hat(th)
    nt = -sp.rfft(sum(u[a] * sp.irfft(gt[a]) for a in range(d)))
    nl *= tab.dealias
    nt *= tab.dealias
    # Leray in Fourier space
    ksq = np.sum(tab.kr_odd**2, axis=0)
    safe = np.where(ksq == 0, 1.0, ksq)
    kdot = sum(tab.kr_odd[a] * nl[a] for a in range(d)) / safe
    for a in range(d):
        nl[a] = nl[a] - tab.kr_odd[a] * kdot
    return nl, nt


def nsf_step(state, nu, kappa, dt, space, cfl_max=0.5):
    """One Heun (RK2) step with exact integrating-factor diffusion."""
    umax = float(np.max(np.abs(state.u[: space.d]))) if state.u.size else 0.0
    if umax * dt / space.dx > cfl_max:
        raise StepRejected(
            f"advective CFL {umax * dt / space.dx:.3g} exceeds {cfl_max}",
            advisory_dt=0.5 * cfl_max * space.dx / umax,
        )
    tab = _tables(space)
    uh = np.stack([space.rfft(state.u[c]) for c in range(3)])
    th = space.rfft(state.theta)
    Eu = np.exp(-nu * tab.ksq * dt)
    Et = np.exp(-kappa * tab.ksq * dt)
    n1, m1 = _nonlinear(uh, th, tab)
    us = Eu * (uh + dt * n1)
    ts = Et * (th + dt * m1)
    n2, m2 = _nonlinear(us, ts, tab)
    uh = Eu * uh + 0.5 * dt * (Eu * n1 + n2)
    th = Et * th + 0.5 * dt * (Et * m1 + m2)
    u = np.stack([space.irfft(uh[c]) for c in range(3)])
    return FluidState(u, space.irfft(th), state.t + dt)


def nsf_pressure(state, space):
    """Pressure (zero mean) from the divergence of the advection term."""
    tab = _tables(space)
    uh = np.stack([space.rfft(state.u[c]) for c in range(3)]) * tab.dealias
    u = np.stack([space.irfft(uh[c]) for c in range(3)])
    div = np.zeros_like(uh[0])
    for c in range(space.d):
        g = tab.grad_hat(uh[c])
        adv = sum(u[a] * space.irfft(g[a]) for a in range(space.d))
        div = div + 1j * tab.kr_odd[c] * space.rfft(adv)
    ksq = np.where(tab.ksq == 0, 1.0, tab.ksq)
    ph = div / ksq
    ph[(tab.ksq == 0)] = 0.0
    return space.irfft(ph)


@dataclass
class FluidTrajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    dissipation: float = 0.0


def _grad_sq(u, space):
    tab = _tables(space)
    total = 0.0
    for c in range(3):
        fh = space.rfft(u[c])
        for g in tab.grad_hat(fh):
            total += space.l2(space.irfft(g)) ** 2
    return total


def fluid_row(state, space, dissipation):
    div = space.div(state.u[: space.d])
    probe = (0,) * space.d
    return {
        "t": state.t,
        "u_l2": space.l2(state.u),
        "theta_l2": space.l2(state.theta),
        "grad_u_l2": float(np.sqrt(_grad_sq(state.u, space))),
        "div_u_l2": space.l2(div),
        "theta_max": float(np.max(np.abs(state.theta))),
        "dissipation_integral": dissipation,
        "u1_probe": float(state.u[0][probe]),
        "u2_probe": float(state.u[1][probe]),
        "theta_probe": float(state.theta[probe]),
    }


def run_nsf(ic, nu, kappa, t_end, space, dt, output_dt=None, cfl_max=0.5):
    """Integrate to t_end; records a row and a state every output_dt (default: every step)."""
    if not (dt > 0):
        raise ConfigError("dt must be positive")
    if t_end < 0:
        raise ConfigError("t_end must be nonnegative")
    state = nsf_initial_data(ic, space)
    traj = FluidTrajectory()
    out_dt = output_dt or dt
    n_out = int(round(t_end / out_dt)) if t_end > 0 else 0
    if n_out and abs(n_out * out_dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ConfigError("t_end must be a multiple of output_dt")
    per = max(1, int(np.ceil(out_dt / dt - 1e-9)))
    h = out_dt / per
    traj.times.append(0.0)
    traj.states.append(state)
    traj.rows.append(fluid_row(state, space, 0.0))
    diss = 0.0
    g_prev = _grad_sq(state.u, space)
    for m in range(n_out):
        for _ in range(per):
            state = nsf_step(state, nu, kappa, h, space, cfl_max)
            g_new = _grad_sq(state.u, space)
            diss += 2.0 * nu * 0.5 * h * (g_prev + g_new)
            g_prev = g_new
        state.t = (m + 1) * out_dt
        traj.times.append(state.t)
        traj.states.append(state)
        traj.rows.append(fluid_row(state, space, diss))
    traj.dissipation = diss
    return traj

