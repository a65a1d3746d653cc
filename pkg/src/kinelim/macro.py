"""Macro-micro decomposition, fluid moments, the 13-moment family and macroscopic sources.

Arrays carrying a distribution have the velocity index last: shape
``spatial + (Nv,)``.  Macro coefficients come back with spatial shape.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, UsageError

__all__ = [
    "MacroFields",
    "NullBasis",
    "null_basis",
    "project_P",
    "projection_matrix",
    "MomentBasis",
    "build_moment_basis",
    "MacroSources",
    "macro_sources",
    "conservation_residuals",
    "reconstruct",
]


@dataclass(frozen=True)
class NullBasis:
    """Discrete orthonormal basis of span{sqrt(mu), v sqrt(mu), |v|^2 sqrt(mu)}.

    ``psi`` (5, Nv) is orthonormal under the grid weights.  ``chi`` holds the
    raw functions and ``R`` satisfies ``chi.T = psi.T @ R`` so that the
    coefficients (a, b, c) of Pg are ``solve(R, beta)``.
    """

    psi: np.ndarray
    chi: np.ndarray
    R: np.ndarray
    h3: float

    def coefficients(self, g):
        beta = np.tensordot(g, self.psi, axes=([-1], [1])) * self.h3
        return beta

    def abc_from_beta(self, beta):
        # beta (..., 5) -> (..., 5) = (a, b1, b2, b3, c)
        return np.linalg.solve(self.R, beta.reshape(-1, 5).T).T.reshape(beta.shape)


@lru_cache(maxsize=16)
def _null_basis_cached(V, n):
    from .velocity import VelocityGrid

    grid = VelocityGrid(V, n)
    return _make_null_basis(grid)


def _make_null_basis(grid):
    sm = grid.sqrt_maxwellian
    v = grid.nodes
    chi = np.stack([sm, v[:, 0] * sm, v[:, 1] * sm, v[:, 2] * sm, grid.speed_squared * sm])
    h3 = grid.h**3
    q, r = np.linalg.qr(np.sqrt(h3) * chi.T)
    # fix signs so that R has a positive diagonal (deterministic across LAPACKs)
    s = np.sign(np.diag(r))
    q, r = q * s, (r.T * s).T
    psi = q.T / np.sqrt(h3)
    for arr in (psi, chi, r):
        arr.setflags(write=False)
    return NullBasis(psi=psi, chi=chi, R=r, h3=h3)


def null_basis(grid):
    return _null_basis_cached(grid.cutoff, grid.n)


def projection_matrix(grid):
    """Dense P acting on velocity vectors (Nv x Nv)."""
    nb = null_basis(grid)
    return nb.psi.T @ nb.psi * nb.h3


@dataclass
class MacroFields:
    """Coefficients of Pg = (a + b.v + c|v|^2) sqrt(mu) and the derived fluid moments.

    ``b`` has a leading component axis of length 3.  The fluid moments use
    the continuum moment map rho = a + 3c, u = b, theta = 2c, so that data
    built from (rho, u, theta) is recovered to round-off on any grid.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    @property
    def rho(self):
        return self.a + 3.0 * self.c

    @property
    def u(self):
        return self.b

    @property
    def theta(self):
        return 2.0 * self.c

    @property
    def theta5(self):
        """(|v|^2/5 - 1) moment, i.e. (3/5) theta - (2/5) rho."""
        return 0.6 * self.theta - 0.4 * self.rho

    @classmethod
    def from_abc(cls, abc):
        abc = np.moveaxis(np.asarray(abc), -1, 0)
        return cls(a=abc[0], b=abc[1:4], c=abc[4])


def reconstruct(a, b, c, grid):
    """(a + b.v + c|v|^2) sqrt(mu) with velocity index last."""
    v = grid.nodes
    sm = grid.sqrt_maxwellian
    a, c = np.asarray(a, float), np.asarray(c, float)
    b = np.asarray(b, float)
    poly = a[..., None] + c[..., None] * grid.speed_squared
    for d in range(3):
        poly = poly + b[d][..., None] * v[:, d]
    return poly * sm


def project_P(g, grid):
    """Return (MacroFields, Pg, g2) for g with velocity index last."""
    g = np.asarray(g, dtype=float)
    if g.shape[-1] != grid.size:
        raise ValueError(f"velocity axis has {g.shape[-1]} entries, grid has {grid.size}")
    nb = null_basis(grid)
    beta = nb.coefficients(g)
    Pg = beta @ nb.psi
    abc = nb.abc_from_beta(beta)
    return MacroFields.from_abc(abc), Pg, g - Pg


# --------------------------------------------------------------------------
# 13-moment family


@dataclass(frozen=True)
class MomentBasis:
    """The 13 functions ``e`` and their dual family with (e*_j, e_k) = delta_jk."""

    e: np.ndarray
    e_star: np.ndarray
    gram: np.ndarray
    labels: tuple
    h3: float

    def pair(self, f):
        """(f, e*_j) for all 13 j; velocity index of f last."""
        return np.tensordot(f, self.e_star, axes=([-1], [1])) * self.h3


def build_moment_basis(grid, cond_max=1e12):
    v = grid.nodes
    sm = grid.sqrt_maxwellian
    vsq = grid.speed_squared
    funcs = [sm]
    labels = ["1"]
    for i in range(3):
        funcs.append(v[:, i] * sm)
        labels.append(f"v{i + 1}")
    for i in range(3):
        for j in range(i, 3):
            funcs.append(v[:, i] * v[:, j] * sm)
            labels.append(f"v{i + 1}v{j + 1}")
    for i in range(3):
        funcs.append(v[:, i] * vsq * sm)
        labels.append(f"v{i + 1}|v|2")
    e = np.array(funcs)
    h3 = grid.h**3
    gram = (e * h3) @ e.T
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > cond_max:
        raise ConfigError(f"13-moment Gram matrix is degenerate (cond = {cond:.3e})")
    # (e*_j, e_k) = delta_jk  with e* in span(e):  e* = G^{-1} e
    e_star = np.linalg.solve(gram, e)
    for arr in (e, e_star, gram):
        arr.setflags(write=False)
    return MomentBasis(e=e, e_star=e_star, gram=gram, labels=tuple(labels), h3=h3)


# --------------------------------------------------------------------------
# sources and conservation laws


@dataclass
class MacroSources:
    r: np.ndarray
    m: np.ndarray
    l: np.ndarray
    h: np.ndarray


def macro_sources(g, kernel, grid, space, basis=None, op=None):
    """r, m, l, h 13-vectors per spatial cell (last axis of length 13)."""
    from .collision import apply_L, gamma_bilinear

    basis = basis or build_moment_basis(grid)
    _, _, g2 = project_P(g, grid)
    r = basis.pair(g2)
    vg = space.v_grad(g2, grid.nodes)
    m = -basis.pair(vg)
    l = -basis.pair(apply_L(g2, op if op is not None else kernel, grid))
    h = basis.pair(gamma_bilinear(g, g, kernel, grid))
    return MacroSources(r=r, m=m, l=l, h=h)


def conservation_residuals(snapshots, times, eps, grid, space):
    """L^2(dx) residuals of the a, b, c conservation laws at interior snapshot times.

    Time derivatives use centred differences (one-sided at the ends is not
    attempted: only interior times are returned).  Returns ``(t, R)`` with
    R of shape (n_times, 3).
    """
    snaps = list(snapshots)
    if len(snaps) < 2:
        raise UsageError("at least two snapshots are needed for time differencing")
    times = np.asarray(times, float)
    if len(snaps) == 2:
        # forward difference at the midpoint
        centre = [(0, 1)]
    else:
        centre = [(i - 1, i + 1) for i in range(1, len(snaps) - 1)]

    nb = null_basis(grid)
    sm = grid.sqrt_maxwellian
    vsq = grid.speed_squared
    h3 = grid.h**3

    def abc(g):
        return nb.abc_from_beta(nb.coefficients(g))

    out_t, out_r = [], []
    for i0, i1 in centre:
        dt = times[i1] - times[i0]
        A0, A1 = abc(snaps[i0]), abc(snaps[i1])
        dA = (A1 - A0) / dt
        mid = snaps[(i0 + i1) // 2] if i1 - i0 == 2 else 0.5 * (snaps[i0] + snaps[i1])
        Am = abc(mid)
        _, _, g2 = project_P(mid, grid)
        vg2 = space.v_grad(g2, grid.nodes)
        flux_c = np.tensordot(vg2, vsq * sm, axes=([-1], [0])) * h3
        flux_b = np.stack(
            [np.tensordot(vg2, grid.nodes[:, d] * sm, axes=([-1], [0])) * h3 for d in range(3)]
        )
        a, b, c = Am[..., 0], np.moveaxis(Am[..., 1:4], -1, 0), Am[..., 4]
        Ra = dA[..., 0] - flux_c / (2 * eps)
        grad_p = space.grad(a + 5 * c)
        Rb = np.moveaxis(dA[..., 1:4], -1, 0) + np.concatenate(
            [grad_p, np.zeros((3 - space.d,) + a.shape)]
        ) / eps + flux_b / eps
        Rc = dA[..., 4] + space.div(b[: space.d]) / (3 * eps) + flux_c / (6 * eps)
        out_t.append(0.5 * (times[i0] + times[i1]))
        out_r.append([space.l2(Ra), space.l2(Rb), space.l2(Rc)])
    return np.array(out_t), np.array(out_r)
