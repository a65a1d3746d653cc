"""Collision operator Q, the fluctuation form Gamma, the linearized operator L and the BGK surrogate."""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import ConfigError, ResourceError, UnsupportedOperation
from .macro import null_basis, project_P

__all__ = [
    "CollisionKernel",
    "LinearOperatorHandle",
    "angular_rule",
    "q_bilinear",
    "gamma_bilinear",
    "apply_L",
    "assemble_L_matrix",
    "linearized_raw",
    "matrix_free_handle",
    "MU_FLOOR",
    "ASSEMBLY_LIMIT",
]

MU_FLOOR = 1e-30
ASSEMBLY_LIMIT = 16**3


@dataclass(frozen=True)
class CollisionKernel:
    """Kernel description.

    ``model`` is ``"bgk"`` (relaxation time ``tau``), ``"vhs"`` (exponent
    ``gamma`` and constant angular factor ``b0``) or ``"hard_sphere"``
    (gamma = 1, b0 = 1/(4 pi)).  The angular rule has ``n_theta * n_phi``
    nodes; the quadratic form of L carries azimuthal harmonics up to
    cos(4 phi), so n_phi >= 8 is needed to avoid aliasing.
    """

    model: str = "bgk"
    tau: float = 1.0
    gamma: float = 1.0
    b0: float = 1.0 / (4.0 * np.pi)
    n_theta: int = 4
    n_phi: int = 8

    def __post_init__(self):
        m = self.model.lower().replace("-", "_")
        if m not in ("bgk", "vhs", "hard_sphere"):
            raise ConfigError(f"unknown collision model {self.model!r}")
        object.__setattr__(self, "model", m)
        if m == "hard_sphere":
            object.__setattr__(self, "gamma", 1.0)
            object.__setattr__(self, "b0", 1.0 / (4.0 * np.pi))
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if not -3.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (-3, 1]")
        if not self.b0 > 0:
            raise ConfigError("b0 must be positive")
        if self.n_theta < 1 or self.n_phi < 2 or self.n_phi % 2:
            raise ConfigError("angular rule needs n_theta >= 1 and an even n_phi >= 2")

    @property
    def is_bgk(self):
        return self.model == "bgk"

    @property
    def sigma_nodes(self):
        return self.n_theta * self.n_phi

    @classmethod
    def bgk(cls, tau=1.0):
        return cls("bgk", tau=tau)

    @classmethod
    def hard_sphere(cls, **kw):
        return cls("hard_sphere", **kw)

    @classmethod
    def vhs(cls, gamma, b0, **kw):
        return cls("vhs", gamma=gamma, b0=b0, **kw)

    @classmethod
    def from_config(cls, d):
        d = dict(d)
        sigma = d.pop("sigma_nodes", None)
        kw = {k: d[k] for k in ("tau", "gamma", "b0", "n_theta", "n_phi") if k in d}
        if sigma is not None:
            sigma = int(sigma)
            nphi = kw.get("n_phi", 8)
            if sigma % nphi:
                raise ConfigError(f"sigma_nodes={sigma} is not a multiple of n_phi={nphi}")
            kw["n_theta"] = sigma // nphi
        return cls(d.get("model", "bgk"), **kw)

    def as_dict(self):
        return {
            "model": self.model,
            "tau": self.tau,
            "gamma": self.gamma,
            "b0": self.b0,
            "n_theta": self.n_theta,
            "n_phi": self.n_phi,
        }


def angular_rule(n_theta, n_phi):
    """Product rule on the half sphere (cos theta in [0, 1]) with weights doubled to 4 pi.

    Returns (cos theta, sin theta, cos phi, sin phi, weight) per node.  Nodes
    ``b`` and ``b + n_phi/2`` have exactly opposite (cos phi, sin phi), which
    pairs every collision with its twin.
    """
    x, w = np.polynomial.legendre.leggauss(n_theta)
    ct = 0.5 * (x + 1.0)
    wt = 0.5 * w
    st = np.sqrt(1.0 - ct**2)
    half = n_phi // 2
    phi = (np.arange(half) + 0.5) * 2 * np.pi / n_phi
    cp = np.concatenate([np.cos(phi), -np.cos(phi)])
    sp = np.concatenate([np.sin(phi), -np.sin(phi)])
    CT, CP = np.meshgrid(ct, cp, indexing="ij")
    ST, SP = np.meshgrid(st, sp, indexing="ij")
    W = np.repeat(wt[:, None], n_phi, axis=1) * (2 * np.pi / n_phi) * 2.0
    return CT.ravel(), ST.ravel(), CP.ravel(), SP.ravel(), W.ravel()


def _args(kernel, grid):
    ct, st, cp, sp, aw = angular_rule(kernel.n_theta, kernel.n_phi)
    return (np.ascontiguousarray(grid.nodes), grid.cutoff, grid.h, grid.n), (ct, st, cp, sp, aw)


def _as_columns(f, grid):
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != grid.size:
        raise ValueError(f"velocity axis has {f.shape[-1]} entries, grid has {grid.size}")
    return np.ascontiguousarray(f.reshape(-1, grid.size).T), f.shape


def q_bilinear(g, h, kernel, grid):
    """Quadrature of the integral of B (g'_* h' - g_* h) over sigma and v_* (velocity index last)."""
    if kernel.is_bgk:
        raise UnsupportedOperation("the BGK surrogate has no bilinear collision operator")
    G, shape = _as_columns(g, grid)
    H, _ = _as_columns(h, grid)
    if G.shape != H.shape:
        G, H = np.broadcast_arrays(G, H)
        G, H = np.ascontiguousarray(G), np.ascontiguousarray(H)
    out = np.zeros_like(G)
    gargs, ang = _args(kernel, grid)
    K.q_batch(*gargs, G, H, *ang, float(kernel.gamma), float(kernel.b0), out)
    return out.T.reshape(np.broadcast_shapes(np.shape(g), np.shape(h)))


def _inv_sqrt_mu(grid):
    sm = grid.sqrt_maxwellian
    return np.where(grid.maxwellian > MU_FLOOR, 1.0 / np.where(sm > 0, sm, 1.0), 0.0)


def gamma_bilinear(g, h, kernel, grid):
    """Gamma(g, h).

    Collision models: mu^{-1/2} Q(sqrt(mu) g, sqrt(mu) h), zero where mu is
    below the floor.  BGK: the quadratic term of the local-Maxwellian
    relaxation, (1/(2 tau)) (I - P)[X(g) X(h) sqrt(mu)] with
    Pg = X(g) sqrt(mu).
    """
    if kernel.is_bgk:
        return _gamma_bgk(g, h, kernel, grid)
    sm = grid.sqrt_maxwellian
    q = q_bilinear(np.asarray(g) * sm, np.asarray(h) * sm, kernel, grid)
    return q * _inv_sqrt_mu(grid)


def _gamma_bgk(g, h, kernel, grid):
    fg, _, _ = project_P(g, grid)
    fh, _, _ = project_P(h, grid)
    v = grid.nodes
    vsq = grid.speed_squared

    def poly(f):
        p = f.a[..., None] + f.c[..., None] * vsq
        for d in range(3):
            p = p + f.b[d][..., None] * v[:, d]
        return p

    prod = poly(fg) * poly(fh) * grid.sqrt_maxwellian
    _, _, micro = project_P(prod, grid)
    return micro / (2.0 * kernel.tau)


# --------------------------------------------------------------------------
# linearized operator


@dataclass
class LinearOperatorHandle:
    """L on the velocity grid, assembled (dense) or matrix-free.

    For collision models L is the symmetric weak form
    (1/4) sum B mu mu_* (F' + F'_* - F - F_*)^2 (F = f/sqrt(mu)), followed by
    (I - P) on both sides.  It is positive semidefinite by construction and
    its null space contains the five collision invariants exactly.
    ``symmetry_deviation`` is the relative Frobenius asymmetry before the
    final (M + M^T)/2.
    """

    kernel: CollisionKernel
    grid: object
    mode: str
    matrix: np.ndarray = None
    symmetry_deviation: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def assembled(self):
        return self.mode == "assembled"

    def apply(self, g):
        return apply_L(g, self, self.grid)

    def eigh(self):
        if "eigh" not in self._cache:
            if not self.assembled:
                raise UnsupportedOperation("eigen-decomposition needs an assembled operator")
            self._cache["eigh"] = np.linalg.eigh(self.matrix)
        return self._cache["eigh"]

    def spectral_gap(self, null_tol=1e-8):
        """Smallest eigenvalue above null_tol * max|eigenvalue|."""
        w, _ = self.eigh()
        scale = max(abs(w).max(), 1e-300)
        nz = w[w > null_tol * scale]
        return float(nz.min()) if nz.size else 0.0


def _project_both(M, grid):
    nb = null_basis(grid)
    Q = nb.psi.T * np.sqrt(nb.h3)  # Euclidean-orthonormal columns (uniform weights)
    M = M - (M @ Q) @ Q.T
    return M - Q @ (Q.T @ M)


def assemble_L_matrix(kernel, grid, limit=ASSEMBLY_LIMIT):
    """Dense L (Nv x Nv) acting on velocity vectors."""
    nv = grid.size
    if nv > limit:
        raise ResourceError(
            f"grid has {nv} velocity nodes, above the assembly limit {limit}; use matrix-free mode"
        )
    if kernel.is_bgk:
        nb = null_basis(grid)
        M = (np.eye(nv) - nb.psi.T @ nb.psi * nb.h3) / kernel.tau
        return LinearOperatorHandle(kernel, grid, "assembled", M, 0.0)
    gargs, ang = _args(kernel, grid)
    U = np.zeros((nv, nv))
    K.l_upper(*gargs, grid.sqrt_maxwellian, *ang, float(kernel.gamma), float(kernel.b0), U)
    # mirror orbit partners, then U[min(r, c), max(r, c)] holds both (r, c) and (c, r)
    U += U[::-1, ::-1].copy()
    M = 0.5 * (U + U.T)
    Mp = _project_both(M, grid)
    dev = float(np.linalg.norm(Mp - Mp.T) / max(np.linalg.norm(Mp), 1e-300))
    return LinearOperatorHandle(kernel, grid, "assembled", 0.5 * (Mp + Mp.T), dev)


def matrix_free_handle(kernel, grid):
    return LinearOperatorHandle(kernel, grid, "matrix_free")


def linearized_raw(g, kernel, grid):
    """-Gamma(sqrt mu, g) - Gamma(g, sqrt mu) evaluated through the collision quadrature."""
    if kernel.is_bgk:
        _, _, g2 = project_P(g, grid)
        return g2 / kernel.tau
    sm = grid.sqrt_maxwellian
    return -gamma_bilinear(sm, g, kernel, grid) - gamma_bilinear(g, sm, kernel, grid)


def apply_L(g, op, grid):
    """L g along the velocity axis; ``op`` is a handle or a kernel (matrix-free)."""
    if isinstance(op, CollisionKernel):
        op = matrix_free_handle(op, grid)
    g = np.asarray(g, dtype=float)
    if g.shape[-1] != grid.size:
        raise ValueError(f"velocity axis has {g.shape[-1]} entries, grid has {grid.size}")
    kernel = op.kernel
    if op.assembled:
        return g @ op.matrix.T
    _, _, g2 = project_P(g, grid)
    if kernel.is_bgk:
        return g2 / kernel.tau
    G, shape = _as_columns(g2, grid)
    out = np.zeros_like(G)
    gargs, ang = _args(kernel, grid)
    K.l_apply(*gargs, grid.sqrt_maxwellian, *ang, float(kernel.gamma), float(kernel.b0), G, out)
    _, _, res = project_P(out.T.reshape(shape), grid)
    return res
