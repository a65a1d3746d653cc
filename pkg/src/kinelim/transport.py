"""Viscosity and heat conductivity from inverting L on the orthogonal complement of the null space."""

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .collision import LinearOperatorHandle, apply_L, assemble_L_matrix, matrix_free_handle
from .errors import IllPosedInput, SolverError
from .macro import null_basis, project_P

__all__ = [
    "TransportCoefficients",
    "solve_inverse_L",
    "compute_transport",
    "viscous_moments",
    "heat_moments",
]

NULL_WARN = 1e-8
NULL_REJECT = 0.99


def _orthonormal_null(grid):
    nb = null_basis(grid)
    return nb.psi.T * np.sqrt(nb.h3)  # Euclidean-orthonormal columns


def _check_rhs(rhs, grid, reject):
    _, Pr, r2 = project_P(rhs, grid)
    total = np.linalg.norm(rhs)
    if total == 0.0:
        return r2
    frac = np.linalg.norm(Pr) / total
    if frac > reject:
        raise IllPosedInput(f"right-hand side is {frac:.3g} null-space by norm; L is not invertible there")
    if frac > NULL_WARN:
        warnings.warn(f"right-hand side had a null-space fraction {frac:.3g}; projected before solving", stacklevel=3)
    return r2


def _cholesky(op):
    if "chol" not in op._cache:
        Q = _orthonormal_null(op.grid)
        op._cache["chol"] = sla.cho_factor(op.matrix + Q @ Q.T, lower=True)
    return op._cache["chol"]


def solve_inverse_L(rhs, op, grid, method="auto", tol=1e-10, maxiter=10_000, reject=NULL_REJECT):
    """f in N-perp with L f = rhs (velocity index last, leading axes batched).

    ``method``: "closed_form" (BGK: tau times the projected rhs),
    "cholesky" (assembled operator, factor of L + P), "cg"
    (conjugate gradients on L + P, which is SPD and leaves N-perp
    invariant; iterates are projected at the end) or "auto".
    """
    if not isinstance(op, LinearOperatorHandle):
        op = matrix_free_handle(op, grid)
    rhs = np.asarray(rhs, float)
    shape = rhs.shape
    R = _check_rhs(rhs, grid, reject).reshape(-1, grid.size)
    if method == "auto":
        method = "cholesky" if op.assembled else ("closed_form" if op.kernel.is_bgk else "cg")
    out = np.zeros_like(R)
    if method == "closed_form":
        if not op.kernel.is_bgk:
            raise ValueError("the closed-form inverse exists only for BGK")
        out = op.kernel.tau * R
    elif method == "cholesky":
        if not op.assembled:
            raise ValueError("the Cholesky path needs an assembled operator")
        out = sla.cho_solve(_cholesky(op), R.T).T
    elif method == "cg":
        Q = _orthonormal_null(grid)

        def mv(x):
            x = np.asarray(x).ravel()
            return apply_L(x, op, grid) + Q @ (Q.T @ x)

        A = spla.LinearOperator((grid.size, grid.size), matvec=mv, dtype=float)
        for i, r in enumerate(R):
            if not np.any(r):
                continue
            x, info = spla.cg(A, r, rtol=tol, atol=0.0, maxiter=maxiter)
            if info != 0:
                res = np.linalg.norm(mv(x) - r) / np.linalg.norm(r)
                raise SolverError(f"conjugate gradients stopped after {maxiter} iterations", res)
            out[i] = x
    else:
        raise ValueError(f"unknown solve method {method!r}")
    _, _, out = project_P(out, grid)
    return out.reshape(shape)


def viscous_moments(grid):
    """A_ij sqrt(mu) = (v_i v_j - delta_ij |v|^2 / 3) sqrt(mu), shape (3, 3, Nv)."""
    v, sm = grid.nodes, grid.sqrt_maxwellian
    A = np.einsum("ni,nj->ijn", v, v)
    for i in range(3):
        A[i, i] -= grid.speed_squared / 3.0
    return A * sm


def heat_moments(grid):
    """B_i sqrt(mu) = v_i (|v|^2/2 - 3/2) sqrt(mu), shape (3, Nv)."""
    return (grid.nodes.T * (0.5 * grid.speed_squared - 1.5)) * grid.sqrt_maxwellian


@dataclass
class TransportCoefficients:
    """nu = (1/15) sum_ij (A_ij, Ahat_ij), kappa = (2/15) sum_i (B_i, Bhat_i).

    ``nu_limit`` = (1/10) sum_ij (A_ij, Ahat_ij) is the kinematic viscosity
    that appears in the incompressible limit (tau for BGK); ``kappa_limit``
    is the diffusivity of (3/5) theta - (2/5) rho in the same limit and
    coincides with ``kappa`` because Bhat lies in N-perp.
    """

    nu: float
    kappa: float
    nu_limit: float
    kappa_limit: float
    nu12: float
    residual_A: float
    residual_B: float
    method: str
    meta: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


def compute_transport(kernel, grid, op=None, method="auto", tol=1e-10):
    if op is None:
        small = not kernel.is_bgk and grid.size <= 16**3
        op = assemble_L_matrix(kernel, grid) if small else matrix_free_handle(kernel, grid)
    h3 = grid.h**3
    A = viscous_moments(grid)
    iu = [(i, j) for i in range(3) for j in range(i, 3)]
    rhsA = np.stack([A[i, j] for i, j in iu])
    _, _, rhsA2 = project_P(rhsA, grid)
    Ahat = solve_inverse_L(rhsA2, op, grid, method=method, tol=tol)
    B = heat_moments(grid)
    _, _, B2 = project_P(B, grid)
    Bhat = solve_inverse_L(B2, op, grid, method=method, tol=tol)

    pairs = h3 * np.sum(rhsA * Ahat, axis=-1)
    mult = np.array([1.0 if i == j else 2.0 for i, j in iu])
    sumA = float(np.sum(mult * pairs))
    sumB = float(h3 * np.sum(B * Bhat))

    def rel(res, rhs):
        return float(np.max(np.linalg.norm(res, axis=-1) / np.linalg.norm(rhs, axis=-1)))

    resA = rel(apply_L(Ahat, op, grid) - rhsA2, rhsA2)
    resB = rel(apply_L(Bhat, op, grid) - B2, B2)
    used = method
    if method == "auto":
        used = "cholesky" if op.assembled else ("closed_form" if kernel.is_bgk else "cg")
    meta = {
        "kernel": kernel.as_dict(),
        "grid": {"cutoff": grid.cutoff, "n": grid.n},
        "summation": "implicit over repeated indices i, j",
        "rhs_convention": "fluctuation space, rhs = A_ij sqrt(mu) and (I - P) B_i sqrt(mu)",
    }
    return TransportCoefficients(
        nu=sumA / 15.0,
        kappa=2.0 * sumB / 15.0,
        nu_limit=sumA / 10.0,
        kappa_limit=2.0 * sumB / 15.0,
        nu12=float(pairs[iu.index((0, 1))]),
        residual_A=resA,
        residual_B=resB,
        method=used,
        meta=meta,
    )
