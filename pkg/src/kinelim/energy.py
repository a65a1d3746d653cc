"""Triple norm, the energy/dissipation functionals E_N, C_N, D_N and sampled equivalence constants."""

from dataclasses import dataclass, asdict
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from . import _kernels as K
from .collision import ASSEMBLY_LIMIT, CollisionKernel, apply_L, gamma_bilinear
from .errors import ConfigError, ResourceError, UnsupportedOperation, UsageError
from .macro import build_moment_basis, null_basis, project_P
from .velocity import weighted_l2_norm

__all__ = [
    "TripleNorm",
    "EnergyReport",
    "EquivalenceConstants",
    "triple_norm",
    "triple_norm_matrix",
    "energy_functionals",
    "check_equivalence_constants",
    "D1_DEFAULT",
]

D1_DEFAULT = 0.01


class TripleNorm(float):
    """A float carrying the variant label ("standard", "literal", "truncated" or "l2")."""

    def __new__(cls, value, label):
        obj = super().__new__(cls, value)
        obj.label = label
        return obj


def _rule(kernel, theta_min):
    """Angular nodes on cos(theta) in [0, cos(theta_min)] with n_theta Gauss nodes."""
    x, w = np.polynomial.legendre.leggauss(kernel.n_theta)
    top = np.cos(theta_min)
    ct = 0.5 * top * (x + 1.0)
    wt = 0.5 * top * w
    st = np.sqrt(1.0 - ct**2)
    half = kernel.n_phi // 2
    phi = (np.arange(half) + 0.5) * 2 * np.pi / kernel.n_phi
    cp = np.concatenate([np.cos(phi), -np.cos(phi)])
    sp = np.concatenate([np.sin(phi), -np.sin(phi)])
    CT = np.repeat(ct, kernel.n_phi)
    ST = np.repeat(st, kernel.n_phi)
    W = np.repeat(wt, kernel.n_phi) * (4 * np.pi / kernel.n_phi)
    return CT, ST, np.tile(cp, kernel.n_theta), np.tile(sp, kernel.n_theta), W


def _label(literal, theta_min, singularity):
    if singularity is not None:
        if theta_min is None:
            raise UnsupportedOperation("a non-cutoff triple norm needs a truncation angle theta_min")
        return "truncated"
    if theta_min:
        return "truncated"
    return "literal" if literal else "standard"


def _angular(kernel, theta_min, singularity):
    ct, st, cp, sp, w = _rule(kernel, theta_min or 0.0)
    if singularity is not None:
        if not 0.0 < singularity < 1.0:
            raise ConfigError("angular singularity s must lie in (0, 1)")
        w = w * np.arccos(ct) ** (-2.0 - 2.0 * singularity)
    return ct, st, cp, sp, w


def triple_norm(f, kernel, grid, literal=False, theta_min=None, singularity=None):
    """|||f||| for one velocity function.

    The two integrals are B mu_* (f' - f)^2 and B f_*^2 (sqrt(mu)' - sqrt(mu))^2;
    ``literal`` uses mu_*^2 and (mu' - mu)^2 instead.  A non-cutoff angular
    factor b ~ theta^(-2-2s) (``singularity`` = s) needs ``theta_min``.  For
    BGK the norm is the plain L^2(dv) norm.
    """
    f = np.asarray(f, float)
    if f.shape != (grid.size,):
        raise ValueError(f"expected one velocity function of length {grid.size}, got {f.shape}")
    if kernel.is_bgk:
        return TripleNorm(np.sqrt(grid.h**3 * f @ f), "l2")
    label = _label(literal, theta_min, singularity)
    ang = _angular(kernel, theta_min, singularity)
    first, second = K.triple_form(
        np.ascontiguousarray(grid.nodes), grid.cutoff, grid.h, grid.n,
        grid.maxwellian, grid.sqrt_maxwellian, *ang,
        float(kernel.gamma), float(kernel.b0), bool(literal), 0.0,
        np.ascontiguousarray(f), np.zeros((1, 1)), False,
    )
    return TripleNorm(np.sqrt(max(first + second, 0.0)), label)


@lru_cache(maxsize=8)
def _matrix_cached(kernel, V, n, literal, theta_min, singularity):
    from .velocity import VelocityGrid

    grid = VelocityGrid(V, n)
    nv = grid.size
    M = np.zeros((nv, nv))
    ang = _angular(kernel, theta_min, singularity)
    K.triple_form(
        np.ascontiguousarray(grid.nodes), grid.cutoff, grid.h, grid.n,
        grid.maxwellian, grid.sqrt_maxwellian, *ang,
        float(kernel.gamma), float(kernel.b0), bool(literal), 0.0,
        np.zeros(nv), M, True,
    )
    M = 0.5 * (M + M.T)
    M.setflags(write=False)
    return M


def triple_norm_matrix(kernel, grid, literal=False, theta_min=None, singularity=None, limit=ASSEMBLY_LIMIT):
    """Symmetric T with |||f|||^2 = f . T f (h^3 I for BGK)."""
    if kernel.is_bgk:
        return np.eye(grid.size) * grid.h**3
    _label(literal, theta_min, singularity)
    if grid.size > limit:
        raise ResourceError(f"triple-norm matrix for {grid.size} nodes exceeds the limit {limit}")
    return _matrix_cached(kernel, grid.cutoff, grid.n, bool(literal), theta_min, singularity)


# ------------------------------------------------------------------ functionals


@dataclass
class EnergyReport:
    t: float
    E_N: float
    C_N: float
    D_N: float
    E_N_combined: float
    N: int

    def as_dict(self):
        return asdict(self)


def _spectra(f, space, lead=0):
    """Full FFT over the spatial axes of an array with ``lead`` component axes in front."""
    axes = tuple(range(lead, lead + space.d))
    return sfft.fftn(f, axes=axes, workers=space.workers)


def _norm_sq(fh, mult, space, lead=0, weight=1.0):
    p = np.abs(fh) ** 2
    p = np.moveaxis(p, tuple(range(lead, lead + space.d)), tuple(range(space.d)))
    p = p.reshape(space.shape + (-1,)).sum(axis=-1)
    return float(np.sum(mult * p) * weight * space.dx**space.d / space.n**space.d)


def _cross_terms(fields, r, space, N, basis):
    """sum_{|alpha|<=N-1} (grad d^a r, d^a (a, -b, c)) - (d^a b, grad d^a a), full-tensor alpha."""
    labels = basis.labels
    q = [labels.index(f"v{i + 1}|v|2") for i in range(3)]
    pair = {}
    for i in range(3):
        for j in range(i, 3):
            pair[(i, j)] = pair[(j, i)] = labels.index(f"v{i + 1}v{j + 1}")
    d = space.d
    mult = space.hn_multiplier(N - 1) if N >= 1 else np.zeros(space.shape)
    vol = space.dx**d / space.n**d

    def F(x):
        return sfft.fftn(x, axes=tuple(range(d)), workers=space.workers)

    def ip(xh, yh):
        return float(np.real(np.sum(mult * np.conj(xh) * yh)) * vol)

    kk = space.k
    ah, ch = F(fields.a), F(fields.c)
    bh = [F(fields.b[i]) for i in range(3)]
    rh = F(r)
    total = 0.0
    # div of the heat-flux-like moments against a and c
    div_q = sum(1j * kk[i] * rh[..., q[i]] for i in range(d))
    total += ip(div_q, ah) + ip(div_q, ch)
    # stress-like moments against -b
    for i in range(3):
        div_ri = sum(1j * kk[j] * rh[..., pair[(i, j)]] for j in range(d))
        total -= ip(div_ri, bh[i])
    for i in range(d):
        total -= ip(bh[i], 1j * kk[i] * ah)
    return total


def energy_functionals(g, kernel, grid, space, N, t=0.0, eps=None, d1=D1_DEFAULT, tmatrix=None):
    """EnergyReport for g of shape (*spatial, Nv).

    E_N = ||g||_{H^N(L^2_v)}, C_N = ||grad_x A||_{H^{N-1}} with A measured in
    the orthonormal null-space coordinates (so C_N <= E_N holds exactly) and
    D_N = ||g_2||_{X^N}.  Derivative orders use the full-tensor convention
    sum_{j<=N} |k|^{2j}.  E_N_combined adds the d1 * eps cross terms when eps
    is given (signed square root of the combined square).
    """
    N = int(N)
    if N < 1:
        raise UsageError("C_N needs at least one spatial derivative (N >= 1)")
    g = np.asarray(g, float)
    if g.shape != space.shape + (grid.size,):
        raise ValueError(f"expected shape {space.shape + (grid.size,)}, got {g.shape}")
    h3 = grid.h**3
    multN = space.hn_multiplier(N)
    gh = _spectra(g, space)
    E2 = _norm_sq(gh, multN, space, weight=h3)

    nb = null_basis(grid)
    beta = nb.coefficients(g)  # (*spatial, 5) orthonormal coordinates
    bh = _spectra(beta, space)
    C2 = _norm_sq(bh, space.ksq * space.hn_multiplier(N - 1), space)

    fields, _, g2 = project_P(g, grid)
    g2h = _spectra(g2, space)
    if kernel.is_bgk:
        D2 = _norm_sq(g2h, multN, space, weight=h3)
    else:
        T = triple_norm_matrix(kernel, grid) if tmatrix is None else tmatrix
        q = np.real(np.sum(np.conj(g2h) * (g2h @ T), axis=-1))
        D2 = float(np.sum(multN * q) * space.dx**space.d / space.n**space.d)

    comb = E2
    if eps is not None:
        basis = build_moment_basis(grid)
        r = basis.pair(g2)
        comb = E2 + d1 * eps * _cross_terms(fields, r, space, N, basis)
    Ec = float(np.sign(comb) * np.sqrt(abs(comb)))
    return EnergyReport(float(t), float(np.sqrt(E2)), float(np.sqrt(C2)), float(np.sqrt(max(D2, 0.0))), Ec, N)


# ---------------------------------------------------------------- equivalence


@dataclass
class EquivalenceConstants:
    C1: float
    C2: float
    c_coercive: float
    C_trilinear: float
    samples: int

    def as_dict(self):
        return asdict(self)


def _samples(grid, count, rng):
    # random coefficients with a mu^{1/4} envelope: smooth enough decay, rough in v
    return rng.standard_normal((count, grid.size)) * grid.maxwellian**0.25


def check_equivalence_constants(samples, kernel, grid, op=None, seed=0):
    """Extreme sampled ratios for the norm equivalence, coercivity and trilinear bounds.

    C1 = min |||f|||^2 / (2 ||f||^2_{L^2_{gamma/2}}), C2 = max |||f|||^2 / ||f||^2_{L^2_{gamma/2}}
    (the s = 0 cutoff form), c_coercive = min (L g, g) / |||g|||^2 over g in N-perp,
    C_trilinear = max |(Gamma(f, g), h)| / (||f|| |||g||| |||h|||).
    """
    samples = int(samples)
    if samples <= 0:
        raise UsageError("at least one sample is required")
    rng = np.random.default_rng(seed)
    T = triple_norm_matrix(kernel, grid)
    h3 = grid.h**3
    gam = 0.0 if kernel.is_bgk else kernel.gamma

    def tn2(F):
        return np.einsum("si,ij,sj->s", F, T, F)

    F = _samples(grid, samples, rng)
    keep = np.linalg.norm(F, axis=1) > 0
    F = F[keep]
    t2 = tn2(F)
    w2 = weighted_l2_norm(F, grid, gam / 2.0) ** 2
    ratio = t2 / w2
    C1 = float(np.min(ratio) / 2.0)
    C2 = float(np.max(ratio))

    _, _, G = project_P(_samples(grid, samples, rng), grid)
    lg = apply_L(G, op if op is not None else kernel, grid)
    coer = h3 * np.sum(lg * G, axis=1) / tn2(G)
    c_coercive = float(np.min(coer))

    f1, f2, f3 = (_samples(grid, samples, rng) for _ in range(3))
    gm = gamma_bilinear(f1, f2, kernel, grid)
    num = np.abs(h3 * np.sum(gm * f3, axis=1))
    den = np.sqrt(h3 * np.sum(f1 * f1, axis=1)) * np.sqrt(tn2(f2)) * np.sqrt(tn2(f3))
    C_tri = float(np.max(num / den))
    out = EquivalenceConstants(C1, C2, c_coercive, C_tri, int(keep.sum()))
    for name in ("C1", "C2", "c_coercive", "C_trilinear"):
        if not getattr(out, name) > 0:
            raise ArithmeticError(f"sampled constant {name} is not positive: {getattr(out, name)}")
    return out
