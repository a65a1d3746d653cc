"""Truncated Cartesian velocity grid, the normalized Maxwellian and weighted norms."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = ["VelocityGrid", "build_velocity_grid", "weighted_l2_norm", "inner"]


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform midpoint grid on [-V, V]^3.

    Nodes are flattened in C order over (v1, v2, v3); ``nodes[m]`` is the
    velocity of flat index ``m``.
    """

    cutoff: float
    n: int
    tol_mass: float = 1e-6
    axis: np.ndarray = field(init=False, repr=False)
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    maxwellian: np.ndarray = field(init=False, repr=False)
    sqrt_maxwellian: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        V, n = float(self.cutoff), int(self.n)
        h = 2.0 * V / n
        axis = -V + h * (np.arange(n) + 0.5)
        # exact sign symmetry: the midpoint formula can leave ulp-level asymmetry
        axis = 0.5 * (axis - axis[::-1])
        v1, v2, v3 = np.meshgrid(axis, axis, axis, indexing="ij")
        nodes = np.stack([v1.ravel(), v2.ravel(), v3.ravel()], axis=1)
        vsq = np.einsum("ij,ij->i", nodes, nodes)
        mu = (2.0 * np.pi) ** -1.5 * np.exp(-0.5 * vsq)
        sqrt_mu = (2.0 * np.pi) ** -0.75 * np.exp(-0.25 * vsq)
        for name, val in [
            ("axis", axis),
            ("nodes", nodes),
            ("weights", np.full(n**3, h**3)),
            ("maxwellian", mu),
            ("sqrt_maxwellian", sqrt_mu),
        ]:
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def h(self):
        return 2.0 * self.cutoff / self.n

    @property
    def size(self):
        return self.n**3

    @property
    def speed_squared(self):
        return np.einsum("ij,ij->i", self.nodes, self.nodes)

    def mirror_index(self):
        """Flat index of the node -v for every node v."""
        idx = np.arange(self.size).reshape(self.n, self.n, self.n)
        return idx[::-1, ::-1, ::-1].ravel()

    def integrate(self, f):
        """Quadrature over the last axis, summing mirror pairs (v, -v) first.

        Pairing makes odd integrands cancel exactly; the order is fixed so the
        result is reproducible bit for bit.
        """
        f = np.asarray(f, dtype=float) * self.weights
        half = self.size // 2
        return np.sum(f[..., :half] + f[..., ::-1][..., :half], axis=-1)

    def mass_defect(self):
        return 1.0 - float(self.integrate(self.maxwellian))


def build_velocity_grid(V, n_v, tol_mass=1e-6):
    """Build the velocity grid and check the Maxwellian mass budget."""
    if not V > 0:
        raise ConfigError(f"velocity cutoff must be positive, got {V}")
    if int(n_v) != n_v or n_v < 8 or n_v % 2:
        raise ConfigError(f"points per axis must be an even integer >= 8, got {n_v}")
    grid = VelocityGrid(float(V), int(n_v), tol_mass)
    defect = grid.mass_defect()
    if not (-tol_mass <= defect <= tol_mass):
        raise ConfigError(
            f"Maxwellian mass {1 - defect:.3e} outside 1 +/- {tol_mass:g} "
            f"for V={V}, n_v={n_v}; enlarge V or refine"
        )
    return grid


def inner(f, g, grid):
    """L^2(dv) inner product along the last axis."""
    return np.tensordot(f * g, grid.weights, axes=([-1], [0]))


def weighted_l2_norm(f, grid, l=0.0):
    """(sum_w <v>^{2l} f^2)^{1/2} along the last axis."""
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != grid.size:
        raise ValueError(f"function has {f.shape[-1]} velocity values, grid has {grid.size}")
    weight = grid.weights * (1.0 + grid.speed_squared) ** l
    return np.sqrt(np.tensordot(f * f, weight, axes=([-1], [0])))
