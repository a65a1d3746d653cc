"""Periodic torus [0, L)^d: spectral derivatives, Sobolev norms, Leray projection, free streaming.

Fields carry their spatial axes first.  Scalar fields have shape ``(n,)*d``
(optionally followed by trailing axes such as the velocity index); vector
fields put a component axis in front.
"""

import numpy as np
import scipy.fft as sfft

from .errors import ConfigError

__all__ = ["Torus"]


class Torus:
    def __init__(self, d, n, length=2 * np.pi, workers=None):
        if d not in (1, 2, 3):
            raise ConfigError(f"spatial dimension must be 1, 2 or 3, got {d}")
        if int(n) != n or n < 4 or n % 2:
            raise ConfigError(f"cells per axis must be an even integer >= 4, got {n}")
        self.d, self.n, self.length = int(d), int(n), float(length)
        self.workers = workers
        self.dx = self.length / self.n
        self.axes = tuple(range(self.d))
        self.shape = (self.n,) * self.d
        x1 = np.arange(self.n) * self.dx
        self.x = np.stack(np.meshgrid(*([x1] * self.d), indexing="ij"))
        k1 = sfft.fftfreq(self.n, d=1.0 / self.n) * (2 * np.pi / self.length)
        kr1 = sfft.rfftfreq(self.n, d=1.0 / self.n) * (2 * np.pi / self.length)
        self.k = np.stack(np.meshgrid(*([k1] * self.d), indexing="ij"))
        self.ksq = np.sum(self.k**2, axis=0)
        kr = [k1] * (self.d - 1) + [kr1]
        self.kr = np.stack(np.meshgrid(*kr, indexing="ij"))
        # odd derivatives drop the unpaired Nyquist mode
        nyq = self.n // 2 * (2 * np.pi / self.length)
        self.kr_odd = np.where(np.abs(self.kr) == nyq, 0.0, self.kr)
        self.k_odd = np.where(np.abs(self.k) == nyq, 0.0, self.k)
        self.nyquist_mask_r = np.any(np.abs(self.kr) == nyq, axis=0)

    @property
    def volume(self):
        return self.length**self.d

    # ------------------------------------------------------------- transforms
    def rfft(self, f):
        return sfft.rfftn(f, axes=self.axes, workers=self.workers)

    def irfft(self, fh):
        return sfft.irfftn(fh, s=self.shape, axes=self.axes, workers=self.workers)

    def _bcast(self, kgrid, f):
        return kgrid.reshape(kgrid.shape + (1,) * (f.ndim - self.d))

    # ------------------------------------------------------------ derivatives
    def deriv(self, f, axis):
        fh = self.rfft(f)
        return self.irfft(1j * self._bcast(self.kr_odd[axis], fh) * fh)

    def grad(self, f):
        fh = self.rfft(f)
        return np.stack([self.irfft(1j * self._bcast(self.kr_odd[a], fh) * fh) for a in self.axes])

    def div(self, u):
        """Divergence of a vector field whose first ``d`` components are spatial."""
        out = np.zeros(u.shape[1:])
        for a in self.axes:
            out = out + self.deriv(u[a], a)
        return out

    def laplacian(self, f):
        fh = self.rfft(f)
        ksq = np.sum(self.kr**2, axis=0)
        return self.irfft(-self._bcast(ksq, fh) * fh)

    def v_grad(self, g, nodes):
        """v . grad_x g for g with velocity index last; uses the first d components of v."""
        gh = self.rfft(g)
        phase = np.zeros(gh.shape)
        for a in self.axes:
            phase = phase + self._bcast(self.kr_odd[a], gh) * nodes[:, a]
        return self.irfft(1j * phase * gh)

    def free_stream(self, g, nodes, tau):
        """Exact solution of g_t + v.grad g = 0 after time tau (Nyquist modes removed)."""
        gh = self.rfft(g)
        phase = np.zeros(gh.shape)
        for a in self.axes:
            phase = phase + self._bcast(self.kr[a], gh) * nodes[:, a]
        gh *= np.exp(-1j * tau * phase)
        gh[self.nyquist_mask_r] = 0.0
        return self.irfft(gh)

    # ------------------------------------------------------------------ norms
    def integrate(self, f):
        return np.sum(f, axis=self.axes) * self.dx**self.d

    def mean(self, f):
        return np.mean(f, axis=self.axes)

    def l2(self, f, spatial_first=None):
        """L^2 norm over all axes; component axes in front are allowed."""
        f = np.asarray(f)
        return float(np.sqrt(np.sum(f * f) * self.dx**self.d))

    def _spectrum(self, f, comp_axes):
        # |fhat|^2 summed over every non-spatial axis, on the full k grid
        axes = tuple(range(comp_axes, comp_axes + self.d))
        fh = sfft.fftn(f, axes=axes, workers=self.workers)
        p = np.abs(fh) ** 2
        p = np.moveaxis(p, axes, tuple(range(self.d)))
        return p.reshape(self.shape + (-1,)).sum(axis=-1)

    def sobolev_sq(self, f, multiplier, comp_axes=0):
        """sum_k m(k) |fhat|^2 with the torus normalization (Parseval)."""
        p = self._spectrum(f, comp_axes)
        return float(np.sum(multiplier * p) * self.dx**self.d / self.n**self.d)

    def hn_multiplier(self, N):
        """sum_{j<=N} |k|^{2j}: every full-tensor derivative of order <= N."""
        return sum(self.ksq**j for j in range(int(N) + 1))

    def hn_norm(self, f, N, comp_axes=0):
        return np.sqrt(self.sobolev_sq(f, self.hn_multiplier(N), comp_axes))

    def hs_norm(self, f, s, comp_axes=0):
        """Bessel-potential norm with multiplier (1 + |k|^2)^s (fractional s allowed)."""
        return np.sqrt(self.sobolev_sq(f, (1.0 + self.ksq) ** s, comp_axes))

    # ---------------------------------------------------------------- Leray
    def leray(self, w):
        """Project the first d components of w onto divergence-free fields.

        Extra components (e.g. the third velocity component on a 2-D torus)
        are passed through unchanged.
        """
        w = np.asarray(w, float)
        out = w.copy()
        wh = np.stack([self.rfft(w[a]) for a in self.axes])
        kr = self.kr_odd
        ksq = np.sum(kr**2, axis=0)
        safe = np.where(ksq == 0, 1.0, ksq)
        kdotw = np.sum(kr * wh, axis=0) / safe
        for a in self.axes:
            out[a] = self.irfft(wh[a] - kr[a] * kdotw)
        return out
