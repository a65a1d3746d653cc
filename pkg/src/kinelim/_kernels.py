"""Compiled collision loops.

A binary collision is indexed by (k, j, s): the particle at node k, its
partner at node j and angular node s.  Grid nodes sit at
x_i = -V + (i + 1/2) h along each axis and are flattened as (i1*n + i2)*n + i3.

Two deposition stencils are used.

* ``_stencil17``: trilinear weights plus a second-difference correction
  c_d (-1, 2, -1) along each axis at the nearest node, c_d = t_d(1-t_d)/2.
  It reproduces 1, v and |v|^2 exactly; used for Q.
* ``_star7``: the 7-point quadratic star around the nearest node, also exact
  on 1, v, |v|^2; used for the symmetric weak form of L.
"""

import math

import numpy as np
from numba import njit

N17 = 17
N7 = 7
C34 = (2.0 * math.pi) ** -0.75


@njit(cache=True, inline="always")
def _axis(p, V, h, n):
    # (floor index, fraction, nearest index) along one axis; -1 when the
    # 17-point stencil would leave the grid
    s = (p + V) / h - 0.5
    f = math.floor(s)
    if f < 0 or f + 1 > n - 1:
        return -1, 0.0, -1
    fi = int(f)
    t = s - f
    pn = fi if t < 0.5 else fi + 1
    if pn < 1 or pn > n - 2:
        return -1, 0.0, -1
    return fi, t, pn


@njit(cache=True, inline="always")
def _stencil17(p0, p1, p2, V, h, n, idx, wt):
    a0, t0, n0 = _axis(p0, V, h, n)
    if a0 < 0:
        return False
    a1, t1, n1 = _axis(p1, V, h, n)
    if a1 < 0:
        return False
    a2, t2, n2 = _axis(p2, V, h, n)
    if a2 < 0:
        return False
    m = 0
    for a in range(2):
        wa = t0 if a else 1.0 - t0
        for b in range(2):
            wb = t1 if b else 1.0 - t1
            for c in range(2):
                wc = t2 if c else 1.0 - t2
                idx[m] = ((a0 + a) * n + (a1 + b)) * n + (a2 + c)
                wt[m] = wa * wb * wc
                m += 1
    centre = (n0 * n + n1) * n + n2
    nn = n * n
    c0 = 0.5 * t0 * (1.0 - t0)
    c1 = 0.5 * t1 * (1.0 - t1)
    c2 = 0.5 * t2 * (1.0 - t2)
    idx[8], idx[9], idx[10] = centre - nn, centre, centre + nn
    wt[8], wt[9], wt[10] = -c0, 2.0 * c0, -c0
    idx[11], idx[12], idx[13] = centre - n, centre, centre + n
    wt[11], wt[12], wt[13] = -c1, 2.0 * c1, -c1
    idx[14], idx[15], idx[16] = centre - 1, centre, centre + 1
    wt[14], wt[15], wt[16] = -c2, 2.0 * c2, -c2
    return True


@njit(cache=True, inline="always")
def _star7(p0, p1, p2, V, h, n, idx, wt):
    q0 = (p0 + V) / h
    q1 = (p1 + V) / h
    q2 = (p2 + V) / h
    if q0 < 1.0 or q1 < 1.0 or q2 < 1.0:
        return False
    n0, n1, n2 = int(q0), int(q1), int(q2)
    if n0 > n - 2 or n1 > n - 2 or n2 > n - 2:
        return False
    t0, t1, t2 = q0 - 0.5 - n0, q1 - 0.5 - n1, q2 - 0.5 - n2
    centre = (n0 * n + n1) * n + n2
    nn = n * n
    idx[0] = centre
    wt[0] = 1.0 - t0 * t0 - t1 * t1 - t2 * t2
    idx[1], idx[2] = centre - nn, centre + nn
    wt[1], wt[2] = 0.5 * t0 * (t0 - 1.0), 0.5 * t0 * (t0 + 1.0)
    idx[3], idx[4] = centre - n, centre + n
    wt[3], wt[4] = 0.5 * t1 * (t1 - 1.0), 0.5 * t1 * (t1 + 1.0)
    idx[5], idx[6] = centre - 1, centre + 1
    wt[5], wt[6] = 0.5 * t2 * (t2 - 1.0), 0.5 * t2 * (t2 + 1.0)
    return True


@njit(cache=True, inline="always")
def _frame(w0, w1, w2, out):
    """w-hat and an orthonormal pair (e1, e2) shared by w and -w; returns |w|."""
    nw = math.sqrt(w0 * w0 + w1 * w1 + w2 * w2)
    a0, a1, a2 = w0 / nw, w1 / nw, w2 / nw
    sg = 1.0
    if a0 < 0.0 or (a0 == 0.0 and (a1 < 0.0 or (a1 == 0.0 and a2 < 0.0))):
        sg = -1.0
    s0, s1, s2 = sg * a0, sg * a1, sg * a2
    ab0, ab1, ab2 = abs(s0), abs(s1), abs(s2)
    x0, x1, x2 = 0.0, 0.0, 0.0
    if ab0 <= ab1 and ab0 <= ab2:
        x0 = 1.0
    elif ab1 <= ab2:
        x1 = 1.0
    else:
        x2 = 1.0
    c0 = s1 * x2 - s2 * x1
    c1 = s2 * x0 - s0 * x2
    c2 = s0 * x1 - s1 * x0
    nc = math.sqrt(c0 * c0 + c1 * c1 + c2 * c2)
    c0, c1, c2 = c0 / nc, c1 / nc, c2 / nc
    out[0], out[1], out[2] = a0, a1, a2
    out[3], out[4], out[5] = c0, c1, c2
    out[6] = s1 * c2 - s2 * c1
    out[7] = s2 * c0 - s0 * c2
    out[8] = s0 * c1 - s1 * c0
    return nw


@njit(cache=True, inline="always")
def _post(vk, vj, fr, nw, ct, st, cp, sp, out):
    # v' -> out[0:3], v'_* -> out[3:6]
    for d in range(3):
        sig = ct * fr[d] + st * (cp * fr[3 + d] + sp * fr[6 + d])
        cen = 0.5 * (vk[d] + vj[d])
        out[d] = cen + 0.5 * nw * sig
        out[3 + d] = cen - 0.5 * nw * sig


@njit(cache=True)
def q_batch(nodes, V, h, n, G, H, ct, st, cp, sp, aw, gamma, b0, out):
    """out[:, c] += Q(G[:, c], H[:, c]) in weak (deposition) form.

    A collision is dropped unless both outgoing stencils fit in the grid; the
    rule is symmetric in v' and v'_*, so a collision and its twin
    (j, k, -sigma) are dropped together.
    """
    nv = nodes.shape[0]
    ncol = G.shape[1]
    idx = np.empty(N17, np.int64)
    wt = np.empty(N17)
    idx2 = np.empty(N17, np.int64)
    wt2 = np.empty(N17)
    fr = np.empty(9)
    pv = np.empty(6)
    h3 = h * h * h
    for k in range(nv):
        vk = nodes[k]
        for j in range(nv):
            if j == k:
                continue
            vj = nodes[j]
            nw = _frame(vk[0] - vj[0], vk[1] - vj[1], vk[2] - vj[2], fr)
            bk = h3 * b0 * nw**gamma
            for s in range(ct.shape[0]):
                _post(vk, vj, fr, nw, ct[s], st[s], cp[s], sp[s], pv)
                if not _stencil17(pv[3], pv[4], pv[5], V, h, n, idx2, wt2):
                    continue
                if not _stencil17(pv[0], pv[1], pv[2], V, h, n, idx, wt):
                    continue
                c = bk * aw[s]
                for col in range(ncol):
                    f = c * G[j, col] * H[k, col]
                    if f == 0.0:
                        continue
                    out[k, col] -= f
                    for e in range(N17):
                        out[idx[e], col] += f * wt[e]


@njit(cache=True, inline="always")
def _alpha(k, j, pv, V, h, n, smu, i1, w1, i2, w2, ix, al):
    """Collision vector alpha with alpha.f = sqrt(mu mu_*) (F' + F'_* - F - F_*), F = f/sqrt(mu).

    F at a landing point is the star interpolant of f divided by sqrt(mu)
    there (zero outside the grid).  Returns the number of entries.
    """
    m = 0
    if _star7(pv[0], pv[1], pv[2], V, h, n, i1, w1):
        s2 = C34 * math.exp(-0.25 * (pv[3] * pv[3] + pv[4] * pv[4] + pv[5] * pv[5]))
        for e in range(N7):
            ix[m] = i1[e]
            al[m] = s2 * w1[e]
            m += 1
    if _star7(pv[3], pv[4], pv[5], V, h, n, i2, w2):
        s1 = C34 * math.exp(-0.25 * (pv[0] * pv[0] + pv[1] * pv[1] + pv[2] * pv[2]))
        for e in range(N7):
            ix[m] = i2[e]
            al[m] = s1 * w2[e]
            m += 1
    ix[m] = k
    al[m] = -smu[j]
    ix[m + 1] = j
    al[m + 1] = -smu[k]
    return m + 2


@njit(cache=True)
def l_upper(nodes, V, h, n, smu, ct, st, cp, sp, aw, gamma, b0, U):
    """Accumulate L = (1/4) sum c alpha alpha^T into the upper triangle of U.

    Only one pair of each mirror orbit {(k, j), (-k, -j)} is visited; the
    caller adds the mirrored copy U[::-1, ::-1].  Self-mirror pairs get half
    weight so the sum counts them once.
    """
    nv = nodes.shape[0]
    h3 = h * h * h
    ix = np.empty(2 * N7 + 2, np.int64)
    al = np.empty(2 * N7 + 2)
    i1 = np.empty(N7, np.int64)
    w1 = np.empty(N7)
    i2 = np.empty(N7, np.int64)
    w2 = np.empty(N7)
    fr = np.empty(9)
    pv = np.empty(6)
    for k in range(nv // 2):
        vk = nodes[k]
        for j in range(k + 1, nv - k):
            vj = nodes[j]
            nw = _frame(vk[0] - vj[0], vk[1] - vj[1], vk[2] - vj[2], fr)
            # ordered pairs (k, j) and (j, k) give the same alpha: factor 2/4
            base = 0.5 * h3 * b0 * nw**gamma
            if j == nv - 1 - k:
                base *= 0.5
            for s in range(ct.shape[0]):
                _post(vk, vj, fr, nw, ct[s], st[s], cp[s], sp[s], pv)
                m = _alpha(k, j, pv, V, h, n, smu, i1, w1, i2, w2, ix, al)
                c = base * aw[s]
                for p in range(m):
                    cp_ = c * al[p]
                    r = ix[p]
                    for q in range(m):
                        cc = ix[q]
                        if r <= cc:
                            U[r, cc] += cp_ * al[q]
                        else:
                            U[cc, r] += cp_ * al[q]


@njit(cache=True)
def l_apply(nodes, V, h, n, smu, ct, st, cp, sp, aw, gamma, b0, f, out):
    """Matrix-free out += L f for f of shape (Nv, C)."""
    nv = nodes.shape[0]
    ncol = f.shape[1]
    h3 = h * h * h
    ix = np.empty(2 * N7 + 2, np.int64)
    al = np.empty(2 * N7 + 2)
    i1 = np.empty(N7, np.int64)
    w1 = np.empty(N7)
    i2 = np.empty(N7, np.int64)
    w2 = np.empty(N7)
    fr = np.empty(9)
    pv = np.empty(6)
    for k in range(nv):
        vk = nodes[k]
        for j in range(k + 1, nv):
            vj = nodes[j]
            nw = _frame(vk[0] - vj[0], vk[1] - vj[1], vk[2] - vj[2], fr)
            base = 0.5 * h3 * b0 * nw**gamma
            for s in range(ct.shape[0]):
                _post(vk, vj, fr, nw, ct[s], st[s], cp[s], sp[s], pv)
                m = _alpha(k, j, pv, V, h, n, smu, i1, w1, i2, w2, ix, al)
                c = base * aw[s]
                for col in range(ncol):
                    acc = 0.0
                    for p in range(m):
                        acc += al[p] * f[ix[p], col]
                    acc *= c
                    for p in range(m):
                        out[ix[p], col] += acc * al[p]


@njit(cache=True)
def triple_form(nodes, V, h, n, mu, smu, ct, st, cp, sp, aw, gamma, b0, literal, theta_min, f, M, want_matrix):
    """Quadrature of the two triple-norm integrals.

    First: B mu_* (f' - f)^2 with f' the trilinear interpolant of f at v'
    (zero outside the grid).  Second: B f_*^2 (sqrt(mu)' - sqrt(mu))^2 with
    sqrt(mu)' in closed form.  ``literal`` switches to mu_*^2 and
    (mu' - mu)^2.  Angular nodes with theta < theta_min are skipped.  With
    ``want_matrix`` the quadratic form is accumulated into M instead.
    """
    nv = nodes.shape[0]
    h3 = h * h * h
    ci = np.empty(8, np.int64)
    cw = np.empty(8)
    fr = np.empty(9)
    pv = np.empty(6)
    first = 0.0
    second = 0.0
    ctmax = math.cos(theta_min)
    for k in range(nv):
        vk = nodes[k]
        for j in range(nv):
            if j == k:
                continue
            vj = nodes[j]
            nw = _frame(vk[0] - vj[0], vk[1] - vj[1], vk[2] - vj[2], fr)
            bb = h3 * h3 * b0 * nw**gamma
            wj = mu[j] * mu[j] if literal else mu[j]
            for s in range(ct.shape[0]):
                if ct[s] > ctmax:
                    continue
                _post(vk, vj, fr, nw, ct[s], st[s], cp[s], sp[s], pv)
                c = bb * aw[s]
                m = 0
                s0 = (pv[0] + V) / h - 0.5
                s1 = (pv[1] + V) / h - 0.5
                s2 = (pv[2] + V) / h - 0.5
                if 0.0 <= s0 <= n - 1 and 0.0 <= s1 <= n - 1 and 0.0 <= s2 <= n - 1:
                    f0 = min(int(s0), n - 2)
                    f1 = min(int(s1), n - 2)
                    f2 = min(int(s2), n - 2)
                    t0, t1, t2 = s0 - f0, s1 - f1, s2 - f2
                    for a in range(2):
                        wa = t0 if a else 1.0 - t0
                        for b in range(2):
                            wb = t1 if b else 1.0 - t1
                            for cc in range(2):
                                wc = t2 if cc else 1.0 - t2
                                ci[m] = ((f0 + a) * n + (f1 + b)) * n + (f2 + cc)
                                cw[m] = wa * wb * wc
                                m += 1
                vp2 = pv[0] * pv[0] + pv[1] * pv[1] + pv[2] * pv[2]
                if literal:
                    dmu = math.exp(-0.5 * vp2) * (2.0 * math.pi) ** -1.5 - mu[k]
                else:
                    dmu = C34 * math.exp(-0.25 * vp2) - smu[k]
                if want_matrix:
                    cf = c * wj
                    for p in range(m):
                        for q in range(m):
                            M[ci[p], ci[q]] += cf * cw[p] * cw[q]
                        M[ci[p], k] -= cf * cw[p]
                        M[k, ci[p]] -= cf * cw[p]
                    M[k, k] += cf
                    M[j, j] += c * dmu * dmu
                else:
                    fi = 0.0
                    for p in range(m):
                        fi += cw[p] * f[ci[p]]
                    df = fi - f[k]
                    first += c * wj * df * df
                    second += c * f[j] * f[j] * dmu * dmu
    return first, second
