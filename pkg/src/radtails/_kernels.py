"""Compiled right-hand sides and RK4 steps for the radial evolver.

Two parallel kernel families: ``*_f64`` works on float64 arrays, ``*_dd`` on
double-double pairs (hi, lo).  Stencils use integer weights with one shared
scale factor, so the only rounding inside a stencil comes from the field
values themselves.

Packed parameters (``geom`` int array):
    0 n_points   1 half_width   2 dim   3 L (centrifugal l(l+1))
    4 parity     5 boundary (0 causal-frozen, 1 sommerfeld)   6 n_terms
    7 has_source 8 ko_half_width (0: no dissipation)
"""
from __future__ import annotations

import numpy as np
import numba as nb

_SPLIT = 134217729.0

G_N, G_HW, G_DIM, G_L, G_PAR, G_BND, G_NT, G_SRC, G_KO = range(9)


# ---------------------------------------------------------------------------
# double-double primitives
# ---------------------------------------------------------------------------


@nb.njit(inline="always")
def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


@nb.njit(inline="always")
def _qts(a, b):
    s = a + b
    return s, b - (s - a)


@nb.njit(inline="always")
def _two_prod(a, b):
    p = a * b
    c = _SPLIT * a
    ah = c - (c - a)
    al = a - ah
    c = _SPLIT * b
    bh = c - (c - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


@nb.njit(inline="always")
def dd_add(ah, al, bh, bl):
    s, e = _two_sum(ah, bh)
    t, f = _two_sum(al, bl)
    e += t
    s, e = _qts(s, e)
    e += f
    return _qts(s, e)


@nb.njit(inline="always")
def dd_mul(ah, al, bh, bl):
    p, e = _two_prod(ah, bh)
    e += ah * bl + al * bh
    return _qts(p, e)


@nb.njit(inline="always")
def dd_mul_d(ah, al, b):
    p, e = _two_prod(ah, b)
    e += al * b
    return _qts(p, e)


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------


@nb.njit(inline="always")
def _ghost(i, n, parity):
    # index and sign of the value standing at grid index i (may be negative)
    if i < 0:
        return -i, parity
    return i, 1.0


@nb.njit(cache=True)
def rhs_f64(ph, qh, n_act, geom, c2, c1, ko, scale, invr, invr2, pot, wts, pows, src,
            out_p, out_q):
    hw = geom[G_HW]
    dim = geom[G_DIM]
    L = geom[G_L]
    parity = float(geom[G_PAR])
    nterms = geom[G_NT]
    kohw = geom[G_KO]
    s2 = scale[0]
    s1 = scale[2]
    ko_s = scale[4]
    h = scale[6]
    edge = n_act - hw
    for i in range(n_act):
        if i >= edge:
            if geom[G_BND] == 1:
                # outgoing condition with backward 4th-order derivatives
                r = i * h
                dphi = (25.0 * ph[i] - 48.0 * ph[i - 1] + 36.0 * ph[i - 2]
                        - 16.0 * ph[i - 3] + 3.0 * ph[i - 4]) / (12.0 * h)
                dpi = (25.0 * qh[i] - 48.0 * qh[i - 1] + 36.0 * qh[i - 2]
                       - 16.0 * qh[i - 3] + 3.0 * qh[i - 4]) / (12.0 * h)
                k = 0.5 * (dim - 1) / r
                out_p[i] = -dphi - k * ph[i]
                out_q[i] = -dpi - k * qh[i]
            else:
                out_p[i] = 0.0
                out_q[i] = 0.0
            continue
        d2 = c2[0] * ph[i]
        d1 = 0.0
        for j in range(1, hw + 1):
            im, sm = _ghost(i - j, n_act, parity)
            a = ph[i + j]
            b = sm * ph[im]
            d2 += c2[j] * (a + b)
            d1 += c1[j] * (a - b)
        d2 *= s2
        d1 *= s1
        if i == 0:
            if L == 0 and parity > 0:
                lap = dim * d2
            else:
                out_p[i] = 0.0
                out_q[i] = 0.0
                continue
        else:
            lap = d2 + (dim - 1) * invr[i] * d1 - L * invr2[i] * ph[i]
        acc = lap - pot[i] * ph[i]
        for t in range(nterms):
            pw = ph[i]
            for _ in range(pows[t] - 1):
                pw *= ph[i]
            acc -= wts[t, i] * pw
        if geom[G_SRC]:
            acc += src[i]
        rp = qh[i]
        if kohw > 0:
            dp = ko[0] * ph[i]
            dq = ko[0] * qh[i]
            for j in range(1, kohw + 1):
                im, sm = _ghost(i - j, n_act, parity)
                if i + j < n_act:
                    dp += ko[j] * (ph[i + j] + sm * ph[im])
                    dq += ko[j] * (qh[i + j] + sm * qh[im])
            rp += ko_s * dp
            acc += ko_s * dq
        out_p[i] = rp
        out_q[i] = acc


@nb.njit(cache=True)
def rhs_dd(ph, pl, qh, ql, n_act, geom, c2, c1, ko, scale, invr, invr2, pot, wts, pows, src,
           oph, opl, oqh, oql):
    hw = geom[G_HW]
    dim = geom[G_DIM]
    L = geom[G_L]
    parity = float(geom[G_PAR])
    nterms = geom[G_NT]
    kohw = geom[G_KO]
    s2h, s2l, s1h, s1l, ksh, ksl, h = scale[0], scale[1], scale[2], scale[3], scale[4], scale[5], scale[6]
    edge = n_act - hw
    for i in range(n_act):
        if i >= edge:
            if geom[G_BND] == 1:
                r = i * h
                k = 0.5 * (dim - 1) / r
                dphi = (25.0 * ph[i] - 48.0 * ph[i - 1] + 36.0 * ph[i - 2]
                        - 16.0 * ph[i - 3] + 3.0 * ph[i - 4]) / (12.0 * h)
                dpi = (25.0 * qh[i] - 48.0 * qh[i - 1] + 36.0 * qh[i - 2]
                       - 16.0 * qh[i - 3] + 3.0 * qh[i - 4]) / (12.0 * h)
                oph[i] = -dphi - k * ph[i]
                opl[i] = 0.0
                oqh[i] = -dpi - k * qh[i]
                oql[i] = 0.0
            else:
                oph[i] = 0.0
                opl[i] = 0.0
                oqh[i] = 0.0
                oql[i] = 0.0
            continue
        d2h, d2l = dd_mul_d(ph[i], pl[i], c2[0])
        d1h = 0.0
        d1l = 0.0
        for j in range(1, hw + 1):
            im, sm = _ghost(i - j, n_act, parity)
            ah = ph[i + j]
            al = pl[i + j]
            bh = sm * ph[im]
            bl = sm * pl[im]
            sh, sl = dd_add(ah, al, bh, bl)
            sh, sl = dd_mul_d(sh, sl, c2[j])
            d2h, d2l = dd_add(d2h, d2l, sh, sl)
            sh, sl = dd_add(ah, al, -bh, -bl)
            sh, sl = dd_mul_d(sh, sl, c1[j])
            d1h, d1l = dd_add(d1h, d1l, sh, sl)
        d2h, d2l = dd_mul(d2h, d2l, s2h, s2l)
        d1h, d1l = dd_mul(d1h, d1l, s1h, s1l)
        if i == 0:
            if L == 0 and parity > 0:
                lh, ll = dd_mul_d(d2h, d2l, float(dim))
            else:
                oph[i] = 0.0
                opl[i] = 0.0
                oqh[i] = 0.0
                oql[i] = 0.0
                continue
        else:
            th, tl = dd_mul(d1h, d1l, invr[0, i], invr[1, i])
            th, tl = dd_mul_d(th, tl, float(dim - 1))
            lh, ll = dd_add(d2h, d2l, th, tl)
            if L != 0:
                th, tl = dd_mul(ph[i], pl[i], invr2[0, i], invr2[1, i])
                th, tl = dd_mul_d(th, tl, float(L))
                lh, ll = dd_add(lh, ll, -th, -tl)
        th, tl = dd_mul(pot[0, i], pot[1, i], ph[i], pl[i])
        ah, al = dd_add(lh, ll, -th, -tl)
        for t in range(nterms):
            pwh = ph[i]
            pwl = pl[i]
            for _ in range(pows[t] - 1):
                pwh, pwl = dd_mul(pwh, pwl, ph[i], pl[i])
            th, tl = dd_mul(wts[t, 0, i], wts[t, 1, i], pwh, pwl)
            ah, al = dd_add(ah, al, -th, -tl)
        if geom[G_SRC]:
            ah, al = dd_add(ah, al, src[0, i], src[1, i])
        rph = qh[i]
        rpl = ql[i]
        if kohw > 0:
            dph, dpl = dd_mul_d(ph[i], pl[i], ko[0])
            dqh, dql = dd_mul_d(qh[i], ql[i], ko[0])
            for j in range(1, kohw + 1):
                im, sm = _ghost(i - j, n_act, parity)
                if i + j < n_act:
                    sh, sl = dd_add(ph[i + j], pl[i + j], sm * ph[im], sm * pl[im])
                    sh, sl = dd_mul_d(sh, sl, ko[j])
                    dph, dpl = dd_add(dph, dpl, sh, sl)
                    sh, sl = dd_add(qh[i + j], ql[i + j], sm * qh[im], sm * ql[im])
                    sh, sl = dd_mul_d(sh, sl, ko[j])
                    dqh, dql = dd_add(dqh, dql, sh, sl)
            dph, dpl = dd_mul(dph, dpl, ksh, ksl)
            dqh, dql = dd_mul(dqh, dql, ksh, ksl)
            rph, rpl = dd_add(rph, rpl, dph, dpl)
            ah, al = dd_add(ah, al, dqh, dql)
        oph[i] = rph
        opl[i] = rpl
        oqh[i] = ah
        oql[i] = al


# ---------------------------------------------------------------------------
# classical RK4 steps
# ---------------------------------------------------------------------------


@nb.njit(cache=True)
def rk4_f64(p, q, n_act, dt, geom, c2, c1, ko, scale, invr, invr2, pot, wts, pows,
            src0, src_mid, src1, work):
    k1p, k1q, k2p, k2q, k3p, k3q, k4p, k4q, yp, yq = (
        work[0], work[1], work[2], work[3], work[4], work[5], work[6], work[7], work[8], work[9])
    rhs_f64(p, q, n_act, geom, c2, c1, ko, scale, invr, invr2, pot, wts, pows, src0, k1p, k1q)
    half = 0.5 * dt
    for i in range(n_act):
        yp[i] = p[i] + half * k1p[i]
        yq[i] = q[i] + half * k1q[i]
    rhs_f64(yp, yq, n_act, geom, c2, c1, ko, scale, invr, invr2, pot, wts, pows, src_mid, k2p, k2q)
    for i in range(n_act):
        yp[i] = p[i] + half * k2p[i]
        yq[i] = q[i] + half * k2q[i]
    rhs_f64(yp, yq, n_act, geom, c2, c1, ko, scale, invr, invr2, pot, wts, pows, src_mid, k3p, k3q)
    for i in range(n_act):
        yp[i] = p[i] + dt * k3p[i]
        yq[i] = q[i] + dt * k3q[i]
    rhs_f64(yp, yq, n_act, geom, c2, c1, ko, scale, invr, invr2, pot, wts, pows, src1, k4p, k4q)
    sixth = dt / 6.0
    ok = True
    for i in range(n_act):
        p[i] += sixth * (k1p[i] + 2.0 * k2p[i] + 2.0 * k3p[i] + k4p[i])
        q[i] += sixth * (k1q[i] + 2.0 * k2q[i] + 2.0 * k3q[i] + k4q[i])
        if not (np.isfinite(p[i]) and np.isfinite(q[i])):
            ok = False
    return ok


@nb.njit(inline="always")
def _axpy_dd(xh, xl, ah, al, kh, kl, outh, outl, n):
    # out = x + a * k
    for i in range(n):
        th, tl = dd_mul(ah, al, kh[i], kl[i])
        outh[i], outl[i] = dd_add(xh[i], xl[i], th, tl)


@nb.njit(cache=True)
def rk4_dd(ph, pl, qh, ql, n_act, dtc, geom, c2, c1, ko, scale, invr, invr2, pot, wts, pows,
           src0, src_mid, src1, work):
    """One RK4 step; ``dtc`` = [dt/2 hi, lo, dt hi, lo, dt/6 hi, lo]."""
    k1ph, k1pl, k1qh, k1ql = work[0], work[1], work[2], work[3]
    k2ph, k2pl, k2qh, k2ql = work[4], work[5], work[6], work[7]
    k3ph, k3pl, k3qh, k3ql = work[8], work[9], work[10], work[11]
    k4ph, k4pl, k4qh, k4ql = work[12], work[13], work[14], work[15]
    yph, ypl, yqh, yql = work[16], work[17], work[18], work[19]
    hh, hl, fh, fl, sh, sl = dtc[0], dtc[1], dtc[2], dtc[3], dtc[4], dtc[5]
    n = n_act
    rhs_dd(ph, pl, qh, ql, n, geom, c2, c1, ko, scale, invr, invr2, pot, wts, pows, src0,
           k1ph, k1pl, k1qh, k1ql)
    _axpy_dd(ph, pl, hh, hl, k1ph, k1pl, yph, ypl, n)
    _axpy_dd(qh, ql, hh, hl, k1qh, k1ql, yqh, yql, n)
    rhs_dd(yph, ypl, yqh, yql, n, geom, c2, c1, ko, scale, invr, invr2, pot, wts, pows, src_mid,
           k2ph, k2pl, k2qh, k2ql)
    _axpy_dd(ph, pl, hh, hl, k2ph, k2pl, yph, ypl, n)
    _axpy_dd(qh, ql, hh, hl, k2qh, k2ql, yqh, yql, n)
    rhs_dd(yph, ypl, yqh, yql, n, geom, c2, c1, ko, scale, invr, invr2, pot, wts, pows, src_mid,
           k3ph, k3pl, k3qh, k3ql)
    _axpy_dd(ph, pl, fh, fl, k3ph, k3pl, yph, ypl, n)
    _axpy_dd(qh, ql, fh, fl, k3qh, k3ql, yqh, yql, n)
    rhs_dd(yph, ypl, yqh, yql, n, geom, c2, c1, ko, scale, invr, invr2, pot, wts, pows, src1,
           k4ph, k4pl, k4qh, k4ql)
    ok = True
    for i in range(n):
        # k1 + 2 k2 + 2 k3 + k4
        th, tl = dd_add(k2ph[i], k2pl[i], k3ph[i], k3pl[i])
        th, tl = dd_add(th, tl, th, tl)
        th, tl = dd_add(th, tl, k1ph[i], k1pl[i])
        th, tl = dd_add(th, tl, k4ph[i], k4pl[i])
        th, tl = dd_mul(th, tl, sh, sl)
        ph[i], pl[i] = dd_add(ph[i], pl[i], th, tl)
        th, tl = dd_add(k2qh[i], k2ql[i], k3qh[i], k3ql[i])
        th, tl = dd_add(th, tl, th, tl)
        th, tl = dd_add(th, tl, k1qh[i], k1ql[i])
        th, tl = dd_add(th, tl, k4qh[i], k4ql[i])
        th, tl = dd_mul(th, tl, sh, sl)
        qh[i], ql[i] = dd_add(qh[i], ql[i], th, tl)
        if not (np.isfinite(ph[i]) and np.isfinite(qh[i])):
            ok = False
    return ok
