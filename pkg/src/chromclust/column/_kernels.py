"""Compiled right-hand sides of the unit operations.

Units are packed into flat integer/float parameter vectors so a whole unit
chain can be evaluated in one compiled call.  Layouts are defined by the
``pack`` methods in :mod:`chromclust.column.units`.
"""

import numpy as np
from numba import njit

CSTR, DPFR, GRM = 0, 1, 2


@njit(cache=True)
def _pos_pow(base, exponent):
    if base <= 0.0:
        return 0.0
    return np.exp(exponent * np.log(base))


@njit(cache=True)
def adv_disp(y, off, n, nc, stride, c_in, u, disp, dz, vanleer, dy):
    """Finite-volume convection/dispersion for ``n`` cells.

    Cell ``j`` component ``i`` lives at ``y[off + j*stride + i]``.
    Results are written (not accumulated) into ``dy`` with the same layout.
    """
    inv = 1.0 / dz
    for i in range(nc):
        flux_in = u * c_in[i]
        for j in range(n):
            cj = y[off + j * stride + i]
            if j == n - 1:
                flux_out = u * cj
            else:
                cn = y[off + (j + 1) * stride + i]
                face = cj
                if vanleer and j > 0:
                    dm = cj - y[off + (j - 1) * stride + i]
                    dp = cn - cj
                    face = cj + 0.5 * (dm * abs(dp) + abs(dm) * dp) / (abs(dm) + abs(dp) + 1e-300)
                flux_out = u * face - disp * (cn - cj) * inv
            dy[off + j * stride + i] = (flux_in - flux_out) * inv
            flux_in = flux_out


@njit(cache=True)
def cstr_rhs(y, off, ip, fp, c_in, dy, c_out):
    nc = ip[0]
    rate = fp[0]
    for i in range(nc):
        dy[off + i] = rate * (c_in[i] - y[off + i])
        c_out[i] = y[off + i]


@njit(cache=True)
def dpfr_rhs(y, off, ip, fp, c_in, dy, c_out):
    n, nc, vanleer = ip[0], ip[1], ip[2] != 0
    adv_disp(y, off, n, nc, nc, c_in, fp[0], fp[1], fp[2], vanleer, dy)
    last = off + (n - 1) * nc
    for i in range(nc):
        c_out[i] = y[last + i]


@njit(cache=True)
def grm_rhs(y, off, ip, fp, c_in, dy, c_out):
    nz, nr, nc, nb, vanleer, surf = ip[0], ip[1], ip[2], ip[3], ip[4] != 0, ip[5] != 0
    u, disp, dz = fp[0], fp[1], fp[2]
    phase_bulk, phase_pore, rp, eps_p = fp[3], fp[4], fp[5], fp[6]
    lam, rate_scale, dr = fp[7], fp[8], fp[9]
    p = 10
    cond = fp[p:p + nc]
    p += nc
    dpore = fp[p:p + nc]
    p += nc
    dsurf = fp[p:p + nc]
    p += nc
    vol = fp[p:p + nr]
    p += nr
    area = fp[p:p + nr - 1]
    p += nr - 1
    ka = fp[p:p + nb]
    p += nb
    kd = fp[p:p + nb]
    p += nb
    nu = fp[p:p + nb]
    p += nb
    sig = fp[p:p + nb]

    block = nc + nr * nc + nr * nb
    adv_disp(y, off, nz, nc, block, c_in, u, disp, dz, vanleer, dy)
    inv_dr = 1.0 / dr
    rp2 = rp * rp
    dq = np.empty(nb)
    for z in range(nz):
        b = off + z * block
        cpo = b + nc
        qo = b + nc + nr * nc
        # film flux into the outer shell
        for i in range(nc):
            flux = cond[i] * (y[b + i] - y[cpo + (nr - 1) * nc + i])
            dy[b + i] -= phase_bulk * flux
            dy[cpo + (nr - 1) * nc + i] = rp2 * flux / eps_p
        for r in range(nr - 1):
            dy[cpo + r * nc:cpo + (r + 1) * nc] = 0.0
        for r in range(nr - 1):
            a = area[r] * inv_dr
            for i in range(nc):
                f = dpore[i] * a * (y[cpo + (r + 1) * nc + i] - y[cpo + r * nc + i])
                dy[cpo + r * nc + i] += f
                dy[cpo + (r + 1) * nc + i] -= f
            if surf:
                for j in range(nb):
                    fq = dsurf[j + 1] * a * (y[qo + (r + 1) * nb + j] - y[qo + r * nb + j])
                    dy[cpo + r * nc + j + 1] += fq
                    dy[cpo + (r + 1) * nc + j + 1] -= fq
        for r in range(nr):
            s = cpo + r * nc
            for i in range(nc):
                dy[s + i] /= vol[r]
            if nb > 0:
                qbar = lam
                for j in range(nb):
                    qbar -= (nu[j] + sig[j]) * y[qo + r * nb + j]
                salt = y[s]
                salt_sink = 0.0
                for j in range(nb):
                    rate = rate_scale * (ka[j] * y[s + 1 + j] * _pos_pow(qbar, nu[j])
                                         - kd[j] * y[qo + r * nb + j] * _pos_pow(salt, nu[j]))
                    dq[j] = rate
                    dy[qo + r * nb + j] = rate
                    dy[s + 1 + j] -= phase_pore * rate
                    salt_sink += nu[j] * rate
                dy[s] += phase_pore * salt_sink
    last = off + (nz - 1) * block
    for i in range(nc):
        c_out[i] = y[last + i]


@njit(cache=True)
def system_rhs(t, y, seg_start, seg_value, seg_slope, kinds, offsets, iptr, fptr, ints, floats):
    """Evaluate a chain of units for inlet ``value + slope*(t - start)``."""
    nc = seg_value.shape[0]
    c_in = np.empty(nc)
    c_out = np.empty(nc)
    for i in range(nc):
        c_in[i] = seg_value[i] + seg_slope[i] * (t - seg_start)
    dy = np.empty_like(y)
    for k in range(kinds.shape[0]):
        ip = ints[iptr[k]:iptr[k + 1]]
        fp = floats[fptr[k]:fptr[k + 1]]
        kind = kinds[k]
        if kind == CSTR:
            cstr_rhs(y, offsets[k], ip, fp, c_in, dy, c_out)
        elif kind == DPFR:
            dpfr_rhs(y, offsets[k], ip, fp, c_in, dy, c_out)
        else:
            grm_rhs(y, offsets[k], ip, fp, c_in, dy, c_out)
        for i in range(nc):
            c_in[i] = c_out[i]
    return dy
