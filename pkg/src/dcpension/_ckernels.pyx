# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled path-simulation kernel.

Same contract and the same floating-point operation order as
``_pykernels.simulate_block``; build without fast-math so results match.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

cdef enum:
    FLOOR_HITS = 0
    CLIP_EVENTS = 1
    DEGENERATE_EVENTS = 2
    DOMAIN_EVENTS = 3
    N_BORROW = 4
    N_CONSTRAINED = 5
    N_DEPOSIT = 6
    N_COUNTERS = 7


def simulate_block(
    const double[:, ::1] z,
    double s0,
    double v0,
    const double[::1] step_ct,
    const double[::1] phi_r,
    const double[::1] phi_R,
    double dt,
    double coef_a,
    double coef_b,
    bint exact,
    bint log_scheme,
    double r,
    double R,
    double k,
    double theta,
    double sig2,
    double c,
    double floor,
    int code,
    double scale,
    double[::1] out_v,
):
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t m = z.shape[1]
    cdef Py_ssize_t p, i
    cdef long long cnt[N_COUNTERS]
    cdef double s, v, s_new, w, y, l, b, d_dep, d_loan, y_dep, y_loan
    cdef double v_lin, rate, d, phi_next, pi, g
    cdef int regime
    cdef bint degenerate, bad, borrow, deposit, prefer_dep
    cdef bint rescale = scale != 1.0

    for i in range(N_COUNTERS):
        cnt[i] = 0

    with nogil:
        for p in range(n):
            s = s0
            v = v0
            for i in range(m):
                w = v - step_ct[i]
                if code == 2:
                    y = 0.0
                    l = y - w if y - w > 0.0 else 0.0
                    b = w - y if w - y > 0.0 else 0.0
                    regime = 0 if l > 0.0 else (2 if b > 0.0 else 1)
                else:
                    d_dep = v - phi_r[i]
                    y_dep = (k * (theta - s) - r * s) * d_dep * s / sig2
                    if code == 1 or code == 3:
                        y = scale * y_dep
                        if d_dep <= 0.0:
                            cnt[DOMAIN_EVENTS] += 1
                            y = 0.0
                        if y > w:
                            cnt[CLIP_EVENTS] += 1
                            if code == 1:
                                y = w
                        l = 0.0
                        b = w - y
                        regime = 2 if b > 0.0 else (0 if b < 0.0 else 1)
                    else:
                        d_loan = v - phi_R[i]
                        y_loan = (k * (theta - s) - R * s) * d_loan * s / sig2
                        degenerate = y_loan > y_dep
                        if degenerate:
                            cnt[DEGENERATE_EVENTS] += 1
                        bad = d_loan <= 0.0 or d_dep <= 0.0
                        if bad:
                            cnt[DOMAIN_EVENTS] += 1
                        prefer_dep = degenerate and w >= y_dep
                        borrow = (not prefer_dep) and w <= y_loan
                        deposit = prefer_dep or ((not borrow) and w >= y_dep)
                        if borrow:
                            y = y_loan
                            regime = 0
                        elif deposit:
                            y = y_dep
                            regime = 2
                        else:
                            y = w
                            regime = 1
                        if bad:
                            y = 0.0
                        if rescale:
                            y = scale * y
                        l = y - w if y - w > 0.0 else 0.0
                        b = w - y if w - y > 0.0 else 0.0
                        if bad or rescale:
                            regime = 0 if l > 0.0 else (2 if b > 0.0 else 1)
                cnt[N_BORROW + regime] += 1

                if exact:
                    s_new = theta + (s - theta) * coef_a + coef_b * z[p, i]
                else:
                    s_new = s + k * (theta - s) * coef_a + coef_b * z[p, i]
                if s_new < floor:
                    cnt[FLOOR_HITS] += 1
                    s_new = floor
                v_lin = v + (r * b - R * l + c) * dt + y * (s_new - s) / s
                if log_scheme:
                    if l > 0.0:
                        rate = R
                        d = v - phi_R[i]
                        phi_next = phi_R[i + 1]
                    else:
                        rate = r
                        d = v - phi_r[i]
                        phi_next = phi_r[i + 1]
                    if d > 0.0:
                        pi = y / d
                        g = rate * dt + pi * ((s_new - s) / s - rate * dt) - 0.5 * pi * pi * sig2 * dt / (s * s)
                        v = d * exp(g) + phi_next
                    else:
                        cnt[DOMAIN_EVENTS] += 1
                        v = v_lin
                else:
                    v = v_lin
                s = s_new
            out_v[p] = v

    counters = np.zeros(N_COUNTERS, dtype=np.int64)
    for i in range(N_COUNTERS):
        counters[i] = cnt[i]
    return counters
