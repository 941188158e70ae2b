"""Pure numpy implementation of the path-simulation kernel.

Loops over time steps and vectorizes across the paths of a block. The
arithmetic mirrors ``_ckernels.pyx`` operation by operation so that both
backends round identically.
"""

from __future__ import annotations

import numpy as np

# counter slots returned by simulate_block
FLOOR_HITS = 0
CLIP_EVENTS = 1
DEGENERATE_EVENTS = 2
DOMAIN_EVENTS = 3
N_BORROW = 4
N_CONSTRAINED = 5
N_DEPOSIT = 6
N_COUNTERS = 7


def simulate_block(
    z,
    s0,
    v0,
    step_ct,
    phi_r,
    phi_R,
    dt,
    coef_a,
    coef_b,
    exact,
    log_scheme,
    r,
    R,
    k,
    theta,
    sig2,
    c,
    floor,
    code,
    scale,
    out_v,
):
    """Simulate ``z.shape[0]`` paths over ``z.shape[1]`` steps.

    Terminal wealth is written to ``out_v``; event counters are returned.
    ``coef_a``/``coef_b`` are (decay, noise scale) for the exact price
    transition and (dt, sigma sqrt(dt)) for Euler. ``phi_r``/``phi_R`` hold
    ``m + 1`` entries, the last one at the horizon.

    Policy codes: 0 three-regime optimal (times ``scale``), 1 scaled
    deposit-rate candidate capped at free wealth, 2 all in the bank, 3 scaled
    deposit-rate candidate financed entirely at the deposit rate (a negative
    deposit is counted as a clip event but not corrected).

    With ``log_scheme`` the effective wealth of the active bank rate (loan
    rate when borrowing, deposit rate otherwise) is advanced in log form,
    which keeps it positive; otherwise wealth follows the linear update.
    """
    n, m = z.shape
    counters = np.zeros(N_COUNTERS, dtype=np.int64)
    s = np.full(n, s0)
    v = np.full(n, v0)
    for i in range(m):
        ct = step_ct[i]
        w = v - ct
        if code == 2:
            y = np.zeros(n)
            l = np.maximum(0.0, y - w)
            b = np.maximum(0.0, w - y)
            regime = np.where(l > 0, 0, np.where(b > 0, 2, 1))
        else:
            d_dep = v - phi_r[i]
            y_dep = (k * (theta - s) - r * s) * d_dep * s / sig2
            if code == 1 or code == 3:
                y = scale * y_dep
                bad = d_dep <= 0
                counters[DOMAIN_EVENTS] += int(np.count_nonzero(bad))
                y = np.where(bad, 0.0, y)
                clip = y > w
                counters[CLIP_EVENTS] += int(np.count_nonzero(clip))
                if code == 1:
                    y = np.where(clip, w, y)
                l = np.zeros(n)
                b = w - y
                regime = np.where(b > 0, 2, np.where(b < 0, 0, 1))
            else:
                d_loan = v - phi_R[i]
                y_loan = (k * (theta - s) - R * s) * d_loan * s / sig2
                degenerate = y_loan > y_dep
                counters[DEGENERATE_EVENTS] += int(np.count_nonzero(degenerate))
                bad = (d_loan <= 0) | (d_dep <= 0)
                counters[DOMAIN_EVENTS] += int(np.count_nonzero(bad))
                prefer_dep = degenerate & (w >= y_dep)
                borrow = ~prefer_dep & (w <= y_loan)
                deposit = prefer_dep | (~borrow & (w >= y_dep))
                y = np.where(borrow, y_loan, np.where(deposit, y_dep, w))
                regime = np.where(borrow, 0, np.where(deposit, 2, 1))
                y = np.where(bad, 0.0, y)
                if scale != 1.0:
                    y = scale * y
                l = np.maximum(0.0, y - w)
                b = np.maximum(0.0, w - y)
                relabel = bad | (scale != 1.0)
                regime = np.where(relabel, np.where(l > 0, 0, np.where(b > 0, 2, 1)), regime)
        counters[N_BORROW] += int(np.count_nonzero(regime == 0))
        counters[N_CONSTRAINED] += int(np.count_nonzero(regime == 1))
        counters[N_DEPOSIT] += int(np.count_nonzero(regime == 2))

        if exact:
            s_new = theta + (s - theta) * coef_a + coef_b * z[:, i]
        else:
            s_new = s + k * (theta - s) * coef_a + coef_b * z[:, i]
        low = s_new < floor
        counters[FLOOR_HITS] += int(np.count_nonzero(low))
        s_new = np.where(low, floor, s_new)
        v_lin = v + (r * b - R * l + c) * dt + y * (s_new - s) / s
        if log_scheme:
            loan = l > 0
            rate = np.where(loan, R, r)
            d = np.where(loan, v - phi_R[i], v - phi_r[i])
            phi_next = np.where(loan, phi_R[i + 1], phi_r[i + 1])
            ok = d > 0
            counters[DOMAIN_EVENTS] += int(np.count_nonzero(~ok))
            d_safe = np.where(ok, d, 1.0)
            pi = y / d_safe
            g = rate * dt + pi * ((s_new - s) / s - rate * dt) - 0.5 * pi * pi * sig2 * dt / (s * s)
            v = np.where(ok, d_safe * np.exp(g) + phi_next, v_lin)
        else:
            v = v_lin
        s = s_new
    out_v[:] = v
    return counters
