"""Pure-Python twins of the compiled kernels.

The compiled extension mirrors these loops statement for statement; both
backends must keep the same operation order so results agree to rounding.
All arrays are modified in place.
"""

from __future__ import annotations

DAMPING = 0.5
_BISECT_STEPS = 90

BACKEND = "python"

SCHEME_PROPOSED = 0
SCHEME_MO = 1
SCHEME_LA = 2
SCHEME_LAWD = 3


def fluid_solve(
    cap,
    dprop,
    tmat,
    ul_ptr,
    ul_idx,
    lu_ptr,
    lu_idx,
    w,
    x,
    dq,
    dtrans,
    dtot,
    include_dtrans,
    tol,
    max_iter,
):
    """Damped fixed point for rates and per-link queueing delays.

    Returns ``(status, iterations, res_window, res_capacity, res_slackness)``
    with status 0 on convergence and 1 when the iteration budget ran out.
    """
    n_users = w.shape[0]
    n_links = cap.shape[0]
    res_win = res_cap = res_cs = 0.0

    for it in range(1, max_iter + 1):
        # transmission delays from current rates
        for r in range(n_users):
            acc = 0.0
            for s in range(n_users):
                acc += tmat[r, s] * x[s]
            dtrans[r] = acc
        # per-user total delay and window-consistency residual
        res_win = 0.0
        for r in range(n_users):
            d = dprop[r]
            if include_dtrans:
                d += dtrans[r]
            for k in range(ul_ptr[r], ul_ptr[r + 1]):
                d += dq[ul_idx[k]]
            dtot[r] = d
            rw = abs(x[r] * d - w[r]) / w[r]
            if rw > res_win:
                res_win = rw
        # link residuals
        res_cap = 0.0
        res_cs = 0.0
        for e in range(n_links):
            y = 0.0
            for k in range(lu_ptr[e], lu_ptr[e + 1]):
                y += x[lu_idx[k]]
            over = (y - cap[e]) / cap[e]
            if over > res_cap:
                res_cap = over
            if dq[e] > tol:
                slack = abs(y - cap[e]) / cap[e]
                if slack > res_cs:
                    res_cs = slack
        if res_win < tol and res_cap < tol and res_cs < tol:
            return 0, it, res_win, res_cap, res_cs

        # damped rate relaxation toward window consistency
        for r in range(n_users):
            x[r] += DAMPING * (w[r] / dtot[r] - x[r])
        # per-link dual updates, Gauss-Seidel with immediate rate refresh
        for e in range(n_links):
            if lu_ptr[e] == lu_ptr[e + 1]:
                continue
            y = 0.0
            for k in range(lu_ptr[e], lu_ptr[e + 1]):
                y += x[lu_idx[k]]
            if y > cap[e] * (1.0 + tol) or dq[e] > 0.0:
                # solve sum_r w_r / (base_r + delta) = cap_e for delta >= 0
                total0 = 0.0
                for k in range(lu_ptr[e], lu_ptr[e + 1]):
                    r = lu_idx[k]
                    total0 += w[r] / (dtot[r] - dq[e])
                if total0 <= cap[e]:
                    delta = 0.0
                else:
                    hi = 1.0
                    for _ in range(200):
                        total = 0.0
                        for k in range(lu_ptr[e], lu_ptr[e + 1]):
                            r = lu_idx[k]
                            total += w[r] / (dtot[r] - dq[e] + hi)
                        if total < cap[e]:
                            break
                        hi *= 2.0
                    lo = 0.0
                    for _ in range(_BISECT_STEPS):
                        mid = 0.5 * (lo + hi)
                        total = 0.0
                        for k in range(lu_ptr[e], lu_ptr[e + 1]):
                            r = lu_idx[k]
                            total += w[r] / (dtot[r] - dq[e] + mid)
                        if total > cap[e]:
                            lo = mid
                        else:
                            hi = mid
                    delta = 0.5 * (lo + hi)
                new_dq = dq[e] + DAMPING * (delta - dq[e])
                shift = new_dq - dq[e]
                for k in range(lu_ptr[e], lu_ptr[e + 1]):
                    r = lu_idx[k]
                    dtot[r] += shift
                    x[r] = w[r] / dtot[r]
                dq[e] = new_dq
    return 1, max_iter, res_win, res_cap, res_cs


def controller_run(
    cap,
    dprop,
    tmat,
    ul_ptr,
    ul_idx,
    lu_ptr,
    lu_idx,
    scheme,
    gain,
    h,
    a,
    b,
    ptarget,
    w,
    x,
    dq,
    dtrans,
    dtot,
    s_buf,
    include_dtrans,
    fluid_tol,
    fluid_max_iter,
    tol,
    dwell_n,
    max_iter,
    w_min,
    sample_every,
    traj_it,
    traj_w,
    traj_x,
    traj_s,
    traj_v,
):
    """Euler iteration of one window-update law over the fluid model.

    Fills the trajectory buffers with samples taken before each update plus
    a final sample. Returns
    ``(status, n_iter, converged, n_samples, floor_hits)`` where status 1
    flags a fluid-solver failure at iteration ``n_iter``.
    """
    n_users = w.shape[0]
    dwell = 0
    floor_hits = 0
    n_samples = 0
    converged = False
    it = 0

    while it < max_iter:
        st, _, _, _, _ = fluid_solve(
            cap, dprop, tmat, ul_ptr, ul_idx, lu_ptr, lu_idx,
            w, x, dq, dtrans, dtot, include_dtrans, fluid_tol, fluid_max_iter,
        )
        if st != 0:
            return 1, it, False, n_samples, floor_hits

        sample = it % sample_every == 0
        v_val = 0.0
        max_step = 0.0
        for r in range(n_users):
            uprime = a[r] / (x[r] + b[r])
            if scheme == SCHEME_PROPOSED:
                s = w[r] - x[r] * dtrans[r] - x[r] * uprime
                fd = dtrans[r] / dtot[r]
            elif scheme == SCHEME_MO:
                s = w[r] - x[r] * dprop[r] - ptarget[r]
                fd = dprop[r] / dtot[r]
            elif scheme == SCHEME_LA:
                udd = -a[r] / ((x[r] + b[r]) * (x[r] + b[r]))
                s = w[r] - x[r] * dprop[r] - x[r] * uprime
                fd = (dprop[r] + uprime + x[r] * udd) / dtot[r]
            else:
                s = w[r] - x[r] * dprop[r] - x[r] * uprime
                fd = dprop[r] / dtot[r]
            fw = s / w[r]
            v_val += 0.5 * fw * fw
            s_buf[r] = s
            if sample:
                traj_w[n_samples, r] = w[r]
                traj_x[n_samples, r] = x[r]
                traj_s[n_samples, r] = s
            w_new = w[r] - gain * h * fd * fw
            if w_new < w_min:
                w_new = w_min
                floor_hits += 1
            step = abs(w_new - w[r])
            if step > max_step:
                max_step = step
            w[r] = w_new
        if sample:
            traj_it[n_samples] = it
            traj_v[n_samples] = v_val
            n_samples += 1

        it += 1
        if max_step < tol:
            dwell += 1
            if dwell >= dwell_n:
                converged = True
                break
        else:
            dwell = 0

    # final fluid state and closing sample
    st, _, _, _, _ = fluid_solve(
        cap, dprop, tmat, ul_ptr, ul_idx, lu_ptr, lu_idx,
        w, x, dq, dtrans, dtot, include_dtrans, fluid_tol, fluid_max_iter,
    )
    if st != 0:
        return 1, it, converged, n_samples, floor_hits
    v_val = 0.0
    for r in range(n_users):
        uprime = a[r] / (x[r] + b[r])
        if scheme == SCHEME_PROPOSED:
            s = w[r] - x[r] * dtrans[r] - x[r] * uprime
        elif scheme == SCHEME_MO:
            s = w[r] - x[r] * dprop[r] - ptarget[r]
        else:
            s = w[r] - x[r] * dprop[r] - x[r] * uprime
        fw = s / w[r]
        v_val += 0.5 * fw * fw
        s_buf[r] = s
        traj_w[n_samples, r] = w[r]
        traj_x[n_samples, r] = x[r]
        traj_s[n_samples, r] = s
    traj_it[n_samples] = it
    traj_v[n_samples] = v_val
    n_samples += 1
    return 0, it, converged, n_samples, floor_hits
