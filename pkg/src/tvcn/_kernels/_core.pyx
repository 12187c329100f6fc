# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; statement-for-statement twin of ``reference.py``."""

BACKEND = "compiled"

SCHEME_PROPOSED = 0
SCHEME_MO = 1
SCHEME_LA = 2
SCHEME_LAWD = 3

cdef double DAMPING = 0.5
cdef int _BISECT_STEPS = 90


cdef int _fluid_solve(
    double[::1] cap,
    double[::1] dprop,
    double[:, ::1] tmat,
    int[::1] ul_ptr,
    int[::1] ul_idx,
    int[::1] lu_ptr,
    int[::1] lu_idx,
    double[::1] w,
    double[::1] x,
    double[::1] dq,
    double[::1] dtrans,
    double[::1] dtot,
    bint include_dtrans,
    double tol,
    int max_iter,
    int* out_iter,
    double* out_res,
) nogil:
    cdef int n_users = w.shape[0]
    cdef int n_links = cap.shape[0]
    cdef int it, r, s, e, k, j
    cdef double acc, d, rw, y, over, slack, total0, total, hi, lo, mid
    cdef double delta, new_dq, shift
    cdef double res_win = 0.0, res_cap = 0.0, res_cs = 0.0

    for it in range(1, max_iter + 1):
        for r in range(n_users):
            acc = 0.0
            for s in range(n_users):
                acc += tmat[r, s] * x[s]
            dtrans[r] = acc
        res_win = 0.0
        for r in range(n_users):
            d = dprop[r]
            if include_dtrans:
                d += dtrans[r]
            for k in range(ul_ptr[r], ul_ptr[r + 1]):
                d += dq[ul_idx[k]]
            dtot[r] = d
            rw = x[r] * d - w[r]
            if rw < 0:
                rw = -rw
            rw /= w[r]
            if rw > res_win:
                res_win = rw
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
                slack = y - cap[e]
                if slack < 0:
                    slack = -slack
                slack /= cap[e]
                if slack > res_cs:
                    res_cs = slack
        if res_win < tol and res_cap < tol and res_cs < tol:
            out_iter[0] = it
            out_res[0] = res_win
            out_res[1] = res_cap
            out_res[2] = res_cs
            return 0

        for r in range(n_users):
            x[r] += DAMPING * (w[r] / dtot[r] - x[r])
        for e in range(n_links):
            if lu_ptr[e] == lu_ptr[e + 1]:
                continue
            y = 0.0
            for k in range(lu_ptr[e], lu_ptr[e + 1]):
                y += x[lu_idx[k]]
            if y > cap[e] * (1.0 + tol) or dq[e] > 0.0:
                total0 = 0.0
                for k in range(lu_ptr[e], lu_ptr[e + 1]):
                    r = lu_idx[k]
                    total0 += w[r] / (dtot[r] - dq[e])
                if total0 <= cap[e]:
                    delta = 0.0
                else:
                    hi = 1.0
                    for j in range(200):
                        total = 0.0
                        for k in range(lu_ptr[e], lu_ptr[e + 1]):
                            r = lu_idx[k]
                            total += w[r] / (dtot[r] - dq[e] + hi)
                        if total < cap[e]:
                            break
                        hi *= 2.0
                    lo = 0.0
                    for j in range(_BISECT_STEPS):
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
    out_iter[0] = max_iter
    out_res[0] = res_win
    out_res[1] = res_cap
    out_res[2] = res_cs
    return 1


def fluid_solve(
    double[::1] cap,
    double[::1] dprop,
    double[:, ::1] tmat,
    int[::1] ul_ptr,
    int[::1] ul_idx,
    int[::1] lu_ptr,
    int[::1] lu_idx,
    double[::1] w,
    double[::1] x,
    double[::1] dq,
    double[::1] dtrans,
    double[::1] dtot,
    bint include_dtrans,
    double tol,
    int max_iter,
):
    cdef int iters = 0
    cdef double res[3]
    cdef int status
    with nogil:
        status = _fluid_solve(
            cap, dprop, tmat, ul_ptr, ul_idx, lu_ptr, lu_idx,
            w, x, dq, dtrans, dtot, include_dtrans, tol, max_iter,
            &iters, res,
        )
    return status, iters, res[0], res[1], res[2]


def controller_run(
    double[::1] cap,
    double[::1] dprop,
    double[:, ::1] tmat,
    int[::1] ul_ptr,
    int[::1] ul_idx,
    int[::1] lu_ptr,
    int[::1] lu_idx,
    int scheme,
    double gain,
    double h,
    double[::1] a,
    double[::1] b,
    double[::1] ptarget,
    double[::1] w,
    double[::1] x,
    double[::1] dq,
    double[::1] dtrans,
    double[::1] dtot,
    double[::1] s_buf,
    bint include_dtrans,
    double fluid_tol,
    int fluid_max_iter,
    double tol,
    int dwell_n,
    int max_iter,
    double w_min,
    int sample_every,
    long long[::1] traj_it,
    double[:, ::1] traj_w,
    double[:, ::1] traj_x,
    double[:, ::1] traj_s,
    double[::1] traj_v,
):
    cdef int n_users = w.shape[0]
    cdef int dwell = 0
    cdef int floor_hits = 0
    cdef int n_samples = 0
    cdef bint converged = False
    cdef int it = 0
    cdef int st, r
    cdef int fiters = 0
    cdef double fres[3]
    cdef bint sample
    cdef int status = 0
    cdef double v_val, max_step, uprime, udd, s, fd, fw, w_new, step

    with nogil:
        while it < max_iter:
            st = _fluid_solve(
                cap, dprop, tmat, ul_ptr, ul_idx, lu_ptr, lu_idx,
                w, x, dq, dtrans, dtot, include_dtrans, fluid_tol,
                fluid_max_iter, &fiters, fres,
            )
            if st != 0:
                status = 1
                break

            sample = it % sample_every == 0
            v_val = 0.0
            max_step = 0.0
            for r in range(n_users):
                uprime = a[r] / (x[r] + b[r])
                if scheme == 0:
                    s = w[r] - x[r] * dtrans[r] - x[r] * uprime
                    fd = dtrans[r] / dtot[r]
                elif scheme == 1:
                    s = w[r] - x[r] * dprop[r] - ptarget[r]
                    fd = dprop[r] / dtot[r]
                elif scheme == 2:
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
                step = w_new - w[r]
                if step < 0:
                    step = -step
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

        if status == 0:
            st = _fluid_solve(
                cap, dprop, tmat, ul_ptr, ul_idx, lu_ptr, lu_idx,
                w, x, dq, dtrans, dtot, include_dtrans, fluid_tol,
                fluid_max_iter, &fiters, fres,
            )
            if st != 0:
                status = 1
            else:
                v_val = 0.0
                for r in range(n_users):
                    uprime = a[r] / (x[r] + b[r])
                    if scheme == 0:
                        s = w[r] - x[r] * dtrans[r] - x[r] * uprime
                    elif scheme == 1:
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
    return status, it, converged, n_samples, floor_hits
