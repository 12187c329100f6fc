"""Assemble a stability report from a live network state."""

from __future__ import annotations

import numpy as np

from . import control, fluid, stability
from .errors import BoundaryCrossingError


def _congested_links(problem, solution, tol):
    out = []
    for i, link in enumerate(problem.links):
        load = 0.0
        for k in range(problem.lu_ptr[i], problem.lu_ptr[i + 1]):
            load += solution.x[problem.lu_idx[k]]
        if abs(load - problem.cap[i]) <= tol * problem.cap[i]:
            out.append((i, link))
    return out


def _a_b_matrix(problem, congested):
    n = problem.n_users
    a_b = np.zeros((n, len(congested)))
    for col, (e, _link) in enumerate(congested):
        for k in range(problem.lu_ptr[e], problem.lu_ptr[e + 1]):
            a_b[problem.lu_idx[k], col] = 1.0
    return a_b


def build_stability_report(
    windows,
    routes,
    snapshot,
    utilities,
    include_transmission_delay=True,
    congestion_tol=1e-6,
    fd_check=True,
    fd_eps=1e-6,
    fluid_tol=1e-10,
):
    """Solve the fluid model at ``windows`` and evaluate the descent machinery.

    The finite-difference cross-check and the boundary probe are skipped
    (and flagged) when the congested set is unstable around the state.
    """
    w = np.asarray(windows, dtype=np.float64)
    problem = fluid.FluidProblem.from_routes(routes, snapshot)
    solution = fluid.solve_problem(
        problem, w, tol=fluid_tol, include_transmission_delay=include_transmission_delay
    )
    congested = _congested_links(problem, solution, congestion_tol)
    a_b = _a_b_matrix(problem, congested)
    labels = tuple(link for _e, link in congested)

    x = solution.x
    dtot = solution.D
    d_trans = solution.d_trans
    uprime = np.array(
        [control.utility_prime(x[i], utilities[i]) for i in range(len(x))]
    )

    def error_signal(wv):
        sol = fluid.solve_problem(
            problem, wv, tol=fluid_tol,
            include_transmission_delay=include_transmission_delay,
        )
        up = np.array(
            [control.utility_prime(sol.x[i], utilities[i]) for i in range(len(sol.x))]
        )
        return (wv - sol.x * sol.d_trans - sol.x * up) / wv

    def congested_probe(wv):
        sol = fluid.solve_problem(
            problem, wv, tol=fluid_tol,
            include_transmission_delay=include_transmission_delay,
        )
        return frozenset(e for e, _l in _congested_links(problem, sol, congestion_tol))

    f = error_signal(w)
    v = stability.lyapunov(f)
    j_x = stability.jacobian_x(a_b, x, dtot, labels=labels)
    j_q = stability.jacobian_q(a_b, x, dtot, labels=labels)
    j_f = stability.jacobian_f(a_b, x, dtot, d_trans, uprime, labels=labels)
    q = stability.q_matrix(d_trans, uprime, dtot, x)
    positive, eigenvalues = stability.is_positive_definite(q)
    dv_dt = -float(f @ q @ f)

    fd_err = None
    boundary = False
    if fd_check:
        try:
            fd = stability.fd_jacobian(error_signal, w, eps=fd_eps, set_probe=congested_probe)
            scale = np.maximum(np.abs(j_f), 1e-9)
            fd_err = float(np.max(np.abs(fd - j_f) / scale))
        except BoundaryCrossingError:
            boundary = True

    return stability.StabilityReport(
        v=v,
        f=f,
        j_x=j_x,
        j_q=j_q,
        j_f=j_f,
        q=q,
        eigenvalues=eigenvalues,
        positive_definite=positive,
        dv_dt_estimate=dv_dt,
        fd_max_rel_error=fd_err,
        boundary_flag=boundary,
        congested_links=labels,
    )
