"""Shared fixture builders for solver and stability tests."""

import numpy as np

from tvcn import control
from tvcn.fluid import FluidProblem


def pinned_instance(rng, variant=None):
    """3-user/5-link instance whose congested set pins every rate.

    Returns (problem, windows, utilities, x_pinned, dq_links, congested_cols).
    Congested links hold strictly positive queueing delays and the slack
    links keep wide margins, so the congested set is stable around the
    windows (an interior point).
    """
    variant = int(rng.integers(0, 2)) if variant is None else variant
    dprop = rng.uniform(0.3, 1.5, 3)
    denom = rng.uniform(2.0, 5.0, 3)
    shares = np.zeros((3, 3))
    for i in range(3):
        shares[i, i] = rng.integers(2, 5)
        for j in range(i + 1, 3):
            shares[i, j] = shares[j, i] = rng.integers(0, 3)
    if variant == 0:
        # private congested links e0..e2, slack shared e3 and e4
        route_links = [[0, 3], [1, 3], [2, 4]]
        x = rng.uniform(1.0, 4.0, 3)
        cap = np.array([x[0], x[1], x[2], (x[0] + x[1]) * 2.0, x[2] * 3.0])
        congested = [0, 1, 2]
    else:
        # private congested e0, e1 plus shared congested e3; e2, e4 slack
        route_links = [[0, 3], [1, 3], [2, 3, 4]]
        x = rng.uniform(1.0, 4.0, 3)
        cap = np.array([x[0], x[1], x[2] * 2.5, x.sum(), x[2] * 3.0])
        congested = [0, 1, 3]
    problem = FluidProblem.from_parts(cap, dprop, denom, route_links, shares)
    dq = np.zeros(5)
    for e in congested:
        dq[e] = rng.uniform(0.3, 1.2)
    d = dprop + problem.tmat @ x + np.array(
        [sum(dq[e] for e in links) for links in route_links]
    )
    w = x * d
    utilities = [
        control.UtilityParams(a=float(rng.uniform(0.5, 3.0)), b=float(rng.uniform(0.1, 0.9)))
        for _ in range(3)
    ]
    return problem, w, utilities, x, dq, congested


def a_b_of(problem, congested_cols):
    a_b = np.zeros((problem.n_users, len(congested_cols)))
    for col, e in enumerate(sorted(congested_cols)):
        for k in range(problem.lu_ptr[e], problem.lu_ptr[e + 1]):
            a_b[problem.lu_idx[k], col] = 1.0
    return a_b
