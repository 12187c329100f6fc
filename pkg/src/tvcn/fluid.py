"""Multi-class fluid equilibrium: rates, queueing delays, transmission delays.

For given windows the equilibrium satisfies, within tolerance:

* capacity: aggregate rate on every link stays at or below capacity,
* complementary slackness: a positive per-link queueing delay implies the
  link is saturated,
* window consistency: ``x_i * D_i = w_i`` where ``D_i`` is the user's total
  delay.

``D_i`` is propagation plus queueing plus transmission delay by default;
with ``include_transmission_delay=False`` the transmission term is excluded
from ``D`` (it is still reported), which reproduces the classic static-delay
form used by the Mo and La update laws.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    DegenerateCapacityError,
    FluidDivergenceError,
    ParameterError,
)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 100_000


def node_loads(routes, x):
    """Aggregate rate seen at each node: sum of rates of routes visiting it."""
    loads = {}
    for route, rate in zip(routes, x):
        for n in route.nodes:
            loads[n] = loads.get(n, 0.0) + float(rate)
    return loads


def transmission_delay(user, loads, route, snapshot):
    """Route node-load sum over the route's minimum node forwarding capacity.

    The forwarding capacity of a node is its degree.
    """
    denom = min(snapshot.degree(n) for n in route.nodes)
    if denom <= 0:
        raise DegenerateCapacityError(f"route of user {user} has zero capacity")
    total = sum(loads.get(n, 0.0) for n in route.nodes)
    return total / denom


def queueing_delay_ratio(route, loads, snapshot):
    """Diagnostic per-route queueing measure: sum of load/capacity per node."""
    return sum(loads.get(n, 0.0) / snapshot.degree(n) for n in route.nodes)


def backlog(w, x, d_trans, p):
    """Window minus in-flight volume minus pay; may be negative."""
    return w - x * d_trans - p


def mo_backlog(w, x, d_prop, p):
    """Backlog variant with the propagation delay in place of transmission."""
    return w - x * d_prop - p


@dataclass(frozen=True)
class FluidProblem:
    """Array form of one scenario: routes and capacities, no windows.

    ``tmat @ x`` gives per-user transmission delays. ``links`` keeps the
    original link identities for reporting; capacities refer to the same
    order.
    """

    n_users: int
    links: tuple
    cap: np.ndarray
    dprop: np.ndarray
    denom: np.ndarray
    tmat: np.ndarray
    ul_ptr: np.ndarray
    ul_idx: np.ndarray
    lu_ptr: np.ndarray
    lu_idx: np.ndarray

    @staticmethod
    def from_routes(routes, snapshot):
        used = sorted({l for r in routes for l in r.links})
        index = {l: i for i, l in enumerate(used)}
        n_users = len(routes)
        cap = np.array([float(snapshot.capacity(*l)) for l in used])
        dprop = np.array([r.prop_delay for r in routes])
        denom = np.array([r.min_node_capacity for r in routes])
        if np.any(denom <= 0):
            raise DegenerateCapacityError("a route has zero forwarding capacity")
        tmat = np.zeros((n_users, n_users))
        for i, ri in enumerate(routes):
            ni = set(ri.nodes)
            for j, rj in enumerate(routes):
                shared = len(ni.intersection(rj.nodes))
                tmat[i, j] = shared / denom[i]
        ul_ptr = np.zeros(n_users + 1, dtype=np.int32)
        ul_idx = []
        for i, r in enumerate(routes):
            cols = sorted(index[l] for l in r.links)
            ul_idx.extend(cols)
            ul_ptr[i + 1] = len(ul_idx)
        link_users = [[] for _ in used]
        for i, r in enumerate(routes):
            for l in r.links:
                link_users[index[l]].append(i)
        lu_ptr = np.zeros(len(used) + 1, dtype=np.int32)
        lu_idx = []
        for e, users in enumerate(link_users):
            lu_idx.extend(sorted(users))
            lu_ptr[e + 1] = len(lu_idx)
        return FluidProblem(
            n_users=n_users,
            links=tuple(used),
            cap=cap,
            dprop=dprop,
            denom=denom,
            tmat=tmat,
            ul_ptr=ul_ptr,
            ul_idx=np.array(ul_idx, dtype=np.int32),
            lu_ptr=lu_ptr,
            lu_idx=np.array(lu_idx, dtype=np.int32),
        )

    @staticmethod
    def from_parts(cap, dprop, denom, route_links, route_node_shares=None):
        """Direct construction for synthetic instances.

        ``route_links``: per-user list of link column indices.
        ``route_node_shares``: optional square matrix of shared node counts
        between routes; defaults to no transmission coupling.
        """
        cap = np.asarray(cap, dtype=np.float64)
        dprop = np.asarray(dprop, dtype=np.float64)
        denom = np.asarray(denom, dtype=np.float64)
        n_users = dprop.shape[0]
        n_links = cap.shape[0]
        if route_node_shares is None:
            tmat = np.zeros((n_users, n_users))
        else:
            shares = np.asarray(route_node_shares, dtype=np.float64)
            tmat = shares / denom[:, None]
        ul_ptr = np.zeros(n_users + 1, dtype=np.int32)
        ul_idx = []
        for i, cols in enumerate(route_links):
            ul_idx.extend(sorted(cols))
            ul_ptr[i + 1] = len(ul_idx)
        link_users = [[] for _ in range(n_links)]
        for i, cols in enumerate(route_links):
            for e in cols:
                link_users[e].append(i)
        lu_ptr = np.zeros(n_links + 1, dtype=np.int32)
        lu_idx = []
        for e in range(n_links):
            lu_idx.extend(sorted(link_users[e]))
            lu_ptr[e + 1] = len(lu_idx)
        return FluidProblem(
            n_users=n_users,
            links=tuple(range(n_links)),
            cap=cap,
            dprop=dprop,
            denom=denom,
            tmat=tmat,
            ul_ptr=ul_ptr,
            ul_idx=np.array(ul_idx, dtype=np.int32),
            lu_ptr=lu_ptr,
            lu_idx=np.array(lu_idx, dtype=np.int32),
        )

    def route_queue_delay(self, dq):
        """Per-user sum of link queueing delays along the route."""
        out = np.zeros(self.n_users)
        for r in range(self.n_users):
            for k in range(self.ul_ptr[r], self.ul_ptr[r + 1]):
                out[r] += dq[self.ul_idx[k]]
        return out

    def link_loads(self, x):
        out = np.zeros(self.cap.shape[0])
        for e in range(self.cap.shape[0]):
            for k in range(self.lu_ptr[e], self.lu_ptr[e + 1]):
                out[e] += x[self.lu_idx[k]]
        return out


@dataclass(frozen=True)
class FluidResiduals:
    window: float
    capacity: float
    slackness: float
    iterations: int

    def max(self):
        return max(self.window, self.capacity, self.slackness)

    def to_dict(self):
        return {
            "window": self.window,
            "capacity": self.capacity,
            "slackness": self.slackness,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class FluidSolution:
    """Equilibrium for one window vector."""

    x: np.ndarray
    dq_link: dict
    d_trans: np.ndarray
    d_prop: np.ndarray
    d_queue: np.ndarray
    D: np.ndarray
    w: np.ndarray
    residuals: FluidResiduals
    include_transmission_delay: bool

    def node_loads_for(self, routes):
        return node_loads(routes, self.x)


class _Workspace:
    """Reusable solver buffers; keeps warm starts across controller steps."""

    def __init__(self, problem):
        self.problem = problem
        self.x = np.zeros(problem.n_users)
        self.dq = np.zeros(problem.cap.shape[0])
        self.dtrans = np.zeros(problem.n_users)
        self.dtot = np.zeros(problem.n_users)
        self.warm = False

    def reset(self, w):
        self.x[:] = w / self.problem.dprop
        self.dq[:] = 0.0
        self.warm = True


def solve_problem(
    problem,
    windows,
    tol=DEFAULT_TOL,
    max_iter=DEFAULT_MAX_ITER,
    include_transmission_delay=True,
    workspace=None,
    backend=None,
):
    """Solve the fluid equilibrium for one window vector.

    Raises :class:`FluidDivergenceError` with the final residuals when the
    iteration budget is exhausted.
    """
    w = np.ascontiguousarray(windows, dtype=np.float64)
    if w.shape[0] != problem.n_users:
        raise ParameterError("window vector length does not match user count")
    if np.any(w <= 0):
        raise ParameterError("windows must be positive")
    kern = backend if backend is not None else _kernels.active
    ws = workspace if workspace is not None else _Workspace(problem)
    if not ws.warm:
        ws.reset(w)
    status, iters, rw, rc, rcs = kern.fluid_solve(
        problem.cap,
        problem.dprop,
        problem.tmat,
        problem.ul_ptr,
        problem.ul_idx,
        problem.lu_ptr,
        problem.lu_idx,
        w,
        ws.x,
        ws.dq,
        ws.dtrans,
        ws.dtot,
        include_transmission_delay,
        tol,
        int(max_iter),
    )
    residuals = FluidResiduals(window=rw, capacity=rc, slackness=rcs, iterations=iters)
    if status != 0:
        ws.warm = False
        raise FluidDivergenceError(
            f"fluid solver did not reach tol={tol} in {max_iter} iterations",
            residuals=residuals,
            iterations=iters,
        )
    dq = ws.dq.copy()
    return FluidSolution(
        x=ws.x.copy(),
        dq_link={l: dq[i] for i, l in enumerate(problem.links)},
        d_trans=ws.dtrans.copy(),
        d_prop=problem.dprop.copy(),
        d_queue=problem.route_queue_delay(dq),
        D=ws.dtot.copy(),
        w=w.copy(),
        residuals=residuals,
        include_transmission_delay=include_transmission_delay,
    )


def solve_fluid(
    windows,
    routes,
    snapshot,
    tol=DEFAULT_TOL,
    max_iter=DEFAULT_MAX_ITER,
    include_transmission_delay=True,
    backend=None,
):
    """Convenience wrapper building the problem from routes and a snapshot."""
    problem = FluidProblem.from_routes(routes, snapshot)
    return solve_problem(
        problem,
        windows,
        tol=tol,
        max_iter=max_iter,
        include_transmission_delay=include_transmission_delay,
        backend=backend,
    )


def solution_to_csv(solution):
    """CSV dump with columns user,x,d_prop,d_trans,dQ_sum,D,w."""
    buf = io.StringIO()
    buf.write("user,x,d_prop,d_trans,dQ_sum,D,w\n")
    for i in range(solution.x.shape[0]):
        buf.write(
            f"{i},{solution.x[i]:.6g},{solution.d_prop[i]:.6g},"
            f"{solution.d_trans[i]:.6g},{solution.d_queue[i]:.6g},"
            f"{solution.D[i]:.6g},{solution.w[i]:.6g}\n"
        )
    return buf.getvalue()
