"""End-to-end scenarios: evolve, place users, run every scheme, report.

Scenario defaults calibrate the per-user utility scale and the static
target backlog from the routes themselves: the utility scale is chosen so
that marginal utility equals the route propagation delay at the design
rate where transmission delay matches propagation delay, and the target
backlog is twice the design in-flight volume. This keeps every scheme's
stable point at moderate window sizes on arbitrary evolved topologies;
fixed numeric overrides are accepted.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, control, fluid, graph, routing
from .errors import ConfigError, InsufficientDataError, ParameterError, PlacementError

DEFAULT_SCHEMES = ("proposed", "mo", "la", "lawd")


@dataclass(frozen=True)
class Scenario:
    """Reproducible description of one experiment."""

    seed: int
    sizes: tuple = (500,)
    users: int = 4
    n0: int = 5
    M: int = 5
    beta: float = 0.6
    gamma: float = 0.8
    seed_topology: str = "complete"
    schemes: tuple = DEFAULT_SCHEMES
    gain: float = control.DEFAULT_GAIN
    step_size: float = 1.0
    tol: float = control.DEFAULT_TOL
    dwell: int = control.DEFAULT_DWELL
    max_iter: int = control.DEFAULT_MAX_ITER
    w_min: float = control.DEFAULT_W_MIN
    sample_every: int = control.DEFAULT_SAMPLE_EVERY
    include_transmission_delay: bool = True
    fluid_tol: float = 1e-9
    fluid_max_iter: int = 100_000
    utility_mode: str = "calibrated"  # or "fixed"
    utility_a: float = 1.0
    utility_b: float = 0.5
    utility_jitter: float = 0.015
    pay_mode: str = "calibrated"  # or "fixed"
    pay_value: float = 1.0
    pay_jitter: float = 0.10
    design_cap: float = 7.5
    initial_rate_factor: float = 1.5
    initial_windows: tuple | None = None
    power_law_k_min: int = 3

    def __post_init__(self):
        if self.users < 1:
            raise ConfigError("at least one user required", field="users")
        if len(self.sizes) == 0:
            raise ConfigError("at least one target size required", field="sizes")
        if list(self.sizes) != sorted(set(self.sizes)):
            raise ConfigError("sizes must be strictly increasing", field="sizes")
        if self.sizes[0] < self.n0:
            raise ConfigError("sizes must not be smaller than n0", field="sizes")
        for s in self.schemes:
            if s not in control.SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}", field="schemes")
        if self.utility_mode not in ("calibrated", "fixed"):
            raise ConfigError("utility mode must be calibrated or fixed", field="utility")
        if self.pay_mode not in ("calibrated", "fixed"):
            raise ConfigError("pay mode must be calibrated or fixed", field="pay")
        # delegate range checks on the evolution fractions
        self.evolution_params()

    def evolution_params(self):
        return graph.EvolutionParams(
            n0=self.n0, M=self.M, beta=self.beta, gamma=self.gamma, rng_seed=self.seed
        )

    def to_dict(self):
        d = {
            "seed": self.seed,
            "sizes": list(self.sizes),
            "users": self.users,
            "n0": self.n0,
            "M": self.M,
            "beta": self.beta,
            "gamma": self.gamma,
            "seed_topology": self.seed_topology,
            "schemes": list(self.schemes),
            "gain": self.gain,
            "step_size": self.step_size,
            "tol": self.tol,
            "dwell": self.dwell,
            "max_iter": self.max_iter,
            "w_min": self.w_min,
            "sample_every": self.sample_every,
            "include_transmission_delay": self.include_transmission_delay,
            "fluid_tol": self.fluid_tol,
            "fluid_max_iter": self.fluid_max_iter,
            "utility_mode": self.utility_mode,
            "utility_a": self.utility_a,
            "utility_b": self.utility_b,
            "utility_jitter": self.utility_jitter,
            "pay_mode": self.pay_mode,
            "pay_value": self.pay_value,
            "pay_jitter": self.pay_jitter,
            "design_cap": self.design_cap,
            "initial_rate_factor": self.initial_rate_factor,
            "initial_windows": list(self.initial_windows)
            if self.initial_windows is not None
            else None,
            "power_law_k_min": self.power_law_k_min,
        }
        return d


def place_users(snapshot, n_users, rng):
    """Source/destination pairs drawn uniformly among degree >= 2 nodes.

    All endpoints are distinct across users.
    """
    eligible = sorted(n for n in snapshot.adjacency if snapshot.degree(n) >= 2)
    if len(eligible) < 2 * n_users:
        raise PlacementError(
            f"need {2 * n_users} distinct nodes of degree >= 2, found {len(eligible)}"
        )
    picks = rng.choice(len(eligible), size=2 * n_users, replace=False)
    return [
        (eligible[int(picks[2 * i])], eligible[int(picks[2 * i + 1])])
        for i in range(n_users)
    ]


def calibrate_parameters(routes, scenario, rng):
    """Per-user utility scales, offsets and target backlogs for a route set.

    Design rates solve, where positively possible, the linear system making
    every user's transmission delay equal its propagation delay; utilities
    then price that operating point at the propagation delay and target
    backlogs sit at twice the design in-flight volume. Users squeezed by
    heavy route overlap are pinned to a small floor rate instead, which
    keeps them from distorting the rest. Jitters keep users heterogeneous.
    """
    n = len(routes)
    dprop = np.array([r.prop_delay for r in routes])
    denom = np.array([r.min_node_capacity for r in routes])
    shares = np.zeros((n, n))
    for i, ri in enumerate(routes):
        ni = set(ri.nodes)
        for j, rj in enumerate(routes):
            shares[i, j] = len(ni.intersection(rj.nodes))
    coupling = shares / denom[:, None]
    uncoupled = dprop / np.diag(coupling)
    b = scenario.utility_b
    floor = 0.05 * uncoupled
    # cap keeps the slowest time constant of the update laws inside the
    # iteration budget: the design bandwidth-delay product stays bounded
    ceil = np.maximum(floor, scenario.design_cap / dprop - b)
    # projected Gauss-Seidel on coupling @ x = dprop within [floor, ceil]
    x_design = np.minimum(uncoupled, ceil)
    for _sweep in range(200):
        delta = 0.0
        for i in range(n):
            cross = float(coupling[i] @ x_design) - coupling[i, i] * x_design[i]
            xi = min(ceil[i], max(floor[i], (dprop[i] - cross) / coupling[i, i]))
            delta = max(delta, abs(xi - x_design[i]))
            x_design[i] = xi
        if delta < 1e-13:
            break

    u_jit = 1.0 + scenario.utility_jitter * (2.0 * rng.random(n) - 1.0)
    p_jit = 1.0 + scenario.pay_jitter * (2.0 * rng.random(n) - 1.0)
    t_design = coupling @ x_design
    if scenario.utility_mode == "calibrated":
        # capped users anchor the utility-pay fixed point at the design rate
        # instead; everyone else prices the design rate at d_prop
        price = np.where(t_design < dprop * (1.0 - 1e-9), t_design, dprop)
        a = (x_design + b) * price * u_jit
    else:
        a = np.full(n, scenario.utility_a)
    if scenario.pay_mode == "calibrated":
        pay = 2.0 * x_design * np.maximum(t_design, dprop) * p_jit
    else:
        pay = np.full(n, scenario.pay_value)
    utilities = [control.UtilityParams(a=float(ai), b=float(b)) for ai in a]
    return utilities, pay, x_design


@dataclass
class CellResult:
    """Outcome of one (size, scheme) run."""

    size: int
    scheme: str
    converged: bool
    iterations: int
    time_s: float
    w0: list
    w_star: list
    s_final: list
    v_final: float
    floor_hits: int
    error: str | None = None
    trajectory: control.Trajectory | None = None

    def to_dict(self):
        return {
            "size": self.size,
            "scheme": self.scheme,
            "converged": self.converged,
            "iterations": self.iterations,
            "time_s": self.time_s,
            "w0": self.w0,
            "w_star": self.w_star,
            "s_final": self.s_final,
            "v_final": self.v_final,
            "floor_hits": self.floor_hits,
            "error": self.error,
        }


@dataclass
class ComparisonReport:
    """Everything one scenario produced.

    ``snapshots`` keeps the evolved network per target size for file
    emission; it is not part of the JSON report body.
    """

    scenario: Scenario
    backend: str
    users: list
    cells: list
    alpha_hat: dict
    fairness: dict
    calibration: dict
    snapshots: dict = field(default_factory=dict)

    def cell(self, size, scheme):
        for c in self.cells:
            if c.size == size and c.scheme == scheme:
                return c
        raise KeyError((size, scheme))

    def to_dict(self, include_trajectories=False):
        out = {
            "scenario": self.scenario.to_dict(),
            "backend": self.backend,
            "users": [list(u) for u in self.users],
            "cells": [c.to_dict() for c in self.cells],
            "alpha_hat": {str(k): v for k, v in self.alpha_hat.items()},
            "fairness": self.fairness,
            "calibration": self.calibration,
        }
        if include_trajectories:
            out["trajectories"] = {
                f"{c.size}/{c.scheme}": {
                    "iterations": c.trajectory.iterations.tolist(),
                    "w": c.trajectory.w.tolist(),
                    "v": c.trajectory.v.tolist(),
                }
                for c in self.cells
                if c.trajectory is not None
            }
        return out


def strip_timing(report_dict):
    """Copy of a report dict with wall-clock fields nulled for comparisons."""
    import copy

    out = copy.deepcopy(report_dict)
    for cell in out.get("cells", []):
        cell["time_s"] = None
    return out


def proportional_fairness_check(x_star, alternatives, matrix, capacities, tol=1e-9, feas_tol=1e-9):
    """Aggregate proportional change of each feasible alternative against x*.

    Returns a dict with per-alternative aggregates, a list of rejected
    (infeasible) alternatives with their violations, and a verdict that all
    feasible aggregates stay at or below ``tol``.
    """
    x_star = np.asarray(x_star, dtype=np.float64)
    if np.any(x_star <= 0):
        raise ParameterError("x_star must be strictly positive")
    matrix = np.asarray(matrix, dtype=np.float64)
    capacities = np.asarray(capacities, dtype=np.float64)
    aggregates = []
    rejected = []
    for k, alt in enumerate(alternatives):
        alt = np.asarray(alt, dtype=np.float64)
        loads = matrix.T @ alt
        violation = loads - capacities
        worst = float(np.max(violation)) if violation.size else 0.0
        if worst > feas_tol * float(np.max(capacities)) or np.any(alt < 0):
            rejected.append(
                {"index": k, "max_capacity_violation": worst}
            )
            continue
        aggregates.append(float(np.sum((alt - x_star) / x_star)))
    verdict = all(agg <= tol for agg in aggregates)
    return {"aggregates": aggregates, "rejected": rejected, "passed": verdict}


def _sampled_fairness(problem, x_star, rng, n_samples=200):
    """Informational fairness summary against random feasible rate vectors."""
    n = x_star.shape[0]
    alts = []
    for _ in range(n_samples):
        direction = rng.random(n) + 1e-3
        # scale into the capacity region
        loads = problem.link_loads(direction)
        with np.errstate(divide="ignore"):
            scale = np.min(problem.cap / np.where(loads > 0, loads, np.inf))
        alts.append(direction * scale * rng.random())
    matrix = np.zeros((n, problem.cap.shape[0]))
    for r in range(n):
        for k in range(problem.ul_ptr[r], problem.ul_ptr[r + 1]):
            matrix[r, problem.ul_idx[k]] = 1.0
    res = proportional_fairness_check(x_star, alts, matrix, problem.cap)
    return {
        "max_aggregate": max(res["aggregates"]) if res["aggregates"] else None,
        "n_feasible": len(res["aggregates"]),
    }


def run_scenario(scenario, keep_trajectories=True):
    """Evolve to each size, route the users, run every scheme, collect cells.

    Deterministic given the scenario seed; wall-clock fields are the only
    run-to-run difference. Cells are independent (each scheme run owns its
    state and shares only immutable routes and snapshots), so callers may
    farm them out; this runner keeps them sequential for clean timings.
    """
    seeds = np.random.SeedSequence(scenario.seed).spawn(3)
    rng_evolve = np.random.default_rng(seeds[0])
    rng_place = np.random.default_rng(seeds[1])
    rng_cal = np.random.default_rng(seeds[2])

    params = scenario.evolution_params()
    snapshot = graph.new_seed_network(scenario.n0, scenario.seed_topology, rng_evolve)
    users = None
    cells = []
    alpha_hat = {}
    fairness = {}
    calibration = {}
    snapshots = {}

    for size in scenario.sizes:
        steps = size - snapshot.n_nodes
        if steps < 0:
            raise ConfigError("sizes must be reachable by growth", field="sizes")
        snapshot, _ = graph.evolve(snapshot, params, rng_evolve, steps)
        snapshots[size] = snapshot
        if users is None:
            users = place_users(snapshot, scenario.users, rng_place)
        routes = [
            routing.shortest_route(snapshot, s, d, user=i)
            for i, (s, d) in enumerate(users)
        ]
        problem = fluid.FluidProblem.from_routes(routes, snapshot)
        utilities, pay, x_design = calibrate_parameters(routes, scenario, rng_cal)
        if scenario.initial_windows is not None:
            w0 = np.asarray(scenario.initial_windows, dtype=np.float64)
        else:
            w0 = control.initial_windows(
                problem,
                scenario.initial_rate_factor * x_design,
                include_transmission_delay=scenario.include_transmission_delay,
            )
        try:
            alpha_hat[size] = graph.fit_power_law_exponent(
                snapshot, scenario.power_law_k_min
            )
        except InsufficientDataError as exc:
            alpha_hat[size] = None
        calibration[size] = {
            "a": [u.a for u in utilities],
            "b": [u.b for u in utilities],
            "pay_target": pay.tolist(),
            "design_rates": x_design.tolist(),
            "w0": w0.tolist(),
            "routes": [r.to_json_dict() for r in routes],
        }

        for scheme in scenario.schemes:
            t0 = time.perf_counter()
            try:
                result = control.run_to_convergence(
                    scheme,
                    w0,
                    problem,
                    utilities,
                    gain=scenario.gain,
                    h=scenario.step_size,
                    tol=scenario.tol,
                    max_iter=scenario.max_iter,
                    dwell=scenario.dwell,
                    pay_target=pay,
                    w_min=scenario.w_min,
                    sample_every=scenario.sample_every,
                    include_transmission_delay=scenario.include_transmission_delay,
                    fluid_tol=scenario.fluid_tol,
                    fluid_max_iter=scenario.fluid_max_iter,
                )
                elapsed = time.perf_counter() - t0
                cells.append(
                    CellResult(
                        size=size,
                        scheme=scheme,
                        converged=result.converged,
                        iterations=result.iterations,
                        time_s=elapsed,
                        w0=[float(v) for v in w0],
                        w_star=[float(v) for v in result.w_star],
                        s_final=[float(v) for v in result.s_final],
                        v_final=result.v_final,
                        floor_hits=result.floor_hits,
                        trajectory=result.trajectory if keep_trajectories else None,
                    )
                )
                if scheme == "la":
                    fairness[str(size)] = _sampled_fairness(
                        problem, result.solution.x, np.random.default_rng(scenario.seed)
                    )
            except Exception as exc:  # cell errors recorded, run continues
                elapsed = time.perf_counter() - t0
                cells.append(
                    CellResult(
                        size=size,
                        scheme=scheme,
                        converged=False,
                        iterations=0,
                        time_s=elapsed,
                        w0=[float(v) for v in w0],
                        w_star=[],
                        s_final=[],
                        v_final=float("nan"),
                        floor_hits=0,
                        error=f"{type(exc).__name__}: {exc}",
                    )
                )

    return ComparisonReport(
        scenario=scenario,
        backend=_kernels.backend_name(),
        users=users,
        cells=cells,
        alpha_hat=alpha_hat,
        fairness=fairness,
        calibration=calibration,
        snapshots=snapshots,
    )


def speedup_summary(report):
    """Mean wall-clock time of each scheme relative to the proposed scheme.

    Informational only; cells with errors are excluded from the means.
    """
    times = {}
    for cell in report.cells:
        if cell.error is None:
            times.setdefault(cell.scheme, []).append(cell.time_s)
    means = {s: float(np.mean(v)) for s, v in times.items() if v}
    if "proposed" not in means or means["proposed"] == 0:
        return {}
    return {s: m / means["proposed"] for s, m in means.items()}
