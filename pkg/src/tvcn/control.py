"""Window-update laws and their iteration to a stable window vector.

Four schemes share one Euler loop. Each iteration solves the fluid model at
the current windows, forms an error signal ``s`` (backlog), and moves every
window by ``-gain * h * f_d * s / w``. The gain factor ``f_d`` and the pay
term inside ``s`` differ per scheme:

* ``proposed``: ``s = w - x*d_trans - x*U'(x)``, ``f_d = d_trans / D``.
* ``mo``: ``s = w - x*d_prop - p`` with a fixed target backlog ``p``,
  ``f_d = d_prop / D``.
* ``la``: ``s = w - x*d_prop - x*U'(x)``,
  ``f_d = (d_prop + U'(x) + x*U''(x)) / D``.
* ``lawd``: ``la`` without the utility terms in ``f_d``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    DegenerateDelayError,
    DomainError,
    FluidDivergenceError,
    ParameterError,
)
from .fluid import _Workspace, solve_problem

SCHEMES = ("proposed", "mo", "la", "lawd")

DEFAULT_GAIN = 0.1
DEFAULT_MAX_ITER = 15_000
DEFAULT_TOL = 1e-6
DEFAULT_DWELL = 50
DEFAULT_W_MIN = 1e-6
DEFAULT_SAMPLE_EVERY = 100


@dataclass(frozen=True)
class UtilityParams:
    """Logarithmic utility ``a * ln(x + b)``."""

    a: float
    b: float

    def __post_init__(self):
        if not self.a > 0:
            raise ParameterError("utility scale a must be positive")
        if not (0.0 <= self.b <= 1.0):
            raise ParameterError("utility offset b must lie in [0, 1]")


def utility(x, params):
    if np.any(np.asarray(x) + params.b <= 0):
        raise DomainError("utility requires x + b > 0")
    return params.a * np.log(np.asarray(x, dtype=np.float64) + params.b)


def utility_prime(x, params):
    if np.any(np.asarray(x) + params.b <= 0):
        raise DomainError("utility requires x + b > 0")
    return params.a / (np.asarray(x, dtype=np.float64) + params.b)


def utility_double_prime(x, params):
    if np.any(np.asarray(x) + params.b <= 0):
        raise DomainError("utility requires x + b > 0")
    return -params.a / (np.asarray(x, dtype=np.float64) + params.b) ** 2


def willingness_to_pay(x, params):
    """Marginal-utility-weighted rate ``x * U'(x)``."""
    return np.asarray(x, dtype=np.float64) * utility_prime(x, params)


@dataclass
class ControllerState:
    """Mutable controller bookkeeping for the step-level interface."""

    scheme: str
    gain: float
    step_size: float
    windows: np.ndarray
    pay: np.ndarray | None = None
    iteration: int = 0
    trajectory: list = field(default_factory=list)
    w_min: float = DEFAULT_W_MIN

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ParameterError(f"unknown scheme {self.scheme!r}")
        if not self.gain > 0:
            raise ParameterError("gain must be positive")
        if not self.step_size > 0:
            raise ParameterError("step size must be positive")
        self.windows = np.asarray(self.windows, dtype=np.float64).copy()


def _check_delays(D):
    if np.any(np.asarray(D) <= 0):
        raise DegenerateDelayError("total delay must be positive")


def step_proposed(state, fluid, utilities, kappa=None, h=None):
    """One Euler step of the transmission-delay law; returns new windows."""
    kappa = state.gain if kappa is None else kappa
    h = state.step_size if h is None else h
    _check_delays(fluid.D)
    x = fluid.x
    uprime = np.array([utility_prime(x[i], utilities[i]) for i in range(len(x))])
    s = fluid.w - x * fluid.d_trans - x * uprime
    f_d = fluid.d_trans / fluid.D
    f_w = s / fluid.w
    w_new = np.maximum(state.w_min, fluid.w - kappa * h * f_d * f_w)
    state.trajectory.append((state.iteration, fluid.w.copy(), s.copy()))
    state.iteration += 1
    state.windows = w_new
    return w_new


def step_mo(state, fluid, alpha=None, h=None):
    """One Euler step of the static target-backlog law."""
    alpha = state.gain if alpha is None else alpha
    h = state.step_size if h is None else h
    if state.pay is None:
        raise ParameterError("mo scheme needs a target backlog vector")
    _check_delays(fluid.D)
    s = fluid.w - fluid.x * fluid.d_prop - np.asarray(state.pay)
    f_d = fluid.d_prop / fluid.D
    w_new = np.maximum(state.w_min, fluid.w - alpha * h * f_d * s / fluid.w)
    state.trajectory.append((state.iteration, fluid.w.copy(), s.copy()))
    state.iteration += 1
    state.windows = w_new
    return w_new


def step_la(state, fluid, utilities, alpha=None, h=None, dynamic_terms=True):
    """One Euler step of the utility-pay law, with or without dynamic terms."""
    alpha = state.gain if alpha is None else alpha
    h = state.step_size if h is None else h
    _check_delays(fluid.D)
    x = fluid.x
    uprime = np.array([utility_prime(x[i], utilities[i]) for i in range(len(x))])
    s = fluid.w - x * fluid.d_prop - x * uprime
    if dynamic_terms:
        udd = np.array([utility_double_prime(x[i], utilities[i]) for i in range(len(x))])
        numerator = fluid.d_prop + uprime + x * udd
        if np.any(numerator <= 0):
            raise ParameterError("la gain numerator must stay positive")
    else:
        numerator = fluid.d_prop
    f_d = numerator / fluid.D
    w_new = np.maximum(state.w_min, fluid.w - alpha * h * f_d * s / fluid.w)
    state.trajectory.append((state.iteration, fluid.w.copy(), s.copy()))
    state.iteration += 1
    state.windows = w_new
    return w_new


@dataclass(frozen=True)
class Trajectory:
    """Sampled controller history."""

    iterations: np.ndarray
    w: np.ndarray
    x: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def to_csv(self):
        """CSV with columns iteration,user,w,x,s,V_contrib."""
        lines = ["iteration,user,w,x,s,V_contrib"]
        for k in range(self.iterations.shape[0]):
            for r in range(self.w.shape[1]):
                contrib = 0.5 * (self.s[k, r] / self.w[k, r]) ** 2
                lines.append(
                    f"{self.iterations[k]},{r},{self.w[k, r]:.6g},"
                    f"{self.x[k, r]:.6g},{self.s[k, r]:.6g},{contrib:.6g}"
                )
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ControllerResult:
    scheme: str
    converged: bool
    iterations: int
    w_star: np.ndarray
    s_final: np.ndarray
    v_final: float
    floor_hits: int
    trajectory: Trajectory
    solution: object


def run_to_convergence(
    scheme,
    initial_windows,
    problem,
    utilities,
    gain=DEFAULT_GAIN,
    h=1.0,
    tol=DEFAULT_TOL,
    max_iter=DEFAULT_MAX_ITER,
    dwell=DEFAULT_DWELL,
    pay_target=None,
    w_min=DEFAULT_W_MIN,
    sample_every=DEFAULT_SAMPLE_EVERY,
    include_transmission_delay=True,
    fluid_tol=1e-9,
    fluid_max_iter=100_000,
    backend=None,
):
    """Iterate one scheme until the windows settle.

    Convergence means the largest per-iteration window change stays below
    ``tol`` for ``dwell`` consecutive iterations. Hitting ``max_iter`` first
    yields a result with ``converged=False`` rather than an exception.
    """
    if scheme not in SCHEMES:
        raise ParameterError(f"unknown scheme {scheme!r}")
    if not gain > 0:
        raise ParameterError("gain must be positive")
    kern = backend if backend is not None else _kernels.active
    n = problem.n_users
    w = np.ascontiguousarray(initial_windows, dtype=np.float64).copy()
    if w.shape[0] != n:
        raise ParameterError("initial window length does not match user count")
    if np.any(w <= 0):
        raise ParameterError("initial windows must be positive")
    a = np.array([u.a for u in utilities], dtype=np.float64)
    b = np.array([u.b for u in utilities], dtype=np.float64)
    if a.shape[0] != n:
        raise ParameterError("one utility per user required")
    if pay_target is None:
        ptarget = np.ones(n)
    else:
        ptarget = np.ascontiguousarray(pay_target, dtype=np.float64).copy()

    ws = _Workspace(problem)
    ws.reset(w)
    s_buf = np.zeros(n)
    max_samples = int(max_iter) // int(sample_every) + 2
    traj_it = np.zeros(max_samples, dtype=np.int64)
    traj_w = np.zeros((max_samples, n))
    traj_x = np.zeros((max_samples, n))
    traj_s = np.zeros((max_samples, n))
    traj_v = np.zeros(max_samples)

    status, n_iter, converged, n_samples, floor_hits = kern.controller_run(
        problem.cap,
        problem.dprop,
        problem.tmat,
        problem.ul_ptr,
        problem.ul_idx,
        problem.lu_ptr,
        problem.lu_idx,
        _kernels.SCHEME_CODES[scheme],
        float(gain),
        float(h),
        a,
        b,
        ptarget,
        w,
        ws.x,
        ws.dq,
        ws.dtrans,
        ws.dtot,
        s_buf,
        bool(include_transmission_delay),
        float(fluid_tol),
        int(fluid_max_iter),
        float(tol),
        int(dwell),
        int(max_iter),
        float(w_min),
        int(sample_every),
        traj_it,
        traj_w,
        traj_x,
        traj_s,
        traj_v,
    )
    if status != 0:
        # re-run the failing solve through the python path for diagnostics
        try:
            solve_problem(
                problem,
                w,
                tol=fluid_tol,
                max_iter=fluid_max_iter,
                include_transmission_delay=include_transmission_delay,
            )
        except FluidDivergenceError:
            raise
        raise FluidDivergenceError(
            f"fluid solver failed at controller iteration {n_iter}"
        )

    solution = solve_problem(
        problem,
        w,
        tol=fluid_tol,
        max_iter=fluid_max_iter,
        include_transmission_delay=include_transmission_delay,
        workspace=ws,
    )
    trajectory = Trajectory(
        iterations=traj_it[:n_samples].copy(),
        w=traj_w[:n_samples].copy(),
        x=traj_x[:n_samples].copy(),
        s=traj_s[:n_samples].copy(),
        v=traj_v[:n_samples].copy(),
    )
    return ControllerResult(
        scheme=scheme,
        converged=bool(converged),
        iterations=int(n_iter),
        w_star=w.copy(),
        s_final=s_buf.copy(),
        v_final=float(traj_v[n_samples - 1]),
        floor_hits=int(floor_hits),
        trajectory=trajectory,
        solution=solution,
    )


def initial_windows(problem, rates, include_transmission_delay=True):
    """Windows consistent with exogenous starting rates on empty queues.

    In-flight volume is ``rate * (propagation + transmission delay)``; the
    initial queues are empty.
    """
    x = np.asarray(rates, dtype=np.float64)
    if np.any(x <= 0):
        raise ParameterError("initial rates must be positive")
    d = problem.dprop.copy()
    if include_transmission_delay:
        d = d + problem.tmat @ x
    return x * d
