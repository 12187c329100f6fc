"""Compare the compiled kernels against the pure-Python fallback.

Runs the same controller-convergence workload through both backends and
reports wall-clock times, the speedup, and the worst disagreement in the
converged windows. Usage::

    python benchmarks/bench_kernels.py [--size 800] [--users 4] [--repeat 3]
"""

import argparse
import time

import numpy as np

from tvcn import _kernels, control, fluid, graph, harness, routing
from tvcn._kernels import reference


def build_workload(size, users, seed):
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[0])
    params = graph.EvolutionParams(n0=5, M=5, beta=0.6, gamma=0.8, rng_seed=seed)
    snap = graph.new_seed_network(5, "complete", rng)
    snap, _ = graph.evolve(snap, params, rng, size - 5)
    pairs = harness.place_users(snap, users, np.random.default_rng(seed + 1))
    routes = [routing.shortest_route(snap, s, d, user=i) for i, (s, d) in enumerate(pairs)]
    problem = fluid.FluidProblem.from_routes(routes, snap)
    scenario = harness.Scenario(seed=seed, sizes=(size,), users=users)
    utilities, pay, x_design = harness.calibrate_parameters(
        routes, scenario, np.random.default_rng(seed + 2)
    )
    w0 = control.initial_windows(problem, 1.5 * x_design)
    return problem, utilities, pay, w0


def run_all_schemes(backend, problem, utilities, pay, w0):
    t0 = time.perf_counter()
    out = {}
    for scheme in control.SCHEMES:
        res = control.run_to_convergence(
            scheme, w0, problem, utilities, tol=1e-8, max_iter=15_000,
            pay_target=pay, backend=backend,
        )
        out[scheme] = res
    return time.perf_counter() - t0, out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=800)
    parser.add_argument("--users", type=int, default=4)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    problem, utilities, pay, w0 = build_workload(args.size, args.users, args.seed)
    print(f"network size {args.size}, {args.users} users, seed {args.seed}")
    print(f"active backend at import: {_kernels.backend_name()}")

    backends = [("python", reference)]
    if _kernels.compiled is not None:
        backends.append(("compiled", _kernels.compiled))
    else:
        print("compiled kernel not available; timing the fallback only")

    times = {}
    results = {}
    for name, backend in backends:
        best = np.inf
        for _ in range(args.repeat):
            elapsed, out = run_all_schemes(backend, problem, utilities, pay, w0)
            best = min(best, elapsed)
            results[name] = out
        times[name] = best
        iters = {s: r.iterations for s, r in results[name].items()}
        print(f"{name:9s} best of {args.repeat}: {best:8.3f} s  iterations {iters}")

    if len(backends) == 2:
        speedup = times["python"] / times["compiled"]
        worst = 0.0
        for scheme in control.SCHEMES:
            a = results["python"][scheme].w_star
            b = results["compiled"][scheme].w_star
            worst = max(worst, float(np.max(np.abs(a - b))))
        print(f"speedup: {speedup:.1f}x, worst window disagreement {worst:.2e}")


if __name__ == "__main__":
    main()
