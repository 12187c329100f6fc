"""Command-line entry points and all file emission.

Subcommands: ``generate`` (evolution only), ``simulate`` (single scheme),
``compare`` (full harness), ``stability`` (report on a saved state) and
``fitdist`` (degree-distribution exponent). Exit codes: 0 success, 1
configuration error, 2 non-convergence in a requested cell, 3 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import control, graph, harness, routing
from .errors import ConfigError, EmissionError

_CONFIG_KEYS = {
    "seed": ("seed", int),
    "sizes": ("sizes", lambda v: tuple(int(s) for s in v)),
    "users": ("users", int),
    "n0": ("n0", int),
    "M": ("M", int),
    "beta": ("beta", float),
    "gamma": ("gamma", float),
    "seed_topology": ("seed_topology", str),
    "schemes": ("schemes", lambda v: tuple(str(s) for s in v)),
    "gain": ("gain", float),
    "step_size": ("step_size", float),
    "tol": ("tol", float),
    "dwell": ("dwell", int),
    "max_iter": ("max_iter", int),
    "w_min": ("w_min", float),
    "sample_every": ("sample_every", int),
    "include_transmission_delay": ("include_transmission_delay", bool),
    "fluid_tol": ("fluid_tol", float),
    "fluid_max_iter": ("fluid_max_iter", int),
    "utility_mode": ("utility_mode", str),
    "utility_a": ("utility_a", float),
    "utility_b": ("utility_b", float),
    "utility_jitter": ("utility_jitter", float),
    "pay_mode": ("pay_mode", str),
    "pay_value": ("pay_value", float),
    "pay_jitter": ("pay_jitter", float),
    "design_cap": ("design_cap", float),
    "initial_rate_factor": ("initial_rate_factor", float),
    "initial_windows": (
        "initial_windows",
        lambda v: tuple(float(x) for x in v) if v is not None else None,
    ),
    "power_law_k_min": ("power_law_k_min", int),
}


def parse_config(path_or_dict):
    """Scenario from a JSON file (or an already-parsed dict).

    Missing fields take the documented defaults; a missing seed is generated
    from OS entropy and echoed in every output so the run can be replayed.
    """
    if isinstance(path_or_dict, dict):
        raw = path_or_dict
    else:
        try:
            with open(path_or_dict) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(str(exc), field="config")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON: {exc}", field="config")
    if not isinstance(raw, dict):
        raise ConfigError("top-level config must be an object", field="config")
    kwargs = {}
    for key, value in raw.items():
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown key {key!r}", field=key)
        name, conv = _CONFIG_KEYS[key]
        try:
            kwargs[name] = conv(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value {value!r} ({exc})", field=key)
    if "seed" not in kwargs or kwargs["seed"] is None:
        kwargs["seed"] = int.from_bytes(os.urandom(4), "little")
    try:
        return harness.Scenario(**kwargs)
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(str(exc), field="config")


def _table1_csv(report):
    """Initial and converged windows per user and scheme at the last size."""
    size = report.scenario.sizes[-1]
    schemes = [s for s in report.scenario.schemes]
    lines = ["user,w0," + ",".join(f"wstar_{s}" for s in schemes)]
    n_users = len(report.users)
    cells = {s: report.cell(size, s) for s in schemes}
    for r in range(n_users):
        w0 = cells[schemes[0]].w0[r]
        vals = []
        for s in schemes:
            ws = cells[s].w_star
            vals.append(f"{ws[r]:.6g}" if len(ws) > r else "")
        lines.append(f"{r},{w0:.6g}," + ",".join(vals))
    return "\n".join(lines) + "\n"


def _table3_csv(report):
    """Converged window per user, scheme and network size."""
    lines = ["size,scheme,user,wstar,converged"]
    for cell in report.cells:
        for r, ws in enumerate(cell.w_star):
            lines.append(f"{cell.size},{cell.scheme},{r},{ws:.6g},{int(cell.converged)}")
    return "\n".join(lines) + "\n"


def _table4_csv(report):
    """Wall-clock seconds per size and scheme."""
    lines = ["size,scheme,time_s,iterations,converged"]
    for cell in report.cells:
        lines.append(
            f"{cell.size},{cell.scheme},{cell.time_s:.6g},"
            f"{cell.iterations},{int(cell.converged)}"
        )
    return "\n".join(lines) + "\n"


def emit_outputs(report, outdir, snapshots=None):
    """Write report.json, the table CSVs and trajectory CSVs; return a manifest.

    The manifest carries a sha256 per file plus a timing-independent
    checksum of the report so reruns with the same seed can be compared.
    Partial files are removed when any write fails. Snapshots default to
    the evolved networks stored on the report.
    """
    if snapshots is None:
        snapshots = {
            f"N{size}": snap for size, snap in getattr(report, "snapshots", {}).items()
        }
    written = []
    manifest = {"seed": report.scenario.seed, "files": {}}

    def _write(relpath, text):
        path = os.path.join(outdir, relpath)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "w") as fh:
            fh.write(text)
        written.append(path)
        manifest["files"][relpath] = {
            "bytes": len(text.encode()),
            "sha256": hashlib.sha256(text.encode()).hexdigest(),
        }

    try:
        os.makedirs(outdir, exist_ok=True)
        report_dict = report.to_dict(include_trajectories=False)
        _write("report.json", json.dumps(report_dict, indent=2, sort_keys=True))
        stripped = harness.strip_timing(report_dict)
        manifest["content_sha256"] = hashlib.sha256(
            json.dumps(stripped, sort_keys=True).encode()
        ).hexdigest()
        if report.cells:
            _write("table1.csv", _table1_csv(report))
            _write("table3.csv", _table3_csv(report))
            _write("table4.csv", _table4_csv(report))
            for cell in report.cells:
                if cell.trajectory is not None:
                    _write(
                        os.path.join("trajectories", f"{cell.size}_{cell.scheme}.csv"),
                        cell.trajectory.to_csv(),
                    )
        for name, snap in (snapshots or {}).items():
            _write(
                os.path.join("snapshots", f"{name}.json"),
                snap.to_json(indent=2, sort_keys=True),
            )
        _write("manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
    except OSError as exc:
        for path in written:
            try:
                os.remove(path)
            except OSError:
                pass
        raise EmissionError(f"failed to write outputs: {exc}")
    return manifest


def _apply_overrides(scenario, args):
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "scheme", None):
        changes["schemes"] = (args.scheme,)
    if args.gain is not None:
        changes["gain"] = args.gain
    if args.tol is not None:
        changes["tol"] = args.tol
    if args.max_iter is not None:
        changes["max_iter"] = args.max_iter
    if not changes:
        return scenario
    from dataclasses import replace

    return replace(scenario, **changes)


def _load_scenario(args):
    if args.config:
        scenario = parse_config(args.config)
    else:
        seed = args.seed if args.seed is not None else int.from_bytes(os.urandom(4), "little")
        scenario = harness.Scenario(seed=seed)
    return _apply_overrides(scenario, args)


def _cmd_generate(args):
    scenario = _load_scenario(args)
    params = scenario.evolution_params()
    rng = np.random.default_rng(np.random.SeedSequence(scenario.seed).spawn(1)[0])
    snapshot = graph.new_seed_network(scenario.n0, scenario.seed_topology, rng)
    snaps = {}
    for size in scenario.sizes:
        snapshot, _ = graph.evolve(snapshot, params, rng, size - snapshot.n_nodes)
        snaps[f"N{size}"] = snapshot
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    for name, snap in snaps.items():
        with open(os.path.join(outdir, f"{name}.json"), "w") as fh:
            fh.write(snap.to_json(indent=2, sort_keys=True))
    print(f"wrote {len(snaps)} snapshot(s) to {outdir} (seed {scenario.seed})")
    return 0


def _cmd_compare(args, single_scheme=False):
    scenario = _load_scenario(args)
    report = harness.run_scenario(scenario)
    manifest = emit_outputs(report, args.out)
    ratios = harness.speedup_summary(report)
    if ratios:
        pretty = ", ".join(f"{s}: {v:.2f}x" for s, v in sorted(ratios.items()))
        print(f"mean time vs proposed: {pretty}")
    bad = [c for c in report.cells if not c.converged]
    print(
        f"{len(report.cells)} cells, {len(report.cells) - len(bad)} converged, "
        f"backend={report.backend}, seed={report.scenario.seed}, out={args.out}"
    )
    return 2 if bad else 0


def _cmd_stability(args):
    with open(args.state) as fh:
        state = json.load(fh)
    snapshot = graph.NetworkSnapshot.from_json_dict(state["snapshot"])
    routes = [
        routing.shortest_route(snapshot, int(u["source"]), int(u["dest"]), user=i)
        for i, u in enumerate(state["users"])
    ]
    windows = np.asarray(state["windows"], dtype=np.float64)
    utilities = [
        control.UtilityParams(a=float(u.get("a", 1.0)), b=float(u.get("b", 0.5)))
        for u in state["users"]
    ]
    from .reporting import build_stability_report

    report = build_stability_report(
        windows,
        routes,
        snapshot,
        utilities,
        include_transmission_delay=state.get("include_transmission_delay", True),
    )
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "stability.json")
    with open(path, "w") as fh:
        fh.write(report.to_json(include_matrices=args.dump_matrices, indent=2))
    print(
        f"V={report.v:.6g} positive_definite={report.positive_definite} "
        f"boundary={report.boundary_flag} -> {path}"
    )
    return 0


def _cmd_fitdist(args):
    with open(args.snapshot) as fh:
        snapshot = graph.NetworkSnapshot.from_json_dict(json.load(fh))
    alpha = graph.fit_power_law_exponent(snapshot, args.k_min)
    print(f"alpha_hat={alpha:.4f} (k_min={args.k_min}, N={snapshot.n_nodes})")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tvcn",
        description="Window-based congestion control on evolving networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="scenario JSON file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--gain", type=float, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--max-iter", dest="max_iter", type=int, default=None)
        p.add_argument("-v", "--verbose", action="count", default=0)

    p_gen = sub.add_parser("generate", help="evolve snapshots only")
    common(p_gen)

    p_sim = sub.add_parser("simulate", help="run a single scheme")
    common(p_sim)
    p_sim.add_argument("--scheme", choices=control.SCHEMES, default="proposed")

    p_cmp = sub.add_parser("compare", help="run every scheme and emit tables")
    common(p_cmp)

    p_stab = sub.add_parser("stability", help="stability report on a saved state")
    common(p_stab)
    p_stab.add_argument("--state", required=True, help="state JSON file")
    p_stab.add_argument("--dump-matrices", action="store_true")

    p_fit = sub.add_parser("fitdist", help="degree-distribution exponent")
    common(p_fit)
    p_fit.add_argument("--snapshot", required=True, help="snapshot JSON file")
    p_fit.add_argument("--k-min", dest="k_min", type=int, default=3)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command == "simulate":
            return _cmd_compare(args, single_scheme=True)
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "stability":
            return _cmd_stability(args)
        if args.command == "fitdist":
            return _cmd_fitdist(args)
        parser.error(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except EmissionError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
