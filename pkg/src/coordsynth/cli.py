"""Command-line front end.

Subcommands::

    run      optimize a problem and write result.json, trace.csv and snapshots
    compare  run both formulations and write compare.csv and compare.svg
    check    compare analytic derivatives with finite differences
    render   redraw snapshots for an existing result (or the initial guess)

``--problem`` takes a path or the name of a bundled problem.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import BUNDLED, resolve_problem
from .checks import check_coordinate_gradient, check_dimension_gradient, element_hessian_errors
from .model import CoordSet, ProblemError, SynthesisProblem, lengths
from .position import InnerSolveError, build_restrictions, minimum_distance_pose
from .render import mechanism_svg, trace_svg
from .synthesis import (SynthesisResult, evaluate_fitness_coords, evaluate_fitness_dims,
                        optimize)

logger = logging.getLogger("coordsynth")

EXIT_OK, EXIT_ERROR, EXIT_MAX_ITER = 0, 1, 2
CHECK_TOL = 1e-4
MAX_ITER_LIMIT = 10**6
FORMULATIONS = {"coords": "coordinates", "dims": "dimensions"}


class UsageError(Exception):
    pass


def _g(v: float) -> str:
    return "%.9g" % v


# -- configuration -------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", required=True,
                        help=f"problem file, or one of: {', '.join(BUNDLED)}")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--max-iter", type=int, default=None, help="outer iteration limit")
    common.add_argument("--gtol", type=float, default=None, help="gradient tolerance (relative to 1 + F)")
    common.add_argument("--formulation", choices=sorted(FORMULATIONS), default=None,
                        help="override the problem's formulation")
    common.add_argument("--seed", type=int, default=0, help="seed for the random perturbations of `check`")
    common.add_argument("--quiet", action="store_true", help="only print errors")

    p = argparse.ArgumentParser(prog="coordsynth", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="optimize a problem")
    sub.add_parser("compare", parents=[common], help="coordinate vs dimension formulation")
    chk = sub.add_parser("check", parents=[common], help="finite-difference derivative check")
    chk.add_argument("--samples", type=int, default=5, help="number of random perturbations (default: 5)")
    sub.add_parser("render", parents=[common], help="draw snapshots of a result")
    return p


def _load(args) -> SynthesisProblem:
    if args.max_iter is not None and not 1 <= args.max_iter <= MAX_ITER_LIMIT:
        raise UsageError(f"--max-iter must lie in [1, {MAX_ITER_LIMIT}]")
    if args.gtol is not None and not args.gtol > 0:
        raise UsageError("--gtol must be positive")
    problem = resolve_problem(args.problem)
    if args.formulation:
        problem = problem.with_options(formulation=FORMULATIONS[args.formulation])
    return problem


def _say(args, msg: str):
    if not args.quiet:
        print(msg)


# -- outputs -------------------------------------------------------------------

def _final_geometry(problem: SynthesisProblem, result: SynthesisResult):
    """Undeformed lengths and the coordinates holding the ground pivots."""
    if result.formulation == "coordinates":
        return lengths(problem.mechanism, result.x0), result.x0.xy
    return np.asarray(result.dimensions, dtype=float), result.assembly.xy


def write_snapshots(problem: SynthesisProblem, L, ref_xy, states, out: Path) -> list[float | None]:
    """One SVG per precision point: deformed state and rigid minimum-distance pose.

    Returns the tracer-to-target distance of each pose (None without a tracer).
    """
    snap = out / "snapshots"
    snap.mkdir(parents=True, exist_ok=True)
    mech = problem.mechanism
    distances = []
    for point, st in zip(problem.points, states):
        layers = [("deformed", st.xy)]
        targets = np.array([[q.x, q.y] for q in point.pins]).reshape(-1, 2)
        dist = None
        if point.pins:
            restr = build_restrictions(problem, ref_xy, point).without_targets()
            pose, dist = minimum_distance_pose(mech, L, restr, point.pins[0].node, targets[0], st.xy)
            layers.append(("pose", pose.xy))
        distances.append(dist)
        title = f"precision point {point.index}: energy {_g(st.energy)}"
        (snap / f"point_{point.index}.svg").write_text(mechanism_svg(mech, layers, targets, title))
    return distances


def _result_json(problem, result: SynthesisResult, distances, wall_time, seed) -> dict:
    mech = problem.mechanism

    def coords(cs: CoordSet):
        return [{"id": n.id, "label": n.label, "x": float(x), "y": float(y)}
                for n, (x, y) in zip(mech.nodes, cs.xy)]

    out = {"problem": problem.name, "formulation": result.formulation, "termination": result.termination,
           "fitness": result.fitness, "initial_fitness": result.initial_fitness,
           "iterations": result.iterations, "wall_time": wall_time, "seed": seed}
    if result.formulation == "coordinates":
        out["coordinates"] = coords(result.x0)
    else:
        out["dimensions"] = [{"truss": t.id, "length": float(v)} for t, v in zip(mech.trusses, result.dimensions)]
        out["assembly"] = coords(result.assembly)
    out["points"] = [{"index": p.index, "energy": s.energy, "converged": s.converged, "min_distance": d}
                     for p, s, d in zip(problem.points, result.states, distances)]
    out["config_changes"] = sum(r.config_changes for r in result.trace.records)
    return out


def _exit_for(termination: str) -> int:
    return EXIT_MAX_ITER if termination == "max-iter" else EXIT_OK


# -- subcommands ---------------------------------------------------------------

def cmd_run(args) -> int:
    problem = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = optimize(problem, max_iter=args.max_iter, gtol=args.gtol)
    wall = time.perf_counter() - t0
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    (out / "trace.csv").write_text(result.trace.to_csv())
    L, ref = _final_geometry(problem, result)
    distances = write_snapshots(problem, L, ref, result.states, out)
    (out / "result.json").write_text(json.dumps(_result_json(problem, result, distances, wall, args.seed),
                                                indent=2) + "\n")
    _say(args, f"{problem.name or args.problem}: {result.formulation} formulation, "
               f"fitness {_g(result.initial_fitness)} -> {_g(result.fitness)} "
               f"in {result.iterations} iterations ({result.termination}, {wall:.2f} s)")
    return _exit_for(result.termination)


def cmd_compare(args) -> int:
    problem = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    for name in ("coordinates", "dimensions"):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            results[name] = optimize(problem.with_options(formulation=name), max_iter=args.max_iter, gtol=args.gtol)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    fc, fd = results["coordinates"].trace.fitness(), results["dimensions"].trace.fitness()
    rows = ["iteration,F_coords,F_dims"]
    for i in range(max(fc.size, fd.size)):
        a = _g(fc[i]) if i < fc.size else ""
        b = _g(fd[i]) if i < fd.size else ""
        rows.append(f"{i},{a},{b}")
    (out / "compare.csv").write_text("\n".join(rows) + "\n")
    (out / "compare.svg").write_text(trace_svg([("coordinates", fc), ("dimensions", fd)],
                                               title=f"{problem.name or args.problem}: fitness"))
    for name, r in results.items():
        _say(args, f"{name:>11}: fitness {_g(r.initial_fitness)} -> {_g(r.fitness)} "
                   f"in {r.iterations} iterations ({r.termination})")
    return max(_exit_for(r.termination) for r in results.values())


def cmd_check(args) -> int:
    problem = _load(args)
    rng = np.random.default_rng(args.seed)
    dims = problem.options.formulation == "dimensions"
    size = problem.mechanism.n_trusses if dims else int(problem.design_mask().sum())
    if size == 0:
        _say(args, "design space is empty: nothing to differentiate (vacuous pass)")
        return EXIT_OK

    xy0 = problem.x0.xy
    scale = 0.01 * max(float(np.ptp(xy0, axis=0).max()), 1.0)
    mask = problem.design_mask().reshape(-1, 2)
    worst, done = 0.0, 0
    for s in range(args.samples + 1):
        try:
            if dims:
                L = lengths(problem.mechanism, problem.x0)
                if s:
                    L = L * (1.0 + 0.01 * rng.standard_normal(L.size))
                res = check_dimension_gradient(problem, L)
            else:
                xy = xy0 + (scale * rng.standard_normal(xy0.shape) * mask if s else 0.0)
                res = check_coordinate_gradient(problem, xy)
        except (InnerSolveError, ProblemError) as exc:
            _say(args, f"sample {s}: skipped ({exc})")
            continue
        done += 1
        worst = max(worst, res.error)
        _say(args, f"sample {s}: gradient max relative error {res.error:.3e}")
    if done == 0:
        print("error: no sample could be evaluated", file=sys.stderr)
        return EXIT_ERROR
    e = np.max([element_hessian_errors(rng) for _ in range(20)], axis=0)
    _say(args, f"element Hessians max relative error: outer {e[0]:.3e}, inner {e[1]:.3e}, boundary {e[2]:.3e}")
    ok = worst < CHECK_TOL
    _say(args, f"gradient check {'passed' if ok else 'FAILED'}: max relative error {worst:.3e} "
               f"(limit {CHECK_TOL:g})")
    return EXIT_OK if ok else EXIT_ERROR


def cmd_render(args) -> int:
    problem = _load(args)
    out = Path(args.out)
    mech = problem.mechanism
    path = out / "result.json"
    if path.exists():
        data = json.loads(path.read_text())
        if "dimensions" in data:
            L = np.array([d["length"] for d in data["dimensions"]], dtype=float)
            ref = CoordSet.from_mapping(mech, {c["id"]: (c["x"], c["y"]) for c in data["assembly"]})
            _, states = evaluate_fitness_dims(problem, L, ref)
        else:
            ref = CoordSet.from_mapping(mech, {c["id"]: (c["x"], c["y"]) for c in data["coordinates"]})
            L = lengths(mech, ref)
            _, states = evaluate_fitness_coords(problem, ref)
    else:
        ref = problem.x0
        L = lengths(mech, ref)
        _, states = evaluate_fitness_coords(problem, ref)
    write_snapshots(problem, L, ref.xy, states, out)
    trace = out / "trace.csv"
    if trace.exists():
        rows = [line.split(",") for line in trace.read_text().splitlines()[1:]]
        f = [float(r[1]) for r in rows if r[4] == "1"]
        (out / "trace.svg").write_text(trace_svg([("fitness", f)], title=problem.name or args.problem))
    _say(args, f"wrote {len(problem.points)} snapshots to {out / 'snapshots'}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "check": cmd_check, "render": cmd_render}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ProblemError, UsageError, InnerSolveError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
