"""Fitting a single truss to points on, and off, a circle.

A truss A-B whose ground pivot A is free acts as a circle fitter: B must
pass through every target, so the best A is the point whose distances to
the targets vary least.  With three targets the fit is exact and A lands on
their circumcenter; with five scattered targets it settles on the
least-spread center.

    python3 demos/circle_fit.py [out_dir]
"""
import sys
from pathlib import Path

import numpy as np

from coordsynth import bundled_problem
from coordsynth.render import mechanism_svg, trace_svg
from coordsynth.synthesis import optimize


def circumcenter(a, b, c):
    A = 2.0 * np.array([b - a, c - a])
    return np.linalg.solve(A, [b @ b - a @ a, c @ c - a @ a])


def main(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    for name in ("truss_circle3", "truss_circle5"):
        p = bundled_problem(name)
        targets = np.array([[q.pins[0].x, q.pins[0].y] for q in p.points])
        r = optimize(p)
        a = r.x0.xy[0]
        d = np.hypot(*(targets - a).T)
        print(f"{name}: F {r.initial_fitness:.4g} -> {r.fitness:.3e} in {r.iterations} iterations ({r.termination})")
        print(f"  pivot A = ({a[0]:.8f}, {a[1]:.8f}), distances to targets {np.round(d, 6)}")
        if len(targets) == 3:
            c = circumcenter(*targets)
            print(f"  circumcenter ({c[0]:.8f}, {c[1]:.8f}), offset {np.hypot(*(a - c)):.1e}")
        layers = [("deformed", s.xy) for s in r.states[:1]] + [("initial", p.x0.xy)]
        (out / f"{name}.svg").write_text(mechanism_svg(p.mechanism, layers, targets, title=name))
        (out / f"{name}_trace.svg").write_text(trace_svg([("fitness", r.trace.fitness())], title=name))
    print(f"drawings in {out}")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out"))
