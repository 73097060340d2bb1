"""Path synthesis of a fourbar coupler point.

Starting from a rough fourbar, the coupler point E should pass through nine
path points.  All ten initial coordinates are design variables, ground
pivots included, so the optimizer is free to move the whole linkage and to
change its assembly configuration.  The run prints the fitness history,
the final linkage and, per path point, how far the rigid linkage can bring
E to its target.

    python3 demos/fourbar.py [out_dir]
"""
import sys
from pathlib import Path

import numpy as np

from coordsynth import bundled_problem
from coordsynth.model import lengths
from coordsynth.position import build_restrictions, minimum_distance_pose
from coordsynth.render import mechanism_svg, trace_svg
from coordsynth.synthesis import evaluate_fitness_coords, optimize


def main(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    p = bundled_problem("fourbar")
    F0, _ = evaluate_fitness_coords(p, p.x0)
    print(f"initial fitness {F0:.6f}")
    r = optimize(p)
    f = r.trace.fitness()
    for i in (0, 1, 2, 5, 10, 20, 50, 100, len(f) - 1):
        if i < len(f):
            print(f"  iteration {i:>3}: F = {f[i]:.6g}")
    print(f"final fitness {r.fitness:.6g} after {r.iterations} iterations ({r.termination})")

    labels = [n.label for n in p.mechanism.nodes]
    for lab, (x, y) in zip(labels, r.x0.xy):
        print(f"  {lab}: ({x: .4f}, {y: .4f})")
    L = lengths(p.mechanism, r.x0)
    print("  lengths:", ", ".join(f"{labels[k]}{labels[l]} {v:.4f}" for (k, l), v in zip(p.mechanism.endpoints(), L)))

    print("rigid linkage, tracer distance to each target:")
    for point, st in zip(p.points, r.states):
        restr = build_restrictions(p, r.x0.xy, point).without_targets()
        target = (point.pins[0].x, point.pins[0].y)
        pose, d = minimum_distance_pose(p.mechanism, L, restr, 4, target, st.xy)
        print(f"  point {point.index}: {d:.4f}")
        (out / f"fourbar_point_{point.index}.svg").write_text(
            mechanism_svg(p.mechanism, [("deformed", st.xy), ("pose", pose.xy)], np.array([target])))
    (out / "fourbar_trace.svg").write_text(trace_svg([("fitness", f)], title="fourbar"))
    print(f"drawings in {out}")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out"))
