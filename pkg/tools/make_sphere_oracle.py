"""Reference holonomies for the sphere latitude fixtures.

Integrates g' = -A(gamma') g with classical RK4 and a fixed, very small step,
using a hand-written connection and the uniform parameterization
gamma(t) = r (cos 2 pi t, sin 2 pi t).  Nothing from the package is imported,
so the numbers are an independent oracle.
"""
import argparse
import json
import math

import numpy as np

E = np.array([[0.0, -1.0], [1.0, 0.0]])


def field(t, radii):
    # A = -2/(1+r^2)(x0 dx1 - x1 dx0) e, and x0 dx1 - x1 dx0 = 2 pi r^2 dt on the circle
    c = -2.0 / (1.0 + radii ** 2) * 2.0 * math.pi * radii ** 2
    return c[:, None, None] * E


def integrate(radii, steps):
    g = np.broadcast_to(np.eye(2), (len(radii), 2, 2)).copy()
    h = 1.0 / steps
    a = field(0.0, radii)  # constant along the uniform parameterization
    for _ in range(steps):
        k1 = -a @ g
        k2 = -a @ (g + 0.5 * h * k1)
        k3 = -a @ (g + 0.5 * h * k2)
        k4 = -a @ (g + h * k3)
        g = g + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return g


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--steps", type=int, default=1_000_000)
    parser.add_argument("--out", default="tests/data/sphere_oracle.json")
    args = parser.parse_args()
    thetas = [math.pi / 6, math.pi / 3, math.pi / 2]
    radii = np.array([math.tan(t / 2) for t in thetas])
    g = integrate(radii, args.steps)
    rows = []
    for th, r, m in zip(thetas, radii, g):
        rows.append({"theta": th, "radius": float(r), "angle": math.atan2(m[1, 0], m[0, 0]),
                     "matrix": m.tolist()})
    with open(args.out, "w") as fh:
        json.dump({"steps": args.steps, "loops": rows}, fh, indent=2, sort_keys=True)
        fh.write("\n")


if __name__ == "__main__":
    main()
