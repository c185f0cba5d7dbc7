"""Write the four-chart torus fixture (degree-k U1 bundle) as TOML.

Chart (a, b) is centred at (a/2, b/2) with local box (-0.4, 0.4)^2; a global
point X has local coordinates x = X - centre + n for integer shifts n.
"""
import argparse
import itertools
import math

import tomli_w

HALF = 0.4


def chart_name(a, b):
    return f"c{a}{b}"


def shift_label(n):
    return "_".join({-1: "m1", 0: "0", 1: "p1"}[v] for v in n)


def build(k: int) -> dict:
    centres = {chart_name(a, b): (a / 2, b / 2) for a in (0, 1) for b in (0, 1)}
    names = sorted(centres)
    charts = [{"name": c, "lower": [-HALF, -HALF], "upper": [HALF, HALF]} for c in names]
    overlaps, transitions = [], {}
    for i, src in enumerate(names):
        for tgt in names[i + 1:]:
            ca, cb = centres[src], centres[tgt]
            for n in itertools.product((-1, 0, 1), repeat=2):
                off = [ca[j] - cb[j] + n[j] for j in range(2)]
                if any(abs(o) >= 2 * HALF for o in off):
                    continue
                oid = f"{src}_{tgt}_{shift_label(n)}"
                overlaps.append({
                    "id": oid, "source": src, "target": tgt,
                    "forward": [f"x0 + {off[0]!r}", f"x1 + {off[1]!r}"],
                    "backward": [f"x0 - {off[0]!r}", f"x1 - {off[1]!r}"],
                })
                phase = f"{2 * math.pi * k * n[0]!r}*(x1 + {ca[1]!r})"
                transitions[oid] = (f"[[cos({phase}), -sin({phase})], "
                                    f"[sin({phase}), cos({phase})]]")
    forms = {}
    for c in names:
        a = centres[c][0]
        coef = f"{2 * math.pi * k!r}*(x0 + {a!r})"
        forms[c] = ["[[0, 0], [0, 0]]", f"[[0, -{coef}], [{coef}, 0]]"]
    return {
        "schema_version": 1,
        "name": f"torus_k{k}",
        "atlas": {"dim": 2, "charts": charts, "overlaps": overlaps},
        "connection": {"group": "U1", "forms": forms, "transitions": transitions},
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--degree", type=int, default=1)
    ap.add_argument("out")
    args = ap.parse_args()
    header = (f"# Generated by tools/make_torus.py --degree {args.degree}.\n"
              "# Degree-k U1 bundle on the torus R^2/Z^2, four charts, A = 2 pi k X0 dX1 e.\n")
    with open(args.out, "w") as fh:
        fh.write(header + tomli_w.dumps(build(args.degree)))


if __name__ == "__main__":
    main()
