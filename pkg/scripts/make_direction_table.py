#!/usr/bin/env python3
"""Regenerate the packaged Sobol direction-number table.

Pulls the Joe & Kuo "new-joe-kuo-6" primitive polynomials and initial
direction numbers out of scipy's embedded copy and writes the first 49
rows (dimensions 2..50) in the standard text layout, one line per
dimension: ``d s a m_1 .. m_s``.  Dimension 1 is the van der Corput
sequence and needs no table entry.

The output is committed at ``src/uqbench/data/joe_kuo_d6_50.txt``; rerun
this only when bumping the supported dimension count.
"""

import pathlib
import sys

import numpy as np
import scipy.stats._sobol


MAX_DIM = 50


def main() -> int:
    poly = scipy.stats._sobol.get_poly_vinit("poly", np.uint32)
    vinit = scipy.stats._sobol.get_poly_vinit("vinit", np.uint32)

    lines = [
        "# Sobol direction numbers, dimensions 2..%d." % MAX_DIM,
        "# Source: S. Joe and F. Y. Kuo, new-joe-kuo-6 table "
        "(order-6 search criterion).",
        "# Columns: d s a m_1..m_s  (primitive polynomial degree s, "
        "encoded middle coefficients a, initial direction numbers m_i).",
        "d s a m_i",
    ]
    for d in range(2, MAX_DIM + 1):
        p = int(poly[d - 1])
        s = p.bit_length() - 1
        a = (p ^ (1 << s) ^ 1) >> 1
        m = [str(int(x)) for x in vinit[d - 1][:s]]
        lines.append(f"{d} {s} {a} {' '.join(m)}")

    out = (
        pathlib.Path(__file__).resolve().parent.parent
        / "src" / "uqbench" / "data" / "joe_kuo_d6_50.txt"
    )
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {out} ({MAX_DIM - 1} dimensions)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
