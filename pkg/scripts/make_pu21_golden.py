"""Generate tests/data/pu21_golden.csv from the reference PU21 code.

Usage: python scripts/make_pu21_golden.py PATH/TO/pycvvdp/utils.py

Only the ``PU`` class is lifted out of the reference module (via ``ast``), so
the heavy torch import at its top is never executed. The script also prints
``v_min`` for every variant and checks the coefficients shipped in
``src/nrhdr/data/pu21.ini`` against the reference.
"""

import ast
import configparser
import csv
import functools
import sys
from pathlib import Path

import numpy as np

VARIANTS = ("banding", "banding_glare", "peaks", "peaks_glare")
ROOT = Path(__file__).resolve().parents[1]


def load_reference(path):
    tree = ast.parse(Path(path).read_text())
    cls = next(n for n in tree.body if isinstance(n, ast.ClassDef) and n.name == "PU")
    ns = {"cache": functools.cache, "np": np}
    exec(compile(ast.Module([cls], type_ignores=[]), str(path), "exec"), ns)
    return ns["PU"]


def probe_luminances():
    # 60 log-spaced probes across and beyond the valid range plus fixed anchors
    lum = list(np.logspace(-4, 5, 60))
    lum += [0.005, 1.0, 100.0, 10000.0]
    return np.array(sorted(lum))


def main(argv):
    if len(argv) != 2:
        sys.exit(__doc__)
    PU = load_reference(argv[1])
    lum = probe_luminances()
    cols = {v: PU(type=v).encode(lum.copy()) for v in VARIANTS}

    ini = configparser.ConfigParser()
    ini.read(ROOT / "src" / "nrhdr" / "data" / "pu21.ini")
    for v in VARIANTS:
        ref = PU(type=v)
        shipped = [float(x) for x in ini[v]["p"].split(",")]
        if shipped != list(ref.p):
            sys.exit(f"pu21.ini coefficients for {v} differ from the reference")
        print(f"{v}: v_min = {ref.encode(np.array([ref.L_min]))[0]!r}")

    out = ROOT / "tests" / "data" / "pu21_golden.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["luminance", *VARIANTS])
        for i, y in enumerate(lum):
            w.writerow([repr(float(y))] + [repr(float(cols[v][i])) for v in VARIANTS])
    print(f"wrote {len(lum)} rows to {out}")


if __name__ == "__main__":
    main(sys.argv)
