"""Shared setup for the experiment scripts: reference potential and CSV output."""

import argparse
import csv
import os

from mkvlab.measure import Grid
from mkvlab.potential import make_quartic


def reference(n=400, j=1.5, half_width=4.0):
    return make_quartic(0.25, -0.5, j, half_width), Grid(half_width, n)


def parser(doc, out):
    ap = argparse.ArgumentParser(description=doc.strip().splitlines()[0])
    ap.add_argument("--out", default=out, help="output CSV path")
    ap.add_argument("--threads", type=int, default=1)
    return ap


def write_rows(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{x:.17g}" if isinstance(x, float) else x for x in r])
    print(f"wrote {path}")
