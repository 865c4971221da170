"""Path CSV files: header ``idx,x,y,z``, one point per row."""

from __future__ import annotations

import csv

import numpy as np

from .cost import GridPath, PathError

PATH_COLUMNS = ("idx", "x", "y", "z")


def write_path_csv(path: GridPath, out) -> None:
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PATH_COLUMNS)
        for i, (x, y, z) in enumerate(path.points.tolist()):
            w.writerow([i, repr(x), repr(y), repr(z)])


def read_path_csv(src) -> GridPath:
    with open(src, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(c.strip() for c in rows[0]) != PATH_COLUMNS:
        raise PathError(f"{src}: expected header {','.join(PATH_COLUMNS)}")
    pts = []
    for lineno, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != 4:
            raise PathError(f"{src}:{lineno}: expected 4 fields, got {len(row)}")
        try:
            pts.append([float(v) for v in row[1:]])
        except ValueError:
            raise PathError(f"{src}:{lineno}: non-numeric value") from None
    if not pts:
        raise PathError(f"{src}: no points")
    return GridPath(np.array(pts))
