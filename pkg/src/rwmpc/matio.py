"""Plain-text matrix container format used for models, designs and QP export.

File layout (whitespace separated, ``#`` starts a comment line)::

    rwmpc-mat 1
    matrix <name> <rows> <cols>
    <row 0: cols values>
    ...
    matrix <name> <rows> <cols>
    ...

Values are written with 17 significant digits, which round-trips IEEE
double precision exactly.  Scalars are stored as 1x1 matrices.
"""

from __future__ import annotations

import re

import numpy as np

_MAGIC = "rwmpc-mat 1"
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")


class MatFormatError(ValueError):
    """Raised when a matrix file does not follow the container format."""


def save_matrices(path, matrices: dict[str, np.ndarray]) -> None:
    """Write named matrices to ``path`` in the plain-text container format."""
    lines = [_MAGIC]
    for name, value in matrices.items():
        if not _NAME_RE.match(name):
            raise MatFormatError(f"invalid matrix name {name!r}")
        mat = np.atleast_2d(np.asarray(value, dtype=float))
        if mat.ndim != 2:
            raise MatFormatError(f"{name}: only 2-D matrices are supported")
        lines.append(f"matrix {name} {mat.shape[0]} {mat.shape[1]}")
        for row in mat:
            lines.append(" ".join(f"{v:.17g}" for v in row))
    lines.append("")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines))


def load_matrices(path) -> dict[str, np.ndarray]:
    """Read a file written by :func:`save_matrices`; returns name -> array."""
    with open(path, "r", encoding="ascii") as fh:
        raw = fh.read().splitlines()
    lines = [ln for ln in (ln.strip() for ln in raw) if ln and not ln.startswith("#")]
    if not lines or lines[0] != _MAGIC:
        raise MatFormatError(f"{path}: missing '{_MAGIC}' header")
    out: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        head = lines[i].split()
        if len(head) != 4 or head[0] != "matrix":
            raise MatFormatError(f"{path}: bad matrix header {lines[i]!r}")
        name, rows, cols = head[1], int(head[2]), int(head[3])
        if not _NAME_RE.match(name):
            raise MatFormatError(f"{path}: invalid matrix name {name!r}")
        if name in out:
            raise MatFormatError(f"{path}: duplicate matrix {name!r}")
        if rows < 0 or cols < 0:
            raise MatFormatError(f"{path}: negative dimensions for {name!r}")
        i += 1
        data = np.empty((rows, cols))
        for r in range(rows):
            if i >= len(lines):
                raise MatFormatError(f"{path}: truncated data for {name!r}")
            vals = lines[i].split()
            if len(vals) != cols:
                raise MatFormatError(
                    f"{path}: row {r} of {name!r} has {len(vals)} values, expected {cols}"
                )
            data[r] = [float(v) for v in vals]
            i += 1
        out[name] = data
    return out


def save_scalar_and_matrices(path, scalars: dict[str, float],
                             matrices: dict[str, np.ndarray]) -> None:
    """Convenience wrapper storing scalars as 1x1 blocks next to matrices."""
    combined: dict[str, np.ndarray] = {}
    for name, value in scalars.items():
        combined[name] = np.array([[float(value)]])
    combined.update(matrices)
    save_matrices(path, combined)
