"""Plain-text matrix files.

::

    F C
    <F rows of C numbers>
    clips: i0 i1 ...      (optional; first row index of each clip)
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .exceptions import ConfigError, CorruptionError

__all__ = ["write_matrix", "read_matrix", "format_float"]


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_matrix(path, matrix, clips=None) -> None:
    m = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    lines = [f"{m.shape[0]} {m.shape[1]}"]
    lines += [" ".join(format_float(x) for x in row) for row in m]
    if clips is not None:
        lines.append("clips: " + " ".join(str(int(c)) for c in clips))
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path) -> tuple[np.ndarray, list[int] | None]:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise CorruptionError(f"{path}: empty file")
    try:
        f, c = (int(x) for x in lines[0].split())
    except ValueError as exc:
        raise CorruptionError(f"{path}: bad header {lines[0]!r}") from exc
    rows = lines[1 : 1 + f]
    if len(rows) != f:
        raise CorruptionError(f"{path}: expected {f} rows, found {len(rows)}")
    try:
        m = np.array([[float(x) for x in row.split()] for row in rows], dtype=np.float64).reshape(f, c)
    except ValueError as exc:
        raise CorruptionError(f"{path}: malformed row") from exc
    clips = None
    rest = lines[1 + f :]
    if rest:
        if len(rest) > 1 or not rest[0].startswith("clips:"):
            raise CorruptionError(f"{path}: unexpected trailing content")
        try:
            clips = [int(x) for x in rest[0][len("clips:") :].split()]
        except ValueError as exc:
            raise ConfigError(f"{path}: bad clips line") from exc
    return m, clips
