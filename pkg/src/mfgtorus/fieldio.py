"""Plain-text field files.

Flow format::

    d N M T c
    <row for slice 0>
    ...
    <row for slice M>

Each row lists the ``N^d`` nodes in row-major order with the ``c``
components of a node adjacent.  Numbers are written with ``repr`` so a
write/read cycle is exact.  A single slice (such as a terminal cost) is
stored with ``M = 0``.  Density files end with a checksum line
``mass m_0 ... m_M`` holding the rectangle-rule mass of every slice; it is
verified on reading.

CSV format: header ``t_index,flat_node_index,component,value``, one line per
entry in the same order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class FieldFormatError(ValueError):
    pass


@dataclass(frozen=True)
class FlowHeader:
    d: int
    N: int
    M: int
    T: float
    c: int

    def line(self) -> str:
        return f"{self.d} {self.N} {self.M} {self.T!r} {self.c}"


def _to_rows(values: np.ndarray, d: int, c: int) -> np.ndarray:
    """``(M+1, [c,] N...)`` to ``(M+1, N^d * c)`` with components fastest."""
    if c == 1:
        return values.reshape(values.shape[0], -1)
    moved = np.moveaxis(values, 1, -1)
    return moved.reshape(values.shape[0], -1)


def _from_rows(rows: np.ndarray, d: int, N: int, c: int) -> np.ndarray:
    n_t = rows.shape[0]
    if c == 1:
        return rows.reshape((n_t,) + (N,) * d)
    return np.moveaxis(rows.reshape((n_t,) + (N,) * d + (c,)), -1, 1)


def _infer(values: np.ndarray, d: int, is_slice: bool) -> tuple[np.ndarray, int]:
    values = np.asarray(values, dtype=float)
    if is_slice:
        values = values[None]
    c = 1 if values.ndim == d + 1 else values.shape[1]
    if values.ndim not in (d + 1, d + 2) or (c != 1 and c != d):
        raise FieldFormatError(f"array of shape {values.shape} is not a flow on T^{d}")
    return values, c


def write_flow(path, values: np.ndarray, d: int, T: float, *, is_slice: bool = False,
               density: bool = False) -> Path:
    """Write a scalar or vector flow (or a single slice) in the flow format.

    With ``density=True`` the per-slice mass checksum line is appended.
    """
    values, c = _infer(values, d, is_slice)
    N = values.shape[-1]
    header = FlowHeader(d, N, values.shape[0] - 1, float(T), c)
    rows = _to_rows(values, d, c)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write(header.line() + "\n")
        for row in rows:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
        if density:
            fh.write("mass " + " ".join(repr(float(m)) for m in _masses(rows, N, d)) + "\n")
    return path


def _masses(rows: np.ndarray, N: int, d: int) -> np.ndarray:
    return rows.sum(axis=1) * float(N) ** -d


def read_flow(path, vector: bool = False) -> tuple[FlowHeader, np.ndarray]:
    """Read a flow file; returns the header and an array ``(M+1, [c,] N...)``.

    In one dimension a vector flow has ``c = 1``; pass ``vector=True`` to
    keep its component axis.
    """
    path = Path(path)
    with path.open() as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise FieldFormatError(f"{path}: empty file")
    parts = lines[0].split()
    if len(parts) != 5:
        raise FieldFormatError(f"{path}:1: header must read 'd N M T c'")
    try:
        header = FlowHeader(int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3]), int(parts[4]))
    except ValueError as exc:
        raise FieldFormatError(f"{path}:1: bad header ({exc})") from None
    width = header.N ** header.d * header.c
    checksum = None
    if lines[-1].startswith("mass"):
        try:
            checksum = np.array([float(m) for m in lines[-1].split()[1:]])
        except ValueError:
            raise FieldFormatError(f"{path}:{len(lines)}: bad mass line") from None
        lines = lines[:-1]
    if len(lines) - 1 != header.M + 1:
        raise FieldFormatError(f"{path}: expected {header.M + 1} rows, found {len(lines) - 1}")
    rows = np.empty((header.M + 1, width))
    for i, ln in enumerate(lines[1:]):
        vals = ln.split()
        if len(vals) != width:
            raise FieldFormatError(f"{path}:{i + 2}: expected {width} values, found {len(vals)}")
        rows[i] = [float(v) for v in vals]
    if checksum is not None:
        found = _masses(rows, header.N, header.d)
        if checksum.shape != found.shape or not np.allclose(found, checksum, rtol=0.0, atol=1e-12):
            raise FieldFormatError(f"{path}: mass checksum does not match the data")
    vals = _from_rows(rows, header.d, header.N, header.c)
    if vector and header.c == 1:
        vals = vals[:, None]
    return header, vals


def write_csv(path, values: np.ndarray, d: int, *, is_slice: bool = False) -> Path:
    values, c = _infer(values, d, is_slice)
    rows = _to_rows(values, d, c)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t_index", "flat_node_index", "component", "value"])
        for t, row in enumerate(rows):
            for j, val in enumerate(row):
                node, comp = divmod(j, c)
                wr.writerow([t, node, comp, repr(float(val))])
    return path


def read_csv(path, d: int, vector: bool = False) -> np.ndarray:
    """Read a CSV flow back into ``(M+1, [c,] N...)``; ``vector`` as in :func:`read_flow`."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t_idx = data[:, 0].astype(int)
    node = data[:, 1].astype(int)
    comp = data[:, 2].astype(int)
    n_t, n_nodes, c = t_idx.max() + 1, node.max() + 1, comp.max() + 1
    N = round(n_nodes ** (1.0 / d))
    if N**d != n_nodes or data.shape[0] != n_t * n_nodes * c:
        raise FieldFormatError(f"{path}: entries do not form a complete flow on T^{d}")
    rows = np.empty((n_t, n_nodes * c))
    rows[t_idx, node * c + comp] = data[:, 3]
    vals = _from_rows(rows, d, N, c)
    return vals[:, None] if vector and c == 1 else vals
