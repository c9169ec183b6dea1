"""P2RT v1 text format for ragged tensors and their ``.truth`` sidecar.

Dataset layout::

    P2RT 1
    <n> <K>
    <m_1> ... <m_K>
    <n rows of m_1 values for slice 1>
    ...

Values use Python's shortest round-trip float repr, so a write/read cycle is
bit-exact.  The ground-truth sidecar holds labeled matrix sections ``A``,
``C``, ``B1`` .. ``BK`` (each header line is ``<label> <rows> <cols>``),
followed by ``sigma`` and ``seed`` lines.
"""
from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from .synth import SynthGroundTruth
from .tensor import Parafac2Error, RaggedTensor

__all__ = [
    "ParseError",
    "RefusedOverwrite",
    "format_float",
    "dumps_tensor",
    "write_tensor",
    "read_tensor",
    "write_truth",
    "read_truth",
    "truth_path",
    "write_matrix_csv",
    "read_matrix_csv",
]

MAGIC = "P2RT 1"
TRUTH_MAGIC = "P2RT-TRUTH 1"


class ParseError(Parafac2Error):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = f"{path}:" if path else ""
        where += f"{line}: " if line is not None else (": " if path else "")
        super().__init__(f"{where}{message}")


class RefusedOverwrite(FileExistsError):
    pass


def format_float(x) -> str:
    return repr(float(x))


def _rows(M):
    for row in M:
        yield " ".join(format_float(v) for v in row)


def dumps_tensor(tensor: RaggedTensor) -> str:
    lines = [MAGIC, f"{tensor.n} {tensor.K}", " ".join(str(m) for m in tensor.slice_widths)]
    for M in tensor:
        lines.extend(_rows(M))
    return "\n".join(lines) + "\n"


def _check_overwrite(path, force):
    if not force and os.path.exists(path):
        raise RefusedOverwrite(f"{path} exists; pass force=True (--force) to overwrite")


def write_tensor(tensor: RaggedTensor, path, force: bool = False) -> None:
    _check_overwrite(path, force)
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps_tensor(tensor))


class _Lines:
    """Line cursor over a text file that skips blank lines and keeps numbers."""

    def __init__(self, path):
        self.path = str(path)
        with open(path) as fh:
            self._lines = [(i + 1, ln.strip()) for i, ln in enumerate(fh)]
        self._lines = [(i, ln) for i, ln in self._lines if ln]
        self._pos = 0
        self.lineno = 0

    def next(self, what):
        if self._pos >= len(self._lines):
            raise ParseError(f"unexpected end of file, expected {what}",
                             self.lineno + 1, self.path)
        self.lineno, line = self._lines[self._pos]
        self._pos += 1
        return line

    def error(self, message):
        return ParseError(message, self.lineno, self.path)

    def ints(self, what, count=None):
        fields = self.next(what).split()
        try:
            vals = [int(f) for f in fields]
        except ValueError:
            raise self.error(f"expected integers for {what}") from None
        if count is not None and len(vals) != count:
            raise self.error(f"expected {count} integers for {what}, got {len(vals)}")
        return vals

    def floats(self, what, count):
        fields = self.next(what).split()
        if len(fields) != count:
            raise self.error(f"expected {count} values for {what}, got {len(fields)}")
        try:
            return [float(f) for f in fields]
        except ValueError:
            raise self.error(f"malformed number in {what}") from None

    def matrix(self, rows, cols, what):
        return np.array([self.floats(f"{what} row {i + 1}", cols) for i in range(rows)],
                        dtype=np.float64).reshape(rows, cols)

    def at_end(self):
        return self._pos >= len(self._lines)


def read_tensor(path) -> RaggedTensor:
    """Parse a P2RT v1 file; raises :class:`ParseError` with a line number."""
    cur = _Lines(path)
    if cur.next("header") != MAGIC:
        raise cur.error(f"bad header, expected {MAGIC!r}")
    n, K = cur.ints("<n> <K>", 2)
    if n < 1 or K < 1:
        raise cur.error("n and K must be positive")
    widths = cur.ints("slice widths", K)
    if any(m < 1 for m in widths):
        raise cur.error("slice widths must be positive")
    slices = [cur.matrix(n, m, f"slice {k + 1}") for k, m in enumerate(widths)]
    if not cur.at_end():
        cur.next("end of file")
        raise cur.error("trailing data after last slice")
    try:
        return RaggedTensor(slices)
    except Parafac2Error as exc:
        raise ParseError(str(exc), path=str(path)) from exc


def truth_path(path) -> Path:
    return Path(str(path) + ".truth")


def write_truth(truth: SynthGroundTruth, path, force: bool = False) -> None:
    _check_overwrite(path, force)
    lines = [TRUTH_MAGIC]
    sections = [("A", truth.A), ("C", truth.C)]
    sections += [(f"B{k + 1}", B) for k, B in enumerate(truth.B)]
    for label, M in sections:
        lines.append(f"{label} {M.shape[0]} {M.shape[1]}")
        lines.extend(_rows(M))
    lines += ["sigma", format_float(truth.sigma), "seed", str(int(truth.seed))]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_truth(path) -> SynthGroundTruth:
    cur = _Lines(path)
    if cur.next("header") != TRUTH_MAGIC:
        raise cur.error(f"bad header, expected {TRUTH_MAGIC!r}")
    mats = {}
    sigma = seed = None
    while not cur.at_end():
        fields = cur.next("section label").split()
        label = fields[0]
        if label == "sigma" and len(fields) == 1:
            sigma = cur.floats("sigma", 1)[0]
        elif label == "seed" and len(fields) == 1:
            seed = cur.ints("seed", 1)[0]
        elif len(fields) == 3:
            try:
                rows, cols = int(fields[1]), int(fields[2])
            except ValueError:
                raise cur.error(f"bad shape in section {label}") from None
            mats[label] = cur.matrix(rows, cols, f"section {label}")
        else:
            raise cur.error(f"unrecognized section {label!r}")
    missing = [s for s in ("A", "C", "B1") if s not in mats]
    if missing or sigma is None or seed is None:
        raise ParseError("truth file is missing sections", path=str(path))
    K = mats["C"].shape[0]
    try:
        B = [mats[f"B{k + 1}"] for k in range(K)]
    except KeyError as exc:
        raise ParseError(f"missing section {exc.args[0]}", path=str(path)) from None
    return SynthGroundTruth(mats["A"], mats["C"], B, sigma, seed)


def write_matrix_csv(M, path) -> None:
    """Headerless numeric CSV, LF line endings, round-trip float repr."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.atleast_2d(M):
            w.writerow([format_float(v) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh) if row])
