"""
Separable-function predistorters.

A K x Q matrix of envelope functions P_kq, tap indices m_k and row scales a_k
defines the conventional-form operator

    multiplicative:  z_n = sum_k a_k x_{n-m_k+1} prod_q P_kq(|x_{n-q+1}|)
    additive:        z_n = sum_k a_k x_{n-m_k+1} sum_q  P_kq(|x_{n-q+1}|)

The diagonal structure is the multiplicative one with K = Q and m_k = k.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .basis import (
    ClampCounter,
    FunctionKind,
    OrthonormalBasis,
    UnivariateFunction,
    clamp_envelope,
    normalize_row,
    poly_to_lut,
    weighted_norm,
    write_lut_binary,
    write_lut_csv,
)
from .exceptions import FileFormatError, StructureError, VersionMismatchError
from .operators import ComplexSequence, tap_matrix
from .signals import DensityTable

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
FILE_MAGIC = "# dpdlab predistorter"


class Structure(str, Enum):
    MULTIPLICATIVE = "multiplicative"
    DIAGONAL = "diagonal"
    ADDITIVE = "additive"

    @property
    def is_multiplicative(self) -> bool:
        return self is not Structure.ADDITIVE


def default_tap_index(structure: Structure, rows: int, memory_depth: int):
    if structure is Structure.MULTIPLICATIVE:
        return tuple((k % memory_depth) + 1 for k in range(rows))
    return tuple(range(1, rows + 1))


@dataclass(frozen=True, eq=False)
class PredistorterMatrix:
    structure: Structure
    entries: Tuple[Tuple[UnivariateFunction, ...], ...]
    basis: OrthonormalBasis
    tap_index: Tuple[int, ...] = ()
    scales: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        structure = Structure(self.structure)
        object.__setattr__(self, "structure", structure)
        entries = tuple(tuple(row) for row in self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries or not entries[0]:
            raise StructureError("predistorter matrix needs K >= 1 and Q >= 1")
        rows, depth = len(entries), len(entries[0])
        if any(len(row) != depth for row in entries):
            raise StructureError("predistorter matrix rows differ in length")

        taps = tuple(int(m) for m in self.tap_index) or default_tap_index(
            structure, rows, depth
        )
        if len(taps) != rows or any(not 1 <= m <= depth for m in taps):
            raise StructureError(f"tap indices {taps} invalid for K={rows}, Q={depth}")
        if structure is Structure.DIAGONAL and (
            rows != depth or taps != tuple(range(1, depth + 1))
        ):
            raise StructureError("diagonal structure requires K = Q and m_k = k")
        object.__setattr__(self, "tap_index", taps)

        scales = (
            np.ones(rows, dtype=np.complex128)
            if self.scales is None
            else np.array(self.scales, dtype=np.complex128).ravel()
        )
        if scales.size != rows:
            raise StructureError(f"expected {rows} row scales, got {scales.size}")
        scales.flags.writeable = False
        object.__setattr__(self, "scales", scales)

        for row in entries:
            for entry in row:
                if entry.is_poly and entry.values.size > self.basis.degree_count:
                    raise StructureError(
                        f"entry has {entry.values.size} coefficients but the "
                        f"basis only has {self.basis.degree_count} functions"
                    )

    @property
    def K(self) -> int:
        return len(self.entries)

    @property
    def Q(self) -> int:
        return len(self.entries[0])

    @property
    def is_polynomial(self) -> bool:
        return all(entry.is_poly for row in self.entries for entry in row)

    def __call__(
        self, x: ComplexSequence, diagnostics: Optional[ClampCounter] = None
    ) -> ComplexSequence:
        return apply_predistorter(self, x, diagnostics)

    @classmethod
    def from_coefficients(
        cls,
        structure: Structure,
        coefficients: np.ndarray,
        basis: OrthonormalBasis,
        tap_index: Sequence[int] = (),
        scales: Optional[np.ndarray] = None,
    ) -> "PredistorterMatrix":
        """Build from a (K, Q, M) tensor of basis coefficients."""
        coefficients = np.asarray(coefficients, dtype=np.complex128)
        rows, depth = coefficients.shape[:2]
        entries = tuple(
            tuple(UnivariateFunction.poly(coefficients[k, q]) for q in range(depth))
            for k in range(rows)
        )
        return cls(structure, entries, basis, tuple(tap_index), scales)

    def coefficients(self) -> np.ndarray:
        """(K, Q, M) coefficient tensor; polynomial entries only."""
        if not self.is_polynomial:
            raise StructureError("coefficient tensor needs polynomial entries")
        tensor = np.zeros(
            (self.K, self.Q, self.basis.degree_count), dtype=np.complex128
        )
        for k, row in enumerate(self.entries):
            for q, entry in enumerate(row):
                tensor[k, q, : entry.values.size] = entry.values
        return tensor

    def entry_values(
        self, envelope: np.ndarray, diagnostics: Optional[ClampCounter] = None
    ) -> np.ndarray:
        """P_kq evaluated at every envelope sample, shape (K, Q, N)."""
        r = clamp_envelope(envelope, diagnostics)
        if self.is_polynomial:
            psi = self.basis.evaluate(r).astype(np.complex128)
            return np.einsum("kqm,mn->kqn", self.coefficients(), psi)
        psi = self.basis.evaluate(r)
        values = np.empty((self.K, self.Q, r.size), dtype=np.complex128)
        for k, row in enumerate(self.entries):
            for q, entry in enumerate(row):
                values[k, q] = entry.evaluate(r, self.basis, psi=psi)
        return values

    def normalized(self) -> "PredistorterMatrix":
        """
        Unit-norm entries with the norms folded into the row scales.

        Additive rows share one norm sqrt(sum_q ||P_kq||^2) so the row sum is
        preserved. Rows holding an identically zero entry contribute nothing
        and get a_k = 0 with their entries left as they are.
        """
        rows, scales = [], []
        for row, a in zip(self.entries, self.scales):
            norms = [weighted_norm(entry, self.basis) for entry in row]
            if self.structure is Structure.ADDITIVE:
                shared = float(np.sqrt(np.sum(np.square(norms))))
                if shared == 0:
                    rows.append(row)
                    scales.append(0.0)
                    continue
                rows.append(tuple(entry.scaled(1.0 / shared) for entry in row))
                scales.append(a * shared)
            elif min(norms) == 0:
                rows.append(row)
                scales.append(0.0)
            else:
                unit, scale = normalize_row(row, self.basis)
                rows.append(unit)
                scales.append(a * scale)
        return replace(self, entries=tuple(rows), scales=np.array(scales))

    def to_lut(self, size: int) -> Tuple["PredistorterMatrix", float]:
        """Every polynomial entry sampled into a LUT; returns max error too."""
        rows, worst = [], 0.0
        for row in self.entries:
            converted = []
            for entry in row:
                if entry.is_poly:
                    entry, error = poly_to_lut(entry, self.basis, size)
                    worst = max(worst, error)
                converted.append(entry)
            rows.append(tuple(converted))
        return replace(self, entries=tuple(rows)), worst


def tap_factors(
    pd: PredistorterMatrix,
    samples: np.ndarray,
    diagnostics: Optional[ClampCounter] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Return (factors, taps): factors[k, q, j] = P_kq(|x[j+Q-1-q]|) and
    taps[q, j] = x[j+Q-1-q] over the conventional-form output range.
    """
    taps = tap_matrix(samples, pd.Q)
    values = pd.entry_values(np.abs(samples), diagnostics)
    length = taps.shape[1]
    factors = np.stack(
        [values[:, q, pd.Q - 1 - q : pd.Q - 1 - q + length] for q in range(pd.Q)],
        axis=1,
    )
    return factors, taps


def row_taps(pd: PredistorterMatrix, taps: np.ndarray) -> np.ndarray:
    """x_{n-m_k+1} for every row, scaled by a_k; shape (K, L)."""
    return pd.scales[:, None] * taps[np.array(pd.tap_index) - 1]


def apply_multiplicative(
    pd: PredistorterMatrix,
    x: ComplexSequence,
    diagnostics: Optional[ClampCounter] = None,
) -> ComplexSequence:
    if not pd.structure.is_multiplicative:
        raise StructureError(f"{pd.structure.value} matrix applied as multiplicative")
    factors, taps = tap_factors(pd, x.samples, diagnostics)
    z = np.sum(row_taps(pd, taps) * np.prod(factors, axis=1), axis=0)
    return x.with_samples(z)


def apply_additive(
    pd: PredistorterMatrix,
    x: ComplexSequence,
    diagnostics: Optional[ClampCounter] = None,
) -> ComplexSequence:
    if pd.structure is not Structure.ADDITIVE:
        raise StructureError(f"{pd.structure.value} matrix applied as additive")
    factors, taps = tap_factors(pd, x.samples, diagnostics)
    z = np.sum(row_taps(pd, taps) * np.sum(factors, axis=1), axis=0)
    return x.with_samples(z)


def apply_predistorter(
    pd: PredistorterMatrix,
    x: ComplexSequence,
    diagnostics: Optional[ClampCounter] = None,
) -> ComplexSequence:
    if pd.structure is Structure.ADDITIVE:
        return apply_additive(pd, x, diagnostics)
    return apply_multiplicative(pd, x, diagnostics)


def identity(
    structure: Structure, rows: int, memory_depth: int, basis: OrthonormalBasis
) -> PredistorterMatrix:
    """
    Identity operator: for multiplicative forms row 1 is all ones and the
    remaining rows are switched off with a_k = 0; for the additive form only
    P_11 is one.
    """
    structure = Structure(structure)
    one = UnivariateFunction.constant(1.0, basis)
    zero = UnivariateFunction.poly(np.zeros(basis.degree_count))
    if structure is Structure.ADDITIVE:
        entries = [[zero] * memory_depth for _ in range(rows)]
        entries[0][0] = one
        return PredistorterMatrix(structure, entries, basis)
    entries = [[one] * memory_depth for _ in range(rows)]
    scales = np.zeros(rows, dtype=np.complex128)
    scales[0] = 1.0
    return PredistorterMatrix(structure, entries, basis, scales=scales)


def memory_polynomial_equivalent(
    coeffs: np.ndarray, basis: OrthonormalBasis
) -> PredistorterMatrix:
    """
    Diagonal matrix realising sum_q x_{n-q} p_q(|x_{n-q}|).

    `coeffs[q, d]` is the coefficient of r**d in p_q; off-diagonal entries
    are the constant 1. Degrees must stay below the basis size.
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=np.complex128))
    depth, degrees = coeffs.shape
    if degrees > basis.degree_count:
        raise StructureError(
            f"degree {degrees - 1} polynomials need at least {degrees} basis functions"
        )
    one = UnivariateFunction.constant(1.0, basis)
    entries = []
    for k in range(depth):
        row = [one] * depth
        poly = np.polynomial.Polynomial(coeffs[k])
        row[k] = UnivariateFunction.poly(basis.project(poly))
        entries.append(row)
    return PredistorterMatrix(Structure.DIAGONAL, entries, basis)


def expand_additive(pd: PredistorterMatrix) -> PredistorterMatrix:
    """
    Rewrite an additive matrix as a multiplicative one with K*Q rows: row
    (k, q) keeps tap m_k and P_kq in column q, every other factor is 1.
    """
    if pd.structure is not Structure.ADDITIVE:
        raise StructureError("only additive matrices can be expanded")
    one = UnivariateFunction.constant(1.0, pd.basis)
    entries, taps, scales = [], [], []
    for row, tap, a in zip(pd.entries, pd.tap_index, pd.scales):
        for q, entry in enumerate(row):
            expanded = [one] * pd.Q
            expanded[q] = entry
            entries.append(expanded)
            taps.append(tap)
            scales.append(a)
    return PredistorterMatrix(
        Structure.MULTIPLICATIVE, entries, pd.basis, tuple(taps), np.array(scales)
    )


def export_luts(
    pd: PredistorterMatrix, directory: Union[str, Path], size: int
) -> Tuple[List[Path], float]:
    """Write every entry as `lut_k{k}_q{q}.csv` and `.bin` (1-based indices)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    table, error = pd.to_lut(size)
    written = []
    for k, row in enumerate(table.entries, start=1):
        for q, entry in enumerate(row, start=1):
            written.append(write_lut_csv(entry, directory / f"lut_k{k}_q{q}.csv"))
            written.append(write_lut_binary(entry, directory / f"lut_k{k}_q{q}.bin"))
    logger.info(
        f"Exported {pd.K}x{pd.Q} LUTs of size {size} to {directory} "
        f"(max interpolation error {error:.3e})"
    )
    return written, error


def serialize(pd: PredistorterMatrix) -> str:
    basis = pd.basis
    lines = [
        FILE_MAGIC,
        f"format_version: {FORMAT_VERSION}",
        f"structure: {pd.structure.value}",
        f"K: {pd.K}",
        f"Q: {pd.Q}",
        f"M: {basis.degree_count}",
        f"bin_width: {float(basis.weight.bin_width)!r}",
        "[weight]",
        "index,center,density",
    ]
    for i, (c, d) in enumerate(zip(basis.weight.centers, basis.weight.density)):
        lines.append(f"{i},{float(c)!r},{float(d)!r}")
    lines += ["[recursion]", "m,alpha,beta"]
    for m, (a, b) in enumerate(zip(basis.alphas, basis.betas)):
        lines.append(f"{m},{float(a)!r},{float(b)!r}")
    lines += ["[rows]", "k,tap,scale_re,scale_im"]
    for k, (tap, a) in enumerate(zip(pd.tap_index, pd.scales), start=1):
        lines.append(f"{k},{tap},{float(a.real)!r},{float(a.imag)!r}")
    lines += ["[entries]", "k,q,kind,index,re,im"]
    for k, row in enumerate(pd.entries, start=1):
        for q, entry in enumerate(row, start=1):
            for i, v in enumerate(entry.values):
                lines.append(
                    f"{k},{q},{entry.kind.value},{i},{float(v.real)!r},{float(v.imag)!r}"
                )
    lines.append("[end]")
    return "\n".join(lines) + "\n"


def save(pd: PredistorterMatrix, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(serialize(pd))
    logger.info(f"Wrote {pd.structure.value} predistorter ({pd.K}x{pd.Q}) to {path}")
    return path


class _LineReader:
    """Line iterator that remembers the byte offset of each line."""

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def next(self) -> Tuple[str, int]:
        if self.offset >= len(self.data):
            raise FileFormatError("unexpected end of file", offset=len(self.data))
        end = self.data.find(b"\n", self.offset)
        if end < 0:
            raise FileFormatError("unterminated final line", offset=self.offset)
        start = self.offset
        self.offset = end + 1
        return self.data[start:end].decode("utf-8"), start

    def expect(self, literal: str):
        line, start = self.next()
        if line != literal:
            raise FileFormatError(f"expected {literal!r}, found {line!r}", offset=start)

    def header(self, key: str) -> Tuple[str, int]:
        """Value of the `key: value` line and the offset of that line."""
        line, start = self.next()
        name, sep, value = line.partition(": ")
        if name != key or not sep:
            raise FileFormatError(f"expected header field {key!r}", offset=start)
        return value, start

    def number(self, key: str, kind=float):
        return _number(*self.header(key), kind)

    def rows(self, count: int, columns: int) -> List[Tuple[List[str], int]]:
        rows = []
        for _ in range(count):
            line, start = self.next()
            cells = line.split(",")
            if len(cells) != columns:
                raise FileFormatError(
                    f"expected {columns} fields, found {len(cells)}", offset=start
                )
            rows.append((cells, start))
        return rows


def _number(text: str, start: int, kind=float):
    try:
        return kind(text)
    except ValueError as e:
        raise FileFormatError(f"malformed number {text!r}", offset=start) from e


def deserialize(data: Union[bytes, str]) -> PredistorterMatrix:
    if isinstance(data, str):
        data = data.encode("utf-8")
    reader = _LineReader(data)
    reader.expect(FILE_MAGIC)
    version_text, _ = reader.header("format_version")
    if version_text != str(FORMAT_VERSION):
        raise VersionMismatchError(
            f"predistorter file version {version_text}, expected {FORMAT_VERSION}"
        )
    structure_text, start = reader.header("structure")
    try:
        structure = Structure(structure_text)
    except ValueError as e:
        raise FileFormatError(str(e), offset=start) from e
    rows = reader.number("K", int)
    depth = reader.number("Q", int)
    degree_count = reader.number("M", int)
    bin_width = reader.number("bin_width")
    bins = int(round(1.0 / bin_width))

    reader.expect("[weight]")
    reader.expect("index,center,density")
    weight_rows = reader.rows(bins, 3)
    centers = np.array([_number(c[1], s) for c, s in weight_rows])
    density = np.array([_number(c[2], s) for c, s in weight_rows])

    reader.expect("[recursion]")
    reader.expect("m,alpha,beta")
    recursion = reader.rows(degree_count, 3)
    alphas = np.array([_number(c[1], s) for c, s in recursion])
    betas = np.array([_number(c[2], s) for c, s in recursion])

    reader.expect("[rows]")
    reader.expect("k,tap,scale_re,scale_im")
    row_info = reader.rows(rows, 4)
    taps = tuple(_number(c[1], s, int) for c, s in row_info)
    scales = np.array(
        [complex(_number(c[2], s), _number(c[3], s)) for c, s in row_info]
    )

    reader.expect("[entries]")
    reader.expect("k,q,kind,index,re,im")
    collected = {}
    while True:
        line, start = reader.next()
        if line == "[end]":
            break
        cells = line.split(",")
        if len(cells) != 6:
            raise FileFormatError(f"expected 6 fields, found {len(cells)}", offset=start)
        k, q = _number(cells[0], start, int), _number(cells[1], start, int)
        if not (1 <= k <= rows and 1 <= q <= depth):
            raise FileFormatError(
                f"entry P_{k}{q} outside a {rows}x{depth} matrix", offset=start
            )
        kind = cells[2]
        if kind not in {FunctionKind.POLY.value, FunctionKind.LUT.value}:
            raise FileFormatError(f"unknown entry kind {kind!r}", offset=start)
        entry_kind, values = collected.setdefault((k, q), (kind, []))
        if kind != entry_kind:
            raise FileFormatError(
                f"P_{k}{q} mixes {entry_kind} and {kind} rows", offset=start
            )
        index = _number(cells[3], start, int)
        if index != len(values):
            raise FileFormatError(
                f"P_{k}{q} value index {index}, expected {len(values)}", offset=start
            )
        values.append(complex(_number(cells[4], start), _number(cells[5], start)))

    entries = []
    for k in range(1, rows + 1):
        row = []
        for q in range(1, depth + 1):
            if (k, q) not in collected:
                raise FileFormatError(f"missing entry P_{k}{q}", offset=len(data))
            kind, values = collected[(k, q)]
            row.append(UnivariateFunction(FunctionKind(kind), values))
        entries.append(row)

    weight = DensityTable(centers, density, bin_width)
    weights = density * centers**2 * bin_width
    basis = OrthonormalBasis(alphas, betas, centers, weights, weight)
    return PredistorterMatrix(structure, entries, basis, taps, scales)


def load(path: Union[str, Path]) -> PredistorterMatrix:
    path = Path(path)
    return deserialize(path.read_bytes())
