"""
Univariate envelope functions: orthonormal polynomials weighted by the signal
envelope density, and look-up tables over [0, 1]
"""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import (
    BasisRankError,
    DomainError,
    FileFormatError,
    NormalizationError,
)
from .signals import DensityTable

logger = logging.getLogger(__name__)

DEFAULT_LUT_SIZE = 1024
DENSE_GRID_POINTS = 10_001


@dataclass
class ClampCounter:
    """Counts envelopes clamped into [0, 1] before evaluation."""

    count: int = 0

    def add(self, n: int):
        self.count += int(n)


def clamp_envelope(
    r: np.ndarray, diagnostics: Optional[ClampCounter] = None
) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    outside = np.count_nonzero((r < 0.0) | (r > 1.0))
    if outside:
        if diagnostics is not None:
            diagnostics.add(outside)
        logger.debug(f"Clamped {outside} envelope value(s) into [0, 1]")
        r = np.clip(r, 0.0, 1.0)
    return r


@dataclass(frozen=True, eq=False)
class OrthonormalBasis:
    """
    Polynomials psi_0..psi_{M-1} orthonormal under sum_i w_i psi_a psi_b,
    where w_i = rho(x_i) x_i^2 dx on the histogram grid.

    Three-term recursion:
        b_{m+1} psi_{m+1} = (x - a_m) psi_m - b_m psi_{m-1},  psi_0 = 1 / b_0
    """

    alphas: np.ndarray
    betas: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    weight: DensityTable

    @property
    def degree_count(self) -> int:
        return self.betas.size

    def evaluate(self, r: np.ndarray) -> np.ndarray:
        """Return psi_m(r) with shape (M, len(r))."""
        r = np.atleast_1d(np.asarray(r, dtype=np.float64))
        values = np.empty((self.degree_count, r.size))
        values[0] = 1.0 / self.betas[0]
        if self.degree_count > 1:
            values[1] = (r - self.alphas[0]) * values[0] / self.betas[1]
        for m in range(1, self.degree_count - 1):
            values[m + 1] = (
                (r - self.alphas[m]) * values[m] - self.betas[m] * values[m - 1]
            ) / self.betas[m + 1]
        return values

    def inner(self, f_nodes: np.ndarray, g_nodes: np.ndarray) -> complex:
        return complex(np.sum(self.weights * f_nodes * np.conj(g_nodes)))

    def gram(self) -> np.ndarray:
        psi = self.evaluate(self.nodes)
        return (psi * self.weights) @ psi.T

    def project(self, func: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Coefficients of `func` in this basis; exact for degree < M."""
        psi = self.evaluate(self.nodes)
        values = np.asarray(func(self.nodes), dtype=np.complex128)
        return (psi * self.weights) @ values


def build_basis(weight: DensityTable, degree_count: int) -> OrthonormalBasis:
    """Stieltjes procedure on the discrete measure rho(x) x^2 dx."""
    if degree_count < 1:
        raise BasisRankError("a basis needs at least one function", 0)
    mass = weight.total_mass()
    if abs(mass - 1.0) > 1e-6:
        raise NormalizationError(f"weight density integrates to {mass}, not 1")
    nodes = np.asarray(weight.centers, dtype=np.float64)
    weights = np.asarray(weight.density, dtype=np.float64) * nodes**2 * weight.bin_width
    total = np.sum(weights)
    if total <= 0:
        raise BasisRankError("effective weight rho(x) x^2 is identically zero", 0)

    alphas = np.zeros(degree_count)
    betas = np.zeros(degree_count)
    betas[0] = np.sqrt(total)
    previous = np.zeros_like(nodes)
    current = np.full_like(nodes, 1.0 / betas[0])
    for m in range(degree_count):
        alphas[m] = np.sum(weights * nodes * current**2)
        if m == degree_count - 1:
            break
        nxt = (nodes - alphas[m]) * current - betas[m] * previous
        norm = np.sqrt(np.sum(weights * nxt**2))
        scale = np.sqrt(np.sum(weights * (nodes * current) ** 2))
        if norm <= 1e-10 * scale:
            raise BasisRankError(
                f"weight supports too few points for {degree_count} "
                f"functions: moment {m + 1} is degenerate",
                m + 1,
            )
        betas[m + 1] = norm
        previous, current = current, nxt / norm

    basis = OrthonormalBasis(alphas, betas, nodes, weights, weight)
    logger.debug(f"Built orthonormal basis with {degree_count} functions")
    return basis


class FunctionKind(str, Enum):
    POLY = "poly"
    LUT = "lut"


@dataclass(frozen=True, eq=False)
class UnivariateFunction:
    """
    One predistorter entry P_kq(r) for r in [0, 1].

    `values` holds basis coefficients (poly) or table entries sampled on a
    uniform grid over [0, 1] (lut).
    """

    kind: FunctionKind
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "kind", FunctionKind(self.kind))
        values = np.array(self.values, dtype=np.complex128).ravel()
        if not np.all(np.isfinite(values)):
            raise DomainError("function values must be finite")
        if self.kind is FunctionKind.LUT and values.size < 2:
            raise DomainError("a look-up table needs at least 2 entries")
        if values.size < 1:
            raise DomainError("a polynomial needs at least one coefficient")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def poly(cls, coeffs: Sequence[complex]) -> "UnivariateFunction":
        return cls(FunctionKind.POLY, coeffs)

    @classmethod
    def lut(cls, entries: Sequence[complex]) -> "UnivariateFunction":
        return cls(FunctionKind.LUT, entries)

    @classmethod
    def constant(cls, c: complex, basis: OrthonormalBasis) -> "UnivariateFunction":
        return cls.poly(basis.project(lambda r: np.full(r.shape, c)))

    @property
    def is_poly(self) -> bool:
        return self.kind is FunctionKind.POLY

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.values.size)

    def evaluate(
        self,
        r: np.ndarray,
        basis: OrthonormalBasis,
        diagnostics: Optional[ClampCounter] = None,
        psi: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """Vectorised evaluation; `psi` may carry precomputed basis values."""
        r = clamp_envelope(r, diagnostics)
        if self.is_poly:
            if psi is None:
                psi = basis.evaluate(r)
            return self.values @ psi[: self.values.size].astype(np.complex128)
        grid = self.grid
        return np.interp(r, grid, self.values.real) + 1j * np.interp(
            r, grid, self.values.imag
        )

    def scaled(self, factor: complex) -> "UnivariateFunction":
        return UnivariateFunction(self.kind, self.values * factor)


def eval_function(
    f: UnivariateFunction,
    basis: OrthonormalBasis,
    r: float,
    diagnostics: Optional[ClampCounter] = None,
) -> complex:
    return complex(f.evaluate(np.array([r]), basis, diagnostics)[0])


def poly_to_lut(
    f: UnivariateFunction, basis: OrthonormalBasis, size: int = DEFAULT_LUT_SIZE
) -> Tuple[UnivariateFunction, float]:
    """
    Sample a polynomial entry on `size` uniform points; also return the largest
    interpolation error seen on a dense grid.
    """
    if not f.is_poly:
        raise DomainError("poly_to_lut expects a polynomial entry")
    if size < 2:
        raise DomainError(f"LUT size must be >= 2, got {size}")
    table = UnivariateFunction.lut(f.evaluate(np.linspace(0.0, 1.0, size), basis))
    dense = np.linspace(0.0, 1.0, DENSE_GRID_POINTS)
    error = float(
        np.max(np.abs(table.evaluate(dense, basis) - f.evaluate(dense, basis)))
    )
    logger.debug(f"LUT of size {size}: max interpolation error {error:.3e}")
    return table, error


def weighted_norm(f: UnivariateFunction, basis: OrthonormalBasis) -> float:
    values = f.evaluate(basis.nodes, basis)
    return float(np.sqrt(np.sum(basis.weights * np.abs(values) ** 2)))


def normalize_for_plot(
    f: UnivariateFunction, basis: OrthonormalBasis
) -> Tuple[UnivariateFunction, complex]:
    norm = weighted_norm(f, basis)
    if norm == 0:
        raise NormalizationError("cannot normalise an identically zero function")
    return f.scaled(1.0 / norm), complex(norm)


def normalize_row(
    entries: Sequence[UnivariateFunction], basis: OrthonormalBasis
) -> Tuple[Tuple[UnivariateFunction, ...], complex]:
    """Unit-norm entries and the accumulated row scale a_k = prod ||P_kq||."""
    scaled = []
    scale = 1.0 + 0j
    for entry in entries:
        unit, norm = normalize_for_plot(entry, basis)
        scaled.append(unit)
        scale *= norm
    return tuple(scaled), scale


def write_lut_csv(f: UnivariateFunction, path: Union[str, Path]) -> Path:
    if f.is_poly:
        raise DomainError("only LUT entries can be exported as tables")
    path = Path(path)
    with path.open("w") as handle:
        handle.write(f"# L={f.values.size} domain=0,1\n")
        handle.write("index,r,re,im\n")
        for i, (r, v) in enumerate(zip(f.grid, f.values)):
            handle.write(f"{i},{float(r)!r},{float(v.real)!r},{float(v.imag)!r}\n")
    return path


def read_lut_csv(path: Union[str, Path]) -> UnivariateFunction:
    path = Path(path)
    lines = path.read_text().splitlines()
    if len(lines) < 2 or not lines[0].startswith("# L="):
        raise FileFormatError(f"{path}: missing LUT header", offset=0)
    try:
        size = int(lines[0].split()[1].split("=")[1])
    except (IndexError, ValueError) as e:
        raise FileFormatError(f"{path}: malformed LUT header", offset=0) from e
    rows = lines[2:]
    if len(rows) != size:
        raise FileFormatError(f"{path}: header declares {size} entries, found {len(rows)}")
    entries = np.empty(size, dtype=np.complex128)
    offset = len(lines[0]) + len(lines[1]) + 2
    for i, row in enumerate(rows):
        try:
            _, _, re, im = row.split(",")
            entries[i] = complex(float(re), float(im))
        except ValueError as e:
            raise FileFormatError(f"{path}: malformed LUT row {i}", offset=offset) from e
        offset += len(row) + 1
    return UnivariateFunction.lut(entries)


def write_lut_binary(f: UnivariateFunction, path: Union[str, Path]) -> Path:
    """Hardware-style table: L little-endian complex64 entries."""
    if f.is_poly:
        raise DomainError("only LUT entries can be exported as tables")
    path = Path(path)
    path.write_bytes(f.values.astype("<c8").tobytes())
    return path


def read_lut_binary(path: Union[str, Path]) -> UnivariateFunction:
    raw = Path(path).read_bytes()
    if len(raw) % 8:
        raise FileFormatError(f"{path}: truncated table", offset=len(raw) - len(raw) % 8)
    return UnivariateFunction.lut(np.frombuffer(raw, dtype="<c8"))
