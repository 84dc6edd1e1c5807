"""
Simulated high power amplifier models
"""

import logging
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.optimize import brentq

from .exceptions import (
    DomainError,
    FileFormatError,
    NormalizationError,
    StructureError,
)
from .operators import (
    GAIN_EXCITATION_LENGTH,
    GAIN_EXCITATION_SEED,
    ComplexSequence,
    InducedOperator,
    apply_induced,
    measure_gain,
)

logger = logging.getLogger(__name__)

ODD_ORDERS = (1, 3, 5)
MEMORY_DEPTH = 3
DEFAULT_COEFFICIENT_FILE = Path(__file__).resolve().parent / "data" / "ding_class_ab.coeffs"


class HpaKind(str, Enum):
    MEMORY_POLYNOMIAL = "memory_polynomial"
    MEMORY_POLYNOMIAL_CROSS = "memory_polynomial_cross"
    STATIC_NONLINEARITY = "static_nonlinearity"
    IDENTITY = "identity"

    @property
    def has_memory(self) -> bool:
        return self in (HpaKind.MEMORY_POLYNOMIAL, HpaKind.MEMORY_POLYNOMIAL_CROSS)


@dataclass(frozen=True)
class RappCurve:
    """
    Strictly increasing AM/AM map
        A(r) = g r / (1 + (g r / s)^(2p))^(1/(2p))
    """

    gain: float = 1.0
    saturation: float = 2.0
    smoothness: float = 1.0

    def __post_init__(self):
        if self.gain <= 0 or self.saturation <= 0 or self.smoothness <= 0:
            raise DomainError("Rapp curve parameters must be positive")

    def __call__(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        p2 = 2.0 * self.smoothness
        return self.gain * r / (1.0 + (self.gain * r / self.saturation) ** p2) ** (
            1.0 / p2
        )

    def inverse(self, u: np.ndarray) -> np.ndarray:
        """Numeric inverse by bracketing root search."""
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        if np.any(u < 0) or np.any(u >= self.saturation):
            raise DomainError(
                f"Rapp curve only reaches [0, {self.saturation}), got {u.max()}"
            )
        result = np.empty_like(u)
        for i, target in enumerate(u):
            if target == 0:
                result[i] = 0.0
                continue
            upper = target / self.gain
            while self(upper) < target:
                upper *= 2.0
            result[i] = brentq(
                lambda r: float(self(r)) - target, 0.0, upper, xtol=1e-15, rtol=1e-15
            )
        return result


def empty_grid() -> np.ndarray:
    return np.zeros((len(ODD_ORDERS), MEMORY_DEPTH), dtype=np.complex128)


@dataclass(frozen=True, eq=False)
class HpaModel:
    """
    Amplifier operator F. `coeffs[i, q]` is c_kq for k = ODD_ORDERS[i].

    Memory kinds compute
        y_n = sum_k sum_q c_kq z_{n-q} |z_{n-q}|^(k-1)  [+ g z_{n-2} |z_{n-1}| |z_n|]
    in conventional form, so the output is two samples shorter than z.
    """

    kind: HpaKind
    coeffs: np.ndarray = field(default_factory=empty_grid)
    cross_gain: complex = 0.5
    static_curve: Optional[RappCurve] = None
    unit_gain_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", HpaKind(self.kind))
        coeffs = np.array(self.coeffs, dtype=np.complex128)
        if self.kind.has_memory and coeffs.shape != (len(ODD_ORDERS), MEMORY_DEPTH):
            raise StructureError(
                f"memory polynomial needs a 3x3 coefficient grid, got {coeffs.shape}"
            )
        if self.kind is HpaKind.STATIC_NONLINEARITY and self.static_curve is None:
            raise StructureError("static nonlinearity needs a curve")
        coeffs.flags.writeable = False
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def identity(cls) -> "HpaModel":
        return cls(HpaKind.IDENTITY)

    @classmethod
    def memory_polynomial(
        cls, coeffs: np.ndarray, cross_gain: Optional[complex] = None
    ) -> "HpaModel":
        if cross_gain is None:
            return cls(HpaKind.MEMORY_POLYNOMIAL, coeffs)
        return cls(HpaKind.MEMORY_POLYNOMIAL_CROSS, coeffs, cross_gain=cross_gain)

    @classmethod
    def static(cls, curve: RappCurve) -> "HpaModel":
        return cls(HpaKind.STATIC_NONLINEARITY, static_curve=curve)

    @property
    def memory_depth(self) -> int:
        return MEMORY_DEPTH if self.kind.has_memory else 1

    def __call__(self, z: ComplexSequence) -> ComplexSequence:
        return apply_hpa(self, z)

    def as_operator(self) -> InducedOperator:
        return InducedOperator(self.memory_depth, self._kernel)

    def _kernel(self, taps: np.ndarray) -> np.ndarray:
        if self.kind is HpaKind.IDENTITY:
            return taps[0].copy()
        if self.kind is HpaKind.STATIC_NONLINEARITY:
            r = np.abs(taps[0])
            gain = np.empty_like(r)
            nonzero = r > 0
            gain[nonzero] = self.static_curve(r[nonzero]) / r[nonzero]
            gain[~nonzero] = self.static_curve.gain
            return taps[0] * gain
        envelope = np.abs(taps)
        y = np.zeros(taps.shape[1], dtype=np.complex128)
        for i, k in enumerate(ODD_ORDERS):
            for q in range(MEMORY_DEPTH):
                if self.coeffs[i, q] != 0:
                    y += self.coeffs[i, q] * taps[q] * envelope[q] ** (k - 1)
        if self.kind is HpaKind.MEMORY_POLYNOMIAL_CROSS:
            y += self.cross_gain * taps[2] * envelope[1] * envelope[0]
        return y

    def inverse_envelope(self, u: np.ndarray) -> np.ndarray:
        """Input envelope that the (scaled) static curve maps to `u`."""
        if self.kind is not HpaKind.STATIC_NONLINEARITY:
            raise StructureError("only static models have an envelope inverse")
        return self.static_curve.inverse(np.asarray(u) / self.unit_gain_scale)


def apply_hpa(model: HpaModel, z: ComplexSequence) -> ComplexSequence:
    y = apply_induced(model.as_operator(), z)
    if model.unit_gain_scale != 1.0:
        y = y.with_samples(y.samples * model.unit_gain_scale)
    return y


def normalize_unit_gain(
    model: HpaModel,
    trials: int = 1,
    length: int = GAIN_EXCITATION_LENGTH,
    seed: int = GAIN_EXCITATION_SEED,
) -> HpaModel:
    raw = replace(model, unit_gain_scale=1.0)
    gain = measure_gain(raw, trials=trials, length=length, seed=seed)
    if not gain > 1e-12:
        raise NormalizationError(f"{model.kind.value} model has zero gain")
    logger.info(f"Normalised {model.kind.value} model: gain {gain:.6f}, scale {1 / gain:.6f}")
    return replace(model, unit_gain_scale=1.0 / gain)


_ENTRY = re.compile(r"^c_(\d)(\d)\s*=\s*(.*)$")


def load_coefficients(path: Union[str, Path]) -> np.ndarray:
    """
    Read a `c_{k}{q} = re,im` coefficient file; `#` lines are comments and the
    header carries the source citation.
    """
    path = Path(path)
    grid = empty_grid()
    seen = set()
    offset = 0
    for line in path.read_bytes().decode("utf-8").splitlines(keepends=True):
        start, offset = offset, offset + len(line.encode("utf-8"))
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        match = _ENTRY.match(text)
        if match is None:
            raise FileFormatError(f"{path}: unrecognised line {text!r}", offset=start)
        k, q, literal = int(match[1]), int(match[2]), match[3]
        name = f"c_{k}{q}"
        if k not in ODD_ORDERS or not 0 <= q < MEMORY_DEPTH:
            raise FileFormatError(f"{path}: unexpected entry {name}", entry=name)
        if (k, q) in seen:
            raise FileFormatError(f"{path}: duplicate entry {name}", entry=name)
        try:
            re_text, im_text = literal.split(",")
            value = complex(float(re_text), float(im_text))
        except ValueError as e:
            raise FileFormatError(
                f"{path}: malformed complex literal for {name}: {literal!r}",
                offset=start,
                entry=name,
            ) from e
        grid[ODD_ORDERS.index(k), q] = value
        seen.add((k, q))
    missing = [
        f"c_{k}{q}" for k in ODD_ORDERS for q in range(MEMORY_DEPTH) if (k, q) not in seen
    ]
    if missing:
        raise FileFormatError(
            f"{path}: missing entries {', '.join(missing)}", entry=missing[0]
        )
    return grid


def write_coefficients(
    grid: np.ndarray, path: Union[str, Path], source: str = "generated"
) -> Path:
    grid = np.asarray(grid, dtype=np.complex128)
    path = Path(path)
    lines = [f"# source: {source}"]
    for i, k in enumerate(ODD_ORDERS):
        for q in range(MEMORY_DEPTH):
            v = grid[i, q]
            lines.append(f"c_{k}{q} = {float(v.real)!r},{float(v.imag)!r}")
    path.write_text("\n".join(lines) + "\n")
    return path
