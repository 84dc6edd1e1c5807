"""
Indirect learning of separable postdistorters.

Samples (z, y) are taken around the amplifier, a postdistorter P with
P(y) ~ z is fitted by minimising sum_n |e_n|^2, e_n = z_n - P(y)_n, and the
result is installed as the predistorter.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .basis import ClampCounter, OrthonormalBasis, clamp_envelope, build_basis
from .exceptions import ConfigurationError, SequenceLengthError, StructureError
from .hpa import HpaModel
from .metrics import nmse_db
from .operators import ComplexSequence, tap_matrix
from .predistorter import (
    PredistorterMatrix,
    Structure,
    apply_predistorter,
    default_tap_index,
    identity,
)
from .signals import (
    DEFAULT_HISTOGRAM_BINS,
    WaveformConfig,
    envelope_histogram,
    generate,
)

logger = logging.getLogger(__name__)

ARMIJO_SLOPE = 1e-4
MAX_BACKTRACKS = 40


class Solver(str, Enum):
    ALS = "als"
    SCG = "scg"


@dataclass(frozen=True)
class TrainingConfig:
    samples_per_iteration: int = 25600
    # solver iterations inside one fit
    max_iterations: int = 40
    # rounds of the indirect learning loop
    learning_iterations: int = 20
    solver: Solver = Solver.ALS
    convergence_tol: float = 1e-6
    inner_ls_regularization: float = 1e-10
    seed: int = 0
    histogram_bins: int = DEFAULT_HISTOGRAM_BINS
    # SCG minibatch; None draws samples_per_iteration pairs
    scg_batch_size: Optional[int] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "solver", Solver(self.solver))
        except ValueError as e:
            raise ConfigurationError(str(e)) from e
        if self.samples_per_iteration < 1 or self.learning_iterations < 1:
            raise ConfigurationError("sample and iteration counts must be positive")
        if self.max_iterations < 0:
            raise ConfigurationError("max_iterations must be >= 0")
        if not self.convergence_tol > 0:
            raise ConfigurationError("convergence_tol must be > 0")
        if self.inner_ls_regularization < 0:
            raise ConfigurationError("inner_ls_regularization must be >= 0")


@dataclass(frozen=True)
class PredistorterLayout:
    structure: Structure = Structure.DIAGONAL
    rows: int = 3
    memory_depth: int = 3
    degree_count: int = 5

    def __post_init__(self):
        try:
            object.__setattr__(self, "structure", Structure(self.structure))
        except ValueError as e:
            raise ConfigurationError(str(e)) from e
        if min(self.rows, self.memory_depth, self.degree_count) < 1:
            raise ConfigurationError("K, Q and M must all be >= 1")

    @property
    def unknowns(self) -> int:
        return self.rows * self.memory_depth * self.degree_count


@dataclass
class TrainingRun:
    objective_trace: List[float]
    residual_nmse_db: float
    final_matrix: PredistorterMatrix
    clamp_count: int = 0
    iterations: int = 0
    converged: bool = False
    # indirect learning loop only
    cascade_nmse_trace: List[float] = field(default_factory=list)
    baseline_nmse_db: Optional[float] = None
    cascade_lag: Optional[int] = None


class PostdistortionError(NamedTuple):
    errors: np.ndarray
    objective: float


def aligned_target(z: np.ndarray, y: np.ndarray, memory_depth: int) -> np.ndarray:
    """
    z samples matched to the postdistorter outputs on y.

    y is the conventional-form amplifier output, so y[j] belongs to
    z[j + len(z) - len(y)]; the postdistorter drops another Q - 1 samples.
    """
    delay = len(z) - len(y)
    if delay < 0:
        raise SequenceLengthError(
            f"amplifier output ({len(y)}) is longer than its input ({len(z)})"
        )
    length = len(y) - memory_depth + 1
    if length < 1:
        raise SequenceLengthError(
            f"{len(y)} output samples cannot feed memory depth {memory_depth}"
        )
    start = delay + memory_depth - 1
    return np.asarray(z)[start : start + length]


def postdistortion_error(
    pd: PredistorterMatrix,
    z: ComplexSequence,
    y: ComplexSequence,
    diagnostics: Optional[ClampCounter] = None,
) -> PostdistortionError:
    target = aligned_target(z.samples, y.samples, pd.Q)
    estimate = apply_predistorter(pd, y, diagnostics).samples
    errors = target - estimate
    return PostdistortionError(errors, float(np.sum(np.abs(errors) ** 2)))


class SeparableRegression:
    """
    The least-squares problem behind a postdistorter fit.

    psi[q] holds the basis functions at |y_{n-q+1}| and taps[k] the signal
    tap of row k, both over the aligned output range.
    """

    def __init__(
        self,
        z: ComplexSequence,
        y: ComplexSequence,
        rows: int,
        memory_depth: int,
        basis: OrthonormalBasis,
        structure: Structure,
        tap_index: Sequence[int] = (),
        diagnostics: Optional[ClampCounter] = None,
    ):
        self.structure = Structure(structure)
        self.rows, self.memory_depth, self.basis = rows, memory_depth, basis
        self.tap_index = tuple(tap_index) or default_tap_index(
            self.structure, rows, memory_depth
        )
        self.target = aligned_target(z.samples, y.samples, memory_depth)
        samples = y.samples
        taps = tap_matrix(samples, memory_depth)
        self.taps = taps[np.array(self.tap_index) - 1]
        psi = basis.evaluate(clamp_envelope(np.abs(samples), diagnostics))
        length = taps.shape[1]
        self.psi = np.stack(
            [
                psi[:, memory_depth - 1 - q : memory_depth - 1 - q + length]
                for q in range(memory_depth)
            ]
        ).astype(np.complex128)

    @property
    def length(self) -> int:
        return self.target.size

    @property
    def degree_count(self) -> int:
        return self.basis.degree_count

    def target_power(self) -> float:
        return float(np.sum(np.abs(self.target) ** 2))

    def factors(self, coeffs: np.ndarray, idx=slice(None)) -> np.ndarray:
        return np.einsum("kqm,qml->kql", coeffs, self.psi[:, :, idx])

    def estimate_from_factors(self, factors: np.ndarray, idx=slice(None)) -> np.ndarray:
        if self.structure is Structure.ADDITIVE:
            combined = np.sum(factors, axis=1)
        else:
            combined = np.prod(factors, axis=1)
        return np.sum(self.taps[:, idx] * combined, axis=0)

    def objective(self, coeffs: np.ndarray, idx=slice(None)) -> float:
        estimate = self.estimate_from_factors(self.factors(coeffs, idx), idx)
        return float(np.sum(np.abs(self.target[idx] - estimate) ** 2))

    def partial_products(self, factors: np.ndarray, q: int) -> np.ndarray:
        """prod over q' != q of P_kq', shape (K, L)."""
        return np.prod(np.delete(factors, q, axis=1), axis=1)

    def gradient(
        self, coeffs: np.ndarray, idx=slice(None)
    ) -> Tuple[float, np.ndarray, np.ndarray]:
        """
        Objective, gradient dJ/dRe(u) + i dJ/dIm(u) for every u_kqm, and the
        residual, for the multiplicative form.
        """
        factors = self.factors(coeffs, idx)
        residual = self.target[idx] - self.estimate_from_factors(factors, idx)
        taps = self.taps[:, idx]
        grad = np.empty_like(coeffs)
        for q in range(self.memory_depth):
            sensitivity = taps * self.partial_products(factors, q)
            grad[:, q, :] = -2.0 * np.einsum(
                "l,kl,ml->km", residual, np.conj(sensitivity), np.conj(self.psi[q][:, idx])
            )
        return float(np.sum(np.abs(residual) ** 2)), grad, residual

    def directional_change(
        self, coeffs: np.ndarray, direction: np.ndarray, idx=slice(None)
    ) -> np.ndarray:
        """First-order change of the estimate along `direction`."""
        factors = self.factors(coeffs, idx)
        moved = self.factors(direction, idx)
        change = np.zeros(factors.shape[2], dtype=np.complex128)
        for q in range(self.memory_depth):
            change += np.sum(
                self.taps[:, idx] * self.partial_products(factors, q) * moved[:, q],
                axis=0,
            )
        return change

    def residual_nmse_db(self, objective: float) -> float:
        power = self.target_power()
        if power == 0 or objective <= 0:
            return -300.0
        return float(10.0 * np.log10(objective / power))


def solve_regularized(
    design: np.ndarray, target: np.ndarray, regularization: float
) -> np.ndarray:
    """
    Least squares with Tikhonov term regularization * trace(A^H A), solved by
    orthogonal factorisation of the augmented system.
    """
    rows, unknowns = design.shape
    if rows < unknowns:
        logger.warning(
            f"Rank-deficient least squares: {rows} equations for {unknowns} "
            f"unknowns; relying on regularisation {regularization:g}"
        )
    lam = regularization * float(np.sum(np.abs(design) ** 2))
    if lam > 0:
        design = np.vstack([design, np.sqrt(lam) * np.eye(unknowns)])
        target = np.concatenate([target, np.zeros(unknowns, dtype=target.dtype)])
    solution, _, rank, _ = linalg.lstsq(design, target, lapack_driver="gelsd")
    if rank < unknowns:
        logger.warning(f"Least-squares design has rank {rank} < {unknowns}")
    return solution


def _folded_coefficients(pd: PredistorterMatrix) -> np.ndarray:
    """Coefficients with the row scales absorbed, so that a_k = 1."""
    coeffs = pd.coefficients()
    if pd.structure is Structure.ADDITIVE:
        return coeffs * pd.scales[:, None, None]
    coeffs[:, 0, :] *= pd.scales[:, None]
    return coeffs


def _initial_matrix(
    initial: Optional[PredistorterMatrix],
    structure: Structure,
    rows: int,
    memory_depth: int,
    basis: OrthonormalBasis,
) -> PredistorterMatrix:
    if initial is None:
        return identity(structure, rows, memory_depth, basis)
    if (initial.K, initial.Q) != (rows, memory_depth):
        raise StructureError(
            f"initial matrix is {initial.K}x{initial.Q}, expected {rows}x{memory_depth}"
        )
    if initial.basis is not basis:
        raise StructureError("initial matrix uses a different basis")
    return initial


def fit_additive(
    z: ComplexSequence,
    y: ComplexSequence,
    rows: int,
    memory_depth: int,
    basis: OrthonormalBasis,
    cfg: Optional[TrainingConfig] = None,
    diagnostics: Optional[ClampCounter] = None,
) -> PredistorterMatrix:
    """Exact linear least squares for the additive structure."""
    cfg = cfg or TrainingConfig()
    problem = SeparableRegression(
        z, y, rows, memory_depth, basis, Structure.ADDITIVE, diagnostics=diagnostics
    )
    design = (problem.taps[:, None, None, :] * problem.psi[None, :, :, :]).reshape(
        -1, problem.length
    ).T
    solution = solve_regularized(design, problem.target, cfg.inner_ls_regularization)
    coeffs = solution.reshape(rows, memory_depth, basis.degree_count)
    residual = problem.residual_nmse_db(problem.objective(coeffs))
    logger.info(f"Additive fit {rows}x{memory_depth}: residual {residual:.2f} dB")
    return PredistorterMatrix.from_coefficients(
        Structure.ADDITIVE, coeffs, basis, problem.tap_index
    )


def _revive_degenerate_rows(
    problem: SeparableRegression,
    coeffs: np.ndarray,
    factors: np.ndarray,
    q: int,
    one: np.ndarray,
) -> bool:
    """
    Rows whose partial products vanish cannot move column q. Their zero
    factors are reset to 1 and column q is zeroed, so the row still
    contributes nothing until column q is solved.
    """
    revived = False
    products = problem.partial_products(factors, q)
    for k in range(problem.rows):
        if np.any(products[k]):
            continue
        for other in range(problem.memory_depth):
            if other != q and not np.any(coeffs[k, other]):
                coeffs[k, other] = one
        coeffs[k, q] = 0
        revived = True
        logger.warning(f"Degenerate column {q + 1} in row {k + 1}; reinitialised to 1")
    return revived


def fit_multiplicative_als(
    z: ComplexSequence,
    y: ComplexSequence,
    rows: int,
    memory_depth: int,
    basis: OrthonormalBasis,
    cfg: Optional[TrainingConfig] = None,
    structure: Structure = Structure.DIAGONAL,
    initial: Optional[PredistorterMatrix] = None,
    diagnostics: Optional[ClampCounter] = None,
) -> TrainingRun:
    """
    Alternating least squares over the columns of the matrix: with every
    other column fixed the objective is linear in column q for all rows at
    once, and that subproblem is solved exactly. A column update is only
    kept if it does not raise the objective.
    """
    cfg = cfg or TrainingConfig()
    structure = Structure(structure)
    if not structure.is_multiplicative:
        raise StructureError("ALS fits the multiplicative structures")
    initial = _initial_matrix(initial, structure, rows, memory_depth, basis)
    problem = SeparableRegression(
        z, y, rows, memory_depth, basis, structure, initial.tap_index, diagnostics
    )
    coeffs = _folded_coefficients(initial)
    current = problem.objective(coeffs)
    trace = [current]
    if cfg.max_iterations == 0:
        return TrainingRun(
            trace, problem.residual_nmse_db(current), initial,
            clamp_count=diagnostics.count if diagnostics else 0,
        )

    one = basis.project(lambda r: np.ones(r.shape))
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iterations + 1):
        previous = current
        for q in range(memory_depth):
            factors = problem.factors(coeffs)
            if _revive_degenerate_rows(problem, coeffs, factors, q, one):
                factors = problem.factors(coeffs)
            sensitivity = problem.taps * problem.partial_products(factors, q)
            design = (sensitivity[:, None, :] * problem.psi[q][None, :, :]).reshape(
                -1, problem.length
            ).T
            solution = solve_regularized(
                design, problem.target, cfg.inner_ls_regularization
            )
            candidate = coeffs.copy()
            candidate[:, q, :] = solution.reshape(rows, basis.degree_count)
            value = problem.objective(candidate)
            if value <= current:
                coeffs, current = candidate, value
        trace.append(current)
        logger.debug(f"ALS iteration {iterations}: objective {current:.6e}")
        if previous - current <= cfg.convergence_tol * previous:
            converged = True
            break

    final = PredistorterMatrix.from_coefficients(
        structure, coeffs, basis, problem.tap_index
    )
    residual = problem.residual_nmse_db(current)
    logger.info(
        f"ALS fit finished after {iterations} iteration(s): residual {residual:.2f} dB"
    )
    return TrainingRun(
        trace,
        residual,
        final,
        clamp_count=diagnostics.count if diagnostics else 0,
        iterations=iterations,
        converged=converged,
    )


def _real_inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.real(np.vdot(a, b)))


def _line_search(
    problem: SeparableRegression,
    coeffs: np.ndarray,
    direction: np.ndarray,
    grad: np.ndarray,
    objective: float,
    residual: np.ndarray,
    idx,
) -> Optional[float]:
    """
    Backtracking from the Gauss-Newton step along `direction` until the
    Armijo condition holds on the minibatch.
    """
    slope = _real_inner(grad, direction)
    if slope >= 0:
        return None
    change = problem.directional_change(coeffs, direction, idx)
    curvature = float(np.sum(np.abs(change) ** 2))
    if curvature == 0:
        return None
    step = _real_inner(change, residual) / curvature
    if step <= 0:
        step = 1.0
    for _ in range(MAX_BACKTRACKS):
        trial = problem.objective(coeffs + step * direction, idx)
        if trial <= objective + ARMIJO_SLOPE * step * slope:
            return step
        step *= 0.5
    return None


def fit_multiplicative_scg(
    z: ComplexSequence,
    y: ComplexSequence,
    rows: int,
    memory_depth: int,
    basis: OrthonormalBasis,
    cfg: Optional[TrainingConfig] = None,
    structure: Structure = Structure.DIAGONAL,
    initial: Optional[PredistorterMatrix] = None,
    diagnostics: Optional[ClampCounter] = None,
) -> TrainingRun:
    """
    Minibatch nonlinear conjugate gradient (Polak-Ribiere) on the basis
    coefficients, with an analytic gradient and backtracking line search.
    """
    cfg = cfg or TrainingConfig()
    structure = Structure(structure)
    if not structure.is_multiplicative:
        raise StructureError("SCG fits the multiplicative structures")
    initial = _initial_matrix(initial, structure, rows, memory_depth, basis)
    problem = SeparableRegression(
        z, y, rows, memory_depth, basis, structure, initial.tap_index, diagnostics
    )
    coeffs = _folded_coefficients(initial)
    one = basis.project(lambda r: np.ones(r.shape))
    if not np.any(coeffs) and memory_depth > 1:
        # Zero start is a saddle; reopen columns 2..Q so column 1 can move.
        coeffs[:, 1:, :] = one
        logger.warning("All-zero start: columns 2..Q reinitialised to 1")

    rng = np.random.default_rng(cfg.seed)
    batch = min(cfg.scg_batch_size or cfg.samples_per_iteration, problem.length)
    current = problem.objective(coeffs)
    trace = [current]
    previous_grad = previous_direction = None
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iterations + 1):
        if batch < problem.length:
            idx = np.sort(rng.choice(problem.length, size=batch, replace=False))
        else:
            idx = slice(None)
        objective, grad, residual = problem.gradient(coeffs, idx)
        if not np.any(grad):
            converged = True
            break
        if previous_grad is None:
            direction = -grad
        else:
            beta = _real_inner(grad, grad - previous_grad) / _real_inner(
                previous_grad, previous_grad
            )
            direction = -grad + max(beta, 0.0) * previous_direction
        step = _line_search(problem, coeffs, direction, grad, objective, residual, idx)
        if step is None:
            logger.warning(
                f"SCG line search failed at iteration {iterations}; "
                f"restarting along steepest descent"
            )
            direction = -grad
            step = _line_search(
                problem, coeffs, direction, grad, objective, residual, idx
            )
        if step is None:
            previous_grad = previous_direction = None
            trace.append(current)
            continue
        coeffs = coeffs + step * direction
        previous_grad, previous_direction = grad, direction
        last, current = current, problem.objective(coeffs)
        trace.append(current)
        logger.debug(f"SCG iteration {iterations}: objective {current:.6e}")
        if 0 <= last - current <= cfg.convergence_tol * last:
            converged = True
            break

    final = PredistorterMatrix.from_coefficients(
        structure, coeffs, basis, problem.tap_index
    )
    residual_db = problem.residual_nmse_db(current)
    logger.info(
        f"SCG fit finished after {iterations} iteration(s): residual {residual_db:.2f} dB"
    )
    return TrainingRun(
        trace,
        residual_db,
        final,
        clamp_count=diagnostics.count if diagnostics else 0,
        iterations=iterations,
        converged=converged,
    )


def fit_postdistorter(
    z: ComplexSequence,
    y: ComplexSequence,
    layout: PredistorterLayout,
    basis: OrthonormalBasis,
    cfg: TrainingConfig,
    initial: Optional[PredistorterMatrix] = None,
    diagnostics: Optional[ClampCounter] = None,
) -> TrainingRun:
    args = (z, y, layout.rows, layout.memory_depth, basis, cfg)
    if layout.structure is Structure.ADDITIVE:
        before = None
        if initial is not None:
            before = postdistortion_error(initial, z, y).objective
        pd = fit_additive(*args, diagnostics=diagnostics)
        after = postdistortion_error(pd, z, y)
        power = float(np.sum(np.abs(aligned_target(z.samples, y.samples, pd.Q)) ** 2))
        residual = 10.0 * np.log10(max(after.objective / power, 1e-30))
        trace = [after.objective] if before is None else [before, after.objective]
        return TrainingRun(
            trace, residual, pd,
            clamp_count=diagnostics.count if diagnostics else 0,
            iterations=1, converged=True,
        )
    fit = fit_multiplicative_scg if cfg.solver is Solver.SCG else fit_multiplicative_als
    return fit(
        *args, structure=layout.structure, initial=initial, diagnostics=diagnostics
    )


def indirect_learning_loop(
    model: HpaModel,
    waveform: WaveformConfig,
    layout: PredistorterLayout,
    cfg: TrainingConfig,
    evaluation: Optional[ComplexSequence] = None,
) -> TrainingRun:
    """
    Alternate between running the current predistorter through the amplifier
    and refitting the postdistorter on the observed (z, y) pairs.

    The basis weight is the envelope density of the evaluation block, which
    also serves for the cascade NMSE F(P(x)) against x after every round.
    """
    if evaluation is None:
        evaluation = generate(waveform)
    basis = build_basis(
        envelope_histogram(evaluation, cfg.histogram_bins), layout.degree_count
    )
    pd = identity(layout.structure, layout.rows, layout.memory_depth, basis)
    diagnostics = ClampCounter()
    baseline = nmse_db(evaluation, model(evaluation))
    logger.info(f"No-predistortion cascade NMSE {baseline:.2f} dB")

    seeds = np.random.SeedSequence([cfg.seed, waveform.seed]).generate_state(
        cfg.learning_iterations
    )
    block = replace(
        waveform, num_samples=cfg.samples_per_iteration + layout.memory_depth - 1
    )
    objective_trace, cascade_trace = [], []
    fit = None
    for round_index, seed in enumerate(seeds, start=1):
        x = generate(replace(block, seed=int(seed)))
        z = apply_predistorter(pd, x, diagnostics)
        y = model(z)
        fit = fit_postdistorter(z, y, layout, basis, cfg, pd, diagnostics)
        pd = fit.final_matrix
        objective_trace.append(fit.objective_trace[-1])
        cascade = nmse_db(evaluation, model(apply_predistorter(pd, evaluation)))
        cascade_trace.append(cascade)
        logger.info(
            f"Learning round {round_index}: postdistortion residual "
            f"{fit.residual_nmse_db:.2f} dB, cascade NMSE {cascade:.2f} dB"
        )

    return TrainingRun(
        objective_trace,
        fit.residual_nmse_db,
        pd,
        clamp_count=diagnostics.count,
        iterations=len(cascade_trace),
        converged=fit.converged,
        cascade_nmse_trace=cascade_trace,
        baseline_nmse_db=baseline,
        cascade_lag=cascade_delay(layout, model),
    )


def cascade_delay(layout: PredistorterLayout, model: HpaModel) -> int:
    """Samples dropped in front by the predistorter and amplifier together."""
    return layout.memory_depth - 1 + model.memory_depth - 1


def cascade_output(
    pd: PredistorterMatrix, model: HpaModel, x: ComplexSequence
) -> ComplexSequence:
    return model(apply_predistorter(pd, x))
