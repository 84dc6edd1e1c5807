"""
Experiment runner: declarative scenario configs in, persisted artifacts out
"""

import csv
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import yaml
from django.conf import settings

from .basis import DEFAULT_LUT_SIZE
from .exceptions import ConfigurationError
from .hpa import (
    DEFAULT_COEFFICIENT_FILE,
    HpaKind,
    HpaModel,
    RappCurve,
    load_coefficients,
    normalize_unit_gain,
)
from .metrics import (
    adjacent_channel_power_db,
    analysis_bands,
    nmse_db,
    shoulder_level_db,
    welch_psd,
)
from .models import ExperimentRun, RunArtifact
from .predistorter import (
    PredistorterMatrix,
    apply_predistorter,
    export_luts,
    load,
    save,
)
from .signals import WaveformConfig, generate
from .training import (
    PredistorterLayout,
    TrainingConfig,
    TrainingRun,
    cascade_output,
    indirect_learning_loop,
)

logger = logging.getLogger(__name__)

REPORT_NAME = "report.yaml"
PLOT_GRID_POINTS = 101
SCENARIO_SECTIONS = {
    "scenario_name",
    "waveform",
    "hpa",
    "predistorter",
    "training",
    "outputs",
}


@dataclass(frozen=True)
class HpaSpec:
    kind: HpaKind = HpaKind.MEMORY_POLYNOMIAL
    coefficient_file: Optional[Path] = None
    cross_gain: complex = 0.5
    rapp: Optional[RappCurve] = None
    normalize: bool = True

    def build(self) -> HpaModel:
        if self.kind is HpaKind.IDENTITY:
            model = HpaModel.identity()
        elif self.kind is HpaKind.STATIC_NONLINEARITY:
            model = HpaModel.static(self.rapp or RappCurve())
        else:
            grid = load_coefficients(self.coefficient_file or DEFAULT_COEFFICIENT_FILE)
            cross = (
                self.cross_gain
                if self.kind is HpaKind.MEMORY_POLYNOMIAL_CROSS
                else None
            )
            model = HpaModel.memory_polynomial(grid, cross_gain=cross)
        if self.normalize:
            model = normalize_unit_gain(
                model,
                length=settings.DPD_GAIN_EXCITATION_LENGTH,
                seed=settings.DPD_GAIN_EXCITATION_SEED,
            )
        return model


@dataclass(frozen=True)
class ExperimentConfig:
    scenario_name: str
    waveform: WaveformConfig
    hpa: HpaSpec
    predistorter: PredistorterLayout
    training: TrainingConfig
    outputs: Path
    lut_size: int = DEFAULT_LUT_SIZE
    source: Optional[Path] = None

    def echo(self) -> Dict[str, Any]:
        """Plain-data copy of the config for the run report."""
        waveform = asdict(self.waveform)
        waveform["kind"] = self.waveform.kind.value
        waveform["modulation"] = self.waveform.modulation.value
        waveform["tone_frequencies"] = list(self.waveform.tone_frequencies)
        training = asdict(self.training)
        training["solver"] = self.training.solver.value
        return {
            "scenario_name": self.scenario_name,
            "waveform": waveform,
            "hpa": {
                "kind": self.hpa.kind.value,
                "coefficient_file": (
                    self.hpa.coefficient_file.name
                    if self.hpa.coefficient_file
                    else None
                ),
                "cross_gain": [self.hpa.cross_gain.real, self.hpa.cross_gain.imag],
                "rapp": asdict(self.hpa.rapp) if self.hpa.rapp else None,
                "normalize": self.hpa.normalize,
            },
            "predistorter": {
                "structure": self.predistorter.structure.value,
                "rows": self.predistorter.rows,
                "memory_depth": self.predistorter.memory_depth,
                "degree_count": self.predistorter.degree_count,
                "lut_size": self.lut_size,
            },
            "training": training,
        }


def _section(raw: Dict[str, Any], name: str) -> Dict[str, Any]:
    section = raw.get(name) or {}
    if not isinstance(section, dict):
        raise ConfigurationError(f"section {name!r} must be a mapping")
    return dict(section)


def _complex(value: Any, name: str) -> complex:
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    try:
        return complex(value)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"{name} must be a number or [re, im]") from e


def _build(cls, section: Dict[str, Any], name: str):
    try:
        return cls(**section)
    except TypeError as e:
        raise ConfigurationError(f"section {name!r}: {e}") from e


def _enum(cls, value):
    try:
        return cls(value)
    except ValueError as e:
        raise ConfigurationError(str(e)) from e


def _resolve_coefficients(value: Optional[str], base: Path) -> Optional[Path]:
    if value is None:
        return None
    for candidate in (base / value, DEFAULT_COEFFICIENT_FILE.parent / value):
        if candidate.is_file():
            return candidate.resolve()
    raise ConfigurationError(f"coefficient file not found: {value}")


def _resolve_outputs(value: Optional[str], out: Optional[Union[str, Path]]) -> Path:
    if out is not None:
        return Path(out).resolve()
    if not value:
        raise ConfigurationError("config needs an 'outputs' directory")
    path = Path(value)
    return path if path.is_absolute() else Path(settings.DPD_OUTPUT_ROOT) / path


def parse_experiment_config(
    raw: Dict[str, Any],
    base: Path,
    seed: Optional[int] = None,
    out: Optional[Union[str, Path]] = None,
) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError("experiment config must be a mapping")
    unknown = set(raw) - SCENARIO_SECTIONS
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(sorted(unknown))}")

    waveform = _section(raw, "waveform")
    if "tone_frequencies" in waveform:
        waveform["tone_frequencies"] = tuple(waveform["tone_frequencies"])
    hpa = _section(raw, "hpa")
    predistorter = _section(raw, "predistorter")
    training = _section(raw, "training")
    if seed is not None:
        waveform["seed"] = seed
        training["seed"] = seed
    training.setdefault("histogram_bins", settings.DPD_HISTOGRAM_BINS)
    lut_size = int(predistorter.pop("lut_size", settings.DPD_LUT_SIZE))

    rapp = hpa.pop("rapp", None)
    hpa_spec = _build(
        HpaSpec,
        {
            "kind": _enum(HpaKind, hpa.pop("kind", HpaKind.MEMORY_POLYNOMIAL.value)),
            "coefficient_file": _resolve_coefficients(
                hpa.pop("coefficient_file", None), base
            ),
            "cross_gain": _complex(hpa.pop("cross_gain", 0.5), "cross_gain"),
            "rapp": _build(RappCurve, rapp, "hpa.rapp") if rapp else None,
            "normalize": bool(hpa.pop("normalize", True)),
            **hpa,
        },
        "hpa",
    )
    return ExperimentConfig(
        scenario_name=str(raw.get("scenario_name") or "unnamed"),
        waveform=_build(WaveformConfig, waveform, "waveform"),
        hpa=hpa_spec,
        predistorter=_build(PredistorterLayout, predistorter, "predistorter"),
        training=_build(TrainingConfig, training, "training"),
        outputs=_resolve_outputs(raw.get("outputs"), out),
        lut_size=lut_size,
    )


def load_experiment_config(
    path: Union[str, Path],
    seed: Optional[int] = None,
    out: Optional[Union[str, Path]] = None,
) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ConfigurationError(f"{path}: {e}") from e
    cfg = parse_experiment_config(raw, path.parent, seed=seed, out=out)
    return ExperimentConfig(**{**cfg.__dict__, "source": path.resolve()})


@dataclass
class RunReport:
    scenario_name: str
    seed: int
    config: Dict[str, Any]
    summary: Dict[str, Any]
    files: List[str] = field(default_factory=list)
    path: Optional[Path] = None

    @property
    def directory(self) -> Path:
        return self.path.parent

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario_name": self.scenario_name,
            "seed": self.seed,
            "config": self.config,
            "summary": self.summary,
            "files": list(self.files),
        }


def load_report(path: Union[str, Path]) -> RunReport:
    path = Path(path)
    if path.is_dir():
        path = path / REPORT_NAME
    if not path.is_file():
        raise ConfigurationError(f"report file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
        return RunReport(
            scenario_name=raw["scenario_name"],
            seed=raw["seed"],
            config=raw["config"],
            summary=raw["summary"],
            files=list(raw["files"]),
            path=path,
        )
    except (yaml.YAMLError, KeyError, TypeError) as e:
        raise ConfigurationError(f"{path}: not a run report ({e})") from e


class _ArtifactWriter:
    """Keeps the manifest of everything a run writes."""

    def __init__(self, directory: Path):
        self.directory = directory
        self.files: List[str] = []

    def path(self, name: str) -> Path:
        target = self.directory / name
        target.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(name)
        return target

    def track(self, paths: List[Path]):
        self.files.extend(str(p.relative_to(self.directory)) for p in paths)


def _write_rows(path: Path, header: List[str], rows) -> Path:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _shoulder(spectrum, bands) -> float:
    in_band, lower, upper = bands
    return 0.5 * (
        shoulder_level_db(spectrum, in_band, lower)
        + shoulder_level_db(spectrum, in_band, upper)
    )


def _plot_rows(pd: PredistorterMatrix):
    """Unit-norm P_kq on a grid, and the row scales a_k."""
    scaled = pd.normalized()
    grid = np.linspace(0.0, 1.0, PLOT_GRID_POINTS)
    psi = pd.basis.evaluate(grid)
    functions = []
    for k, row in enumerate(scaled.entries, start=1):
        for q, entry in enumerate(row, start=1):
            values = entry.evaluate(grid, pd.basis, psi=psi)
            for r, v in zip(grid, values):
                functions.append((k, q, f"{r:.6g}", repr(v.real), repr(v.imag)))
    scales = [
        (k, repr(a.real), repr(a.imag), repr(abs(a)))
        for k, a in enumerate(scaled.scales, start=1)
    ]
    return functions, scales


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    """
    Train a predistorter by indirect learning and write spectra, traces,
    the trained predistorter, its LUTs, plot data and a report.
    """
    try:
        cfg.outputs.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigurationError(f"cannot create output directory {cfg.outputs}: {e}")
    if not os.access(cfg.outputs, os.W_OK):
        raise ConfigurationError(f"output directory {cfg.outputs} is not writable")

    logger.info(f"Running scenario {cfg.scenario_name} into {cfg.outputs}")
    model = cfg.hpa.build()
    x = generate(cfg.waveform)
    run: TrainingRun = indirect_learning_loop(
        model, cfg.waveform, cfg.predistorter, cfg.training, evaluation=x
    )
    pd = run.final_matrix

    no_dpd = model(x)
    with_dpd = cascade_output(pd, model, x)
    lut_matrix, lut_error = pd.to_lut(cfg.lut_size)
    with_lut = model(apply_predistorter(lut_matrix, x))

    segment = min(settings.DPD_WELCH_SEGMENT, len(with_dpd))
    spectra = {
        "input": welch_psd(x, segment),
        "hpa_no_dpd": welch_psd(no_dpd, segment),
        "hpa_with_dpd": welch_psd(with_dpd, segment),
    }
    bands = analysis_bands(cfg.waveform.occupied_band)
    shoulders = {name: _shoulder(s, bands) for name, s in spectra.items()}
    acp = {
        name: adjacent_channel_power_db(s, bands[0], bands[2])
        for name, s in spectra.items()
    }

    writer = _ArtifactWriter(cfg.outputs)
    for name, spectrum in spectra.items():
        spectrum.to_csv(writer.path(f"spectrum_{name}.csv"))
    _write_rows(
        writer.path("objective_trace.csv"),
        ["iteration", "objective", "cascade_nmse_db"],
        [
            (i, repr(objective), repr(cascade))
            for i, (objective, cascade) in enumerate(
                zip(run.objective_trace, run.cascade_nmse_trace), start=1
            )
        ],
    )
    save(pd, writer.path("predistorter.dpd"))
    lut_files, _ = export_luts(pd, cfg.outputs / "luts", cfg.lut_size)
    writer.track(lut_files)
    functions, scales = _plot_rows(pd)
    _write_rows(writer.path("functions.csv"), ["k", "q", "r", "re", "im"], functions)
    _write_rows(writer.path("scales.csv"), ["k", "re", "im", "abs"], scales)

    cascade = run.cascade_nmse_trace[-1]
    summary = {
        "baseline_nmse_db": float(run.baseline_nmse_db),
        "cascade_nmse_db": float(cascade),
        "nmse_improvement_db": float(run.baseline_nmse_db - cascade),
        "lut_cascade_nmse_db": float(nmse_db(x, with_lut)),
        "lut_max_interpolation_error": float(lut_error),
        "postdistortion_residual_db": float(run.residual_nmse_db),
        "shoulder_input_db": float(shoulders["input"]),
        "shoulder_no_dpd_db": float(shoulders["hpa_no_dpd"]),
        "shoulder_with_dpd_db": float(shoulders["hpa_with_dpd"]),
        "acp_input_db": float(acp["input"]),
        "acp_no_dpd_db": float(acp["hpa_no_dpd"]),
        "acp_with_dpd_db": float(acp["hpa_with_dpd"]),
        "iterations": int(run.iterations),
        "clamp_count": int(run.clamp_count),
        "cascade_lag": int(run.cascade_lag),
        "unit_gain_scale": float(model.unit_gain_scale),
    }
    report = RunReport(
        scenario_name=cfg.scenario_name,
        seed=int(cfg.training.seed),
        config=cfg.echo(),
        summary=summary,
        files=sorted(writer.files),
        path=cfg.outputs / REPORT_NAME,
    )
    report.path.write_text(yaml.safe_dump(report.to_dict(), sort_keys=True))
    logger.info(
        f"Scenario {cfg.scenario_name}: cascade NMSE {cascade:.2f} dB "
        f"(no DPD {run.baseline_nmse_db:.2f} dB), wrote {len(report.files)} files"
    )
    return report


def manifest_mismatch(report: RunReport) -> Dict[str, List[str]]:
    """Files listed but missing, and files present but not listed."""
    present = {
        str(p.relative_to(report.directory))
        for p in report.directory.rglob("*")
        if p.is_file() and p.name != REPORT_NAME
    }
    listed = set(report.files)
    return {
        "missing": sorted(listed - present),
        "unlisted": sorted(present - listed),
    }


COMPARED_METRICS = (
    "cascade_nmse_db",
    "nmse_improvement_db",
    "shoulder_with_dpd_db",
    "acp_with_dpd_db",
    "iterations",
)


@dataclass
class RunComparison:
    scenario_a: str
    scenario_b: str
    rows: List[Dict[str, Any]]
    waveform_mismatch: bool

    def delta(self, metric: str) -> float:
        for row in self.rows:
            if row["metric"] == metric:
                return row["delta"]
        raise KeyError(metric)

    def to_text(self) -> str:
        lines = [
            f"{'metric':<24}{self.scenario_a:>18}{self.scenario_b:>18}{'delta':>12}"
        ]
        for row in self.rows:
            lines.append(
                f"{row['metric']:<24}{row['a']:>18.3f}{row['b']:>18.3f}"
                f"{row['delta']:>12.3f}"
            )
        if self.waveform_mismatch:
            lines.append("WARNING: the runs used different waveform configs")
        return "\n".join(lines) + "\n"

    def write(self, stem: Union[str, Path]) -> List[Path]:
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        csv_path = _write_rows(
            stem.with_suffix(".csv"),
            ["metric", "a", "b", "delta"],
            [(r["metric"], r["a"], r["b"], r["delta"]) for r in self.rows],
        )
        text_path = stem.with_suffix(".txt")
        text_path.write_text(self.to_text())
        return [csv_path, text_path]


def compare_runs(
    report_a: Union[str, Path, RunReport], report_b: Union[str, Path, RunReport]
) -> RunComparison:
    """Side-by-side metrics; delta is b - a for NMSE figures, a - b for shoulders."""
    a = report_a if isinstance(report_a, RunReport) else load_report(report_a)
    b = report_b if isinstance(report_b, RunReport) else load_report(report_b)
    mismatch = a.config.get("waveform") != b.config.get("waveform")
    if mismatch:
        logger.warning(
            f"Comparing {a.scenario_name} and {b.scenario_name} with different waveforms"
        )
    rows = []
    for metric in COMPARED_METRICS:
        try:
            va, vb = float(a.summary[metric]), float(b.summary[metric])
        except KeyError as e:
            raise ConfigurationError(f"report lacks metric {e}") from e
        # positive delta means a is better
        if metric in ("cascade_nmse_db", "iterations"):
            delta = vb - va
        else:
            delta = va - vb
        rows.append({"metric": metric, "a": va, "b": vb, "delta": delta})
    return RunComparison(a.scenario_name, b.scenario_name, rows, mismatch)


def export_lut_file(
    predistorter_file: Union[str, Path], size: int, out: Optional[Union[str, Path]] = None
) -> List[Path]:
    path = Path(predistorter_file)
    if not path.is_file():
        raise ConfigurationError(f"predistorter file not found: {path}")
    pd = load(path)
    directory = Path(out) if out else path.parent / f"luts_{size}"
    written, _ = export_luts(pd, directory, size)
    return written


def _artifact_kind(name: str) -> str:
    if name.startswith("luts/"):
        return "lut"
    if name.startswith("spectrum_"):
        return "spectrum"
    if name.endswith(".dpd"):
        return "predistorter"
    return "trace" if name == "objective_trace.csv" else "plot"


def record_run(report: RunReport):
    """Store a finished run and its manifest in the run registry."""
    summary = report.summary
    run = ExperimentRun.objects.create(
        scenario_name=report.scenario_name,
        seed=report.seed,
        report_path=str(report.path),
        baseline_nmse_db=summary["baseline_nmse_db"],
        cascade_nmse_db=summary["cascade_nmse_db"],
        shoulder_no_dpd_db=summary["shoulder_no_dpd_db"],
        shoulder_with_dpd_db=summary["shoulder_with_dpd_db"],
        iterations=summary["iterations"],
    )
    RunArtifact.objects.bulk_create(
        RunArtifact(run=run, kind=_artifact_kind(name), path=name)
        for name in report.files
    )
    return run
