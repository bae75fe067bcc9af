"""
Experiment orchestration: single runs, parameter sweeps, the static inequality
suite and snapshot export. Everything a run produces lands in one directory:
series.csv, manifest.json and snapshots/.
"""
from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pandas as pd
from loguru import logger

from mcflab import diagnostics, export
from mcflab.config import (ChecksConfig, FlowConfig, ScenarioSpec, battery, config_hash, parse_config,
                           serialize_config)
from mcflab.curvature import CurvatureField, curvature_field, gradient_pinch_check, kato_check
from mcflab.flow import FlowState, RunResult, run_flow
from mcflab.geometry import Hypersurface
from mcflab.mcflab_common import (SERIES_COLUMNS, Backend, DiagnosticsError, ExportFormat, FlowMode, McfLabError,
                                  SingularMethod, StopCause, SweepKey, TestFunction, Verdict)
from mcflab.singularity import (BlowupFit, classify_blowup, estimate_singular_time, h_blowup_comparison,
                                pinching_check, roundness_of_attractor, theorem_case_split)

SERIES_FILE = "series.csv"
MANIFEST_FILE = "manifest.json"
SNAPSHOT_DIR = "snapshots"
EXPORT_DIR = "export"
SUMMARY_FILE = "summary.csv"
SUMMARY_COLUMNS = ["value", "initial_int_Ao2", "cause", "T_est", "typeI_verdict", "final_radius_spread"]
AREA_CONSERVATION_TOLERANCE = 1e-8
CAUCHY_SCHWARZ_TOLERANCE = 1e-9
THREADS_VARIABLE = "MCF_LAB_THREADS"


def _jsonable(value):
    """Replace non-finite floats by None and numpy scalars by Python ones."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        return float(value) if np.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_manifest(run_dir: Path, manifest: dict) -> Path:
    path = Path(run_dir) / MANIFEST_FILE
    path.write_text(json.dumps(_jsonable(manifest), indent=2), encoding="utf-8")
    return path


def read_manifest(run_dir: Path) -> dict:
    path = Path(run_dir) / MANIFEST_FILE
    if not path.is_file():
        raise McfLabError(f"No manifest in {run_dir}")
    return json.loads(path.read_text(encoding="utf-8"))


def write_series(records: list, path: Path) -> Path:
    """series.csv in the fixed column order; absent values are empty cells."""
    frame = pd.DataFrame([rec.to_row() for rec in records], columns=SERIES_COLUMNS)
    frame.to_csv(path, index=False, na_rep="", float_format="%.17g")
    return Path(path)


def read_series(path: Path, n: int = 2, backend: str = Backend.AXI.value,
                mode: str = FlowMode.UNNORMALIZED.value) -> list[diagnostics.DiagnosticsRecord]:
    frame = pd.read_csv(path)
    frame = frame.astype(object).where(frame.notna(), None)
    return [diagnostics.DiagnosticsRecord.from_row(row, n, backend, mode) for row in frame.to_dict("records")]


def cauchy_schwarz_violation(field: CurvatureField) -> float:
    """Largest amount by which H²/n exceeds |A|² at a node, relative to max|A|²."""
    deficit = field.mean_curvature ** 2 / field.n - field.norm_A_sq
    return float(max(np.max(deficit), 0.0) / max(float(np.max(field.norm_A_sq)), 1e-300))


# ---------------------------------------------------------------------------
# single run


@dataclass
class RunOutcome:
    run_dir: Path
    manifest: dict
    violations: list[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 2 if self.violations else 0


def _singularity(result: RunResult, config: FlowConfig, checks: ChecksConfig) -> BlowupFit:
    if config.mode == FlowMode.NORMALIZED or result.cause not in (StopCause.EXTINCTION, StopCause.BLOW_UP):
        return BlowupFit(None, SingularMethod.BLOWUP_RATE, None, Verdict.UNDETERMINED, [], (0, 0))
    method = SingularMethod.EXTINCTION if result.cause == StopCause.EXTINCTION else SingularMethod.BLOWUP_RATE
    try:
        T_est = estimate_singular_time(result.records, method).T_est
    except McfLabError as e:
        logger.warning(f"Singular time not estimated: {e}")
        T_est = None
    return classify_blowup(result.records, T_est, checks, method)


def _violations(result: RunResult, config: FlowConfig, monotone: dict[str, Optional[int]],
                fields: list[CurvatureField]) -> list[str]:
    """Hard invariants whose failure turns a run into an exit-2 finding."""
    records = result.records
    found = []
    if records[0].int_Ao2 < config.epsilon_knob and monotone.get("int_Ao2") is not None:
        found.append(f"int_Ao2 increased at step {monotone['int_Ao2']} below the small-energy threshold")
    if config.mode == FlowMode.NORMALIZED:
        drift = max(abs(rec.area - records[0].area) for rec in records) / records[0].area
        if drift > AREA_CONSERVATION_TOLERANCE:
            found.append(f"normalized area drifted by {drift:.3e}")
    for f in fields:
        excess = cauchy_schwarz_violation(f)
        if excess > CAUCHY_SCHWARZ_TOLERANCE:
            found.append(f"|A|^2 < H^2/n by {excess:.3e} (relative)")
    if records[0].backend == Backend.AXI.value:
        kato = [rec.step for rec in records if rec.kato_ok is False]
        pinch = [rec.step for rec in records if rec.gradient_pinch_ok is False]
        if kato:
            found.append(f"Kato inequality violated at {len(kato)} recorded steps (first {kato[0]})")
        if pinch:
            found.append(f"gradient pinching bound exceeded at {len(pinch)} recorded steps (first {pinch[0]})")
    for message in found:
        logger.error(f"Invariant violation: {message}")
    return found


def _max_of(records: list, key: str) -> Optional[float]:
    values = [rec.get(key) for rec in records if rec.get(key) is not None and np.isfinite(rec.get(key))]
    return float(max(values)) if values else None


def run_experiment(scenario: ScenarioSpec, config: FlowConfig, checks: Optional[ChecksConfig], out_dir: Path,
                   progress: Optional[Callable[[FlowState], None]] = None) -> RunOutcome:
    """
    Run one flow and persist series.csv, the snapshots and manifest.json.

    A failing run still leaves a manifest, flagged partial, before the error
    propagates.
    """
    checks = checks or ChecksConfig()
    run_dir = Path(out_dir)
    (run_dir / SNAPSHOT_DIR).mkdir(parents=True, exist_ok=True)
    manifest = {"config_hash": config_hash(scenario, config, checks),
                "config": serialize_config(scenario, config, checks),
                "scenario": scenario.model_dump(mode="json"),
                "backend": scenario.backend.value, "n": scenario.n, "mode": config.mode.value,
                "m_max": config.resolved_m_max(scenario.backend), "partial": True}
    start = time.perf_counter()
    try:
        result = run_flow(scenario, config, checks, progress)
    except McfLabError as e:
        manifest.update(cause=StopCause.ERROR.value, error=str(e), wall_time=time.perf_counter() - start)
        write_manifest(run_dir, manifest)
        raise
    wall_time = time.perf_counter() - start

    series_path = write_series(result.records, run_dir / SERIES_FILE)
    snapshots = []
    for snap in result.snapshots:
        path = export.write_snapshot(snap.surface, run_dir / SNAPSHOT_DIR / f"snap_{snap.step:07d}")
        snapshots.append({"step": snap.step, "t": snap.t, "t_tilde": snap.t_tilde, "psi": snap.psi,
                          "num_nodes": snap.surface.num_nodes, "path": str(path.relative_to(run_dir))})
    logger.info(f"Wrote {series_path} and {len(snapshots)} snapshots")

    m_max = config.resolved_m_max(scenario.backend)
    first, last = result.snapshots[0].surface, result.final_state.surface
    final_field = curvature_field(last, m_max)
    monotone = {}
    for key in diagnostics.MONITORED_KEYS:
        index = diagnostics.monotonicity_monitor(result.records, key, checks.slack_policy())
        monotone[key] = None if index is None else result.records[index].step
    violations = _violations(result, config, monotone, [curvature_field(first, 0), final_field])

    fit = _singularity(result, config, checks)
    h_report = h_blowup_comparison(result.records, checks)
    pinching = pinching_check(result.records, checks.pinch_slack)
    roundness = roundness_of_attractor(last, final_field)
    manifest.update(
        partial=False, cause=result.cause.value, message=result.message, steps=result.final_state.step,
        final_t=result.final_state.t, final_t_tilde=result.final_state.t_tilde, wall_time=wall_time,
        initial_max_A=result.initial_max_A, series=SERIES_FILE, snapshots=snapshots,
        remesh_events=[{"step": e.step, "area_drift": e.area_drift, "energy_drift": e.energy_drift}
                       for e in result.remesh_events],
        singularity=fit.to_dict(),
        h_vs_A={"final_ratio": h_report.final_ratio, "slope": h_report.slope, "verdict": h_report.verdict.value},
        pinching={"running_max": pinching.running_max, "onset_step": pinching.onset_step,
                  "max_relative_excess": pinching.max_relative_excess, "bounded": pinching.bounded},
        roundness={"max_traceless": roundness.max_traceless, "radius_spread": roundness.radius_spread},
        monotonicity=monotone,
        case_split=theorem_case_split(result.records, config).to_dict(),
        inequality_maxima={key: _max_of(result.records, key)
                           for key in ("topping_ratio", "gradient_pinch_ratio", "kato_margin", "pinch_ratio")},
        violations=violations)
    write_manifest(run_dir, manifest)
    return RunOutcome(run_dir, manifest, violations)


def run_config(config_path: Path, out_dir: Path, seed: Optional[int] = None) -> RunOutcome:
    scenario, config, checks = parse_config(config_path)
    if seed is not None:
        scenario = ScenarioSpec.model_validate({**scenario.model_dump(), "seed": seed})
    return run_experiment(scenario, config, checks, out_dir)


# ---------------------------------------------------------------------------
# sweeps


def sweep_row(scenario: ScenarioSpec, config: FlowConfig, key: SweepKey, value: float) -> tuple[ScenarioSpec, FlowConfig]:
    """The scenario and flow config of one sweep row."""
    if key == SweepKey.CFL:
        return scenario, FlowConfig.model_validate({**config.model_dump(), "cfl": value})
    update = int(value) if key == SweepKey.RESOLUTION else value
    return ScenarioSpec.model_validate({**scenario.model_dump(), key.value: update}), config


def _run_row(args: tuple) -> dict:
    scenario, config, checks, key, value, row_dir = args
    row = dict.fromkeys(SUMMARY_COLUMNS)
    row.update(value=value, cause=StopCause.ERROR.value)
    try:
        scenario, config = sweep_row(scenario, config, key, value)
        outcome = run_experiment(scenario, config, checks, row_dir)
    except (McfLabError, ValueError) as e:
        logger.error(f"Sweep row {key.value}={value} failed: {e}")
        return row
    manifest = outcome.manifest
    row.update(initial_int_Ao2=manifest["case_split"]["initial_int_Ao2"], cause=manifest["cause"],
               T_est=manifest["singularity"]["T_est"], typeI_verdict=manifest["singularity"]["typeI_verdict"],
               final_radius_spread=manifest["roundness"]["radius_spread"])
    return row


def sweep_workers(rows: int) -> int:
    limit = os.environ.get(THREADS_VARIABLE)
    workers = int(limit) if limit else (os.cpu_count() or 1)
    return max(1, min(workers, rows))


def run_sweep(scenario: ScenarioSpec, config: FlowConfig, checks: Optional[ChecksConfig], key: SweepKey,
              values: list[float], out_dir: Path) -> pd.DataFrame:
    """
    One isolated run per value, each in its own directory, then summary.csv.

    Rows run concurrently in worker processes; a failed row is recorded with
    cause "error" and the sweep continues.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(scenario, config, checks, key, value, out_dir / f"row_{i:03d}_{key.value}_{value:g}")
            for i, value in enumerate(values)]
    if not jobs:
        rows = []
    elif sweep_workers(len(jobs)) == 1:
        rows = [_run_row(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=sweep_workers(len(jobs))) as pool:
            rows = list(pool.map(_run_row, jobs))
    summary = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
    summary.to_csv(out_dir / SUMMARY_FILE, index=False, na_rep="", float_format="%.17g")
    logger.info(f"Sweep over {key.value} finished: {len(rows)} rows written to {out_dir / SUMMARY_FILE}")
    return summary


# ---------------------------------------------------------------------------
# inequality suite


@dataclass
class CheckSuiteReport:
    rows: dict[str, dict]
    violations: list[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 2 if self.violations else 0

    def maxima(self) -> dict[str, Optional[float]]:
        columns = {key for row in self.rows.values() for key in row if key not in ("backend", "nodes")}
        maxima = {}
        for column in sorted(columns):
            values = [row[column] for row in self.rows.values()
                      if isinstance(row.get(column), float) and np.isfinite(row[column])]
            maxima[column] = max(values) if values else None
        return maxima


def _refined(spec: ScenarioSpec, factor: float) -> ScenarioSpec:
    return ScenarioSpec.model_validate({**spec.model_dump(), "resolution": int(spec.resolution * factor)})


def _suite_row(surface: Hypersurface, checks: ChecksConfig) -> tuple[dict, list[str]]:
    m_max = 2 if surface.backend == Backend.AXI else 1
    field = curvature_field(surface, m_max)
    row: dict = {"backend": surface.backend.value, "nodes": surface.num_nodes}
    for choice in TestFunction:
        report = diagnostics.michael_simon_check(surface, field, choice, zero_threshold=checks.zero_threshold)
        row[f"ms_{choice.value}"] = report.ratio
    row["ms_original"] = diagnostics.michael_simon_check(surface, field, TestFunction.CONSTANT, original=True).ratio
    try:
        row["hamilton"] = diagnostics.hamilton_interpolation_check(surface, field, checks.zero_threshold).ratio
    except DiagnosticsError:
        row["hamilton"] = None
    row["topping"] = diagnostics.topping_check(surface, field)
    kato = kato_check(surface, field, checks.kato_slack_coeff, checks.kato_slack_power)
    pinch = gradient_pinch_check(surface, field, checks.zero_threshold, checks.pinch_slack)
    row["kato_margin"] = kato.max_margin
    row["gradient_pinch"] = pinch.ratio
    row["cauchy_schwarz"] = cauchy_schwarz_violation(field)
    hard = []
    if row["cauchy_schwarz"] > CAUCHY_SCHWARZ_TOLERANCE:
        hard.append("cauchy_schwarz")
    if surface.backend == Backend.AXI:
        if not kato.ok:
            hard.append("kato")
        if not pinch.ok:
            hard.append("gradient_pinch")
    return row, hard


def run_check_suite(n: int = 2, checks: Optional[ChecksConfig] = None) -> CheckSuiteReport:
    """
    Evaluate the pointwise and integral inequalities on the frozen battery, at
    the battery resolution and at half of it for the refinement trend.
    """
    checks = checks or ChecksConfig()
    report = CheckSuiteReport({})
    for name, spec in battery(n, checks):
        row, hard = _suite_row(spec.build_surface(), checks)
        coarse, _ = _suite_row(_refined(spec, 0.5).build_surface(), checks)
        for key in ("kato_margin", "gradient_pinch", "topping"):
            row[f"{key}_coarse"] = coarse[key]
        report.rows[name] = row
        report.violations += [f"{name}: {kind}" for kind in hard]
        logger.info(f"Checked {name} ({row['nodes']} nodes)")
    for message in report.violations:
        logger.error(f"Hard inequality violated on {message}")
    return report


# ---------------------------------------------------------------------------
# export


def export_run(run_dir: Path, fmt: ExportFormat) -> list[Path]:
    """
    Re-emit every snapshot of a run into run_dir/export/<format>/; repeated
    calls overwrite the same files.
    """
    run_dir = Path(run_dir)
    manifest = read_manifest(run_dir)
    backend = Backend(manifest["backend"])
    if fmt == ExportFormat.PROFILE_CSV and backend != Backend.AXI:
        raise McfLabError("profile-csv export needs an axi run")
    target = run_dir / EXPORT_DIR / fmt.value
    target.mkdir(parents=True, exist_ok=True)
    paths = []
    for snap in manifest.get("snapshots", []):
        surface = export.read_snapshot(run_dir / snap["path"], backend, manifest["n"])
        paths.append(export.export_surface(surface, fmt, target / f"snap_{snap['step']:07d}", manifest.get("m_max")))
    logger.info(f"Exported {len(paths)} snapshots as {fmt.value} to {target}")
    return paths
