"""
Post-run analysis of a time series near its end: singular time, blow-up rate,
mean curvature versus full curvature growth, convexity events and roundness.

All functions are pure over lists of DiagnosticsRecord, so they replay on
series read back from disk.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from mcflab.config import ChecksConfig, FlowConfig
from mcflab.curvature import CurvatureField, curvature_field
from mcflab.diagnostics import DiagnosticsRecord
from mcflab.geometry import Hypersurface, area_centroid
from mcflab.mcflab_common import HVerdict, InsufficientDataError, SingularMethod, Verdict, unit_sphere_area

MIN_FIT_RECORDS = 20
EXTINCTION_AREA_FRACTION = 0.1


@dataclass(frozen=True)
class SingularTime:
    """Root of a linear fit y(t) = a + b t over the terminal window; None when undetermined."""
    T_est: Optional[float]
    method: SingularMethod
    fit_window: tuple[int, int]
    slope: float
    intercept: float


def _fit_quantity(series: Sequence[DiagnosticsRecord], method: SingularMethod) -> np.ndarray:
    if method == SingularMethod.EXTINCTION:
        n = series[0].n
        area = np.array([rec.area for rec in series])
        # R_eff² is exactly linear in t for shrinking spheres
        return (area / unit_sphere_area(n)) ** (2.0 / n)
    return 1.0 / np.array([rec.sup_A for rec in series]) ** 2


def _terminal_window(y: np.ndarray) -> np.ndarray:
    """Indices of the last decade of decay of y, or the final third of the series."""
    window = np.flatnonzero(y <= 0.1 * y[0])
    if len(window) >= MIN_FIT_RECORDS:
        return np.arange(window[0], len(y))
    return np.arange(2 * len(y) // 3, len(y))


def estimate_singular_time(series: Sequence[DiagnosticsRecord], method: Optional[SingularMethod] = None,
                           trim: float = 0.0) -> SingularTime:
    """
    Extrapolate the singular time from the end of an unnormalized run.

    Args:
        series: records in step order
        method: R_eff² extrapolation (extinction) or a 1/sup|A|² line (blow-up rate);
            chosen from the final area when None
        trim: fraction of the terminal window dropped from its end, for window-stability studies

    Raises:
        InsufficientDataError: fewer than ``MIN_FIT_RECORDS`` records to fit
    """
    if len(series) < MIN_FIT_RECORDS:
        raise InsufficientDataError(f"Need at least {MIN_FIT_RECORDS} records, got {len(series)}")
    if method is None:
        shrunk = series[-1].area < EXTINCTION_AREA_FRACTION * series[0].area
        method = SingularMethod.EXTINCTION if shrunk else SingularMethod.BLOWUP_RATE
    y = _fit_quantity(series, method)
    window = _terminal_window(y)
    if trim > 0:
        window = window[:max(len(window) - int(round(trim * len(window))), 0)]
    if len(window) < MIN_FIT_RECORDS:
        raise InsufficientDataError(f"Only {len(window)} records in the terminal window")
    t = np.array([series[i].t for i in window])
    values = y[window]
    fit_window = (series[window[0]].step, series[window[-1]].step)
    slope, intercept = np.polyfit(t, values, 1)
    if np.any(np.diff(values) > 1e-3 * np.ptp(values)) or not slope < 0:
        logger.warning(f"Non-monotone terminal data over steps {fit_window}; singular time undetermined")
        return SingularTime(None, method, fit_window, float(slope), float(intercept))
    T_est = float(-intercept / slope)
    if not T_est > t[-1]:
        logger.warning(f"Extrapolated singular time {T_est:.6g} precedes the last record")
        return SingularTime(None, method, fit_window, float(slope), float(intercept))
    logger.info(f"Estimated singular time {T_est:.6g} ({method.value}, steps {fit_window[0]}-{fit_window[1]})")
    return SingularTime(T_est, method, fit_window, float(slope), float(intercept))


@dataclass(frozen=True)
class BlowupFit:
    T_est: Optional[float]
    method: SingularMethod
    typeI_stat: Optional[float]
    typeI_verdict: Verdict
    H_A_ratio_trend: list[float]
    fit_window: tuple[int, int]

    def to_dict(self) -> dict:
        data = asdict(self)
        data["method"] = self.method.value
        data["typeI_verdict"] = self.typeI_verdict.value
        return data


def classify_blowup(series: Sequence[DiagnosticsRecord], T_est: Optional[float],
                    checks: Optional[ChecksConfig] = None,
                    method: SingularMethod = SingularMethod.BLOWUP_RATE) -> BlowupFit:
    """
    Type I when sup|A|²(T - t) stays within ``typeI_factor`` of its median over
    the last decade of T - t, type II when it grows monotonically by more than
    ``typeII_growth``, undetermined otherwise or on thin data.
    """
    checks = checks or ChecksConfig()
    if T_est is None or not series:
        return BlowupFit(T_est, method, None, Verdict.UNDETERMINED, [], (0, 0))
    tau = np.array([T_est - rec.t for rec in series])
    sup_A = np.array([rec.sup_A for rec in series])
    last = tau[-1]
    window = np.flatnonzero((tau > 0) & (tau <= 10.0 * last)) if last > 0 else np.array([], dtype=int)
    if len(window) < 3:
        return BlowupFit(T_est, method, None, Verdict.UNDETERMINED, [], (series[-1].step, series[-1].step))
    stat = sup_A[window] ** 2 * tau[window]
    median = float(np.median(stat))
    trend = [float(series[i].sup_H / series[i].sup_A) for i in window]
    fit_window = (series[window[0]].step, series[window[-1]].step)
    if np.max(stat) <= checks.typeI_factor * median and np.min(stat) >= median / checks.typeI_factor:
        verdict = Verdict.TYPE_I
    elif np.all(np.diff(stat) >= 0) and stat[-1] > checks.typeII_growth * stat[0]:
        verdict = Verdict.TYPE_II
    else:
        verdict = Verdict.UNDETERMINED
    return BlowupFit(T_est, method, float(np.max(stat)), verdict, trend, fit_window)


@dataclass(frozen=True)
class HBlowupReport:
    final_ratio: float
    slope: float
    verdict: HVerdict


def h_blowup_comparison(series: Sequence[DiagnosticsRecord], checks: Optional[ChecksConfig] = None) -> HBlowupReport:
    """
    Log-log slope of sup|H| against sup|A| over the last decade of sup|A|.

    Slope above ``h_blowup_slope`` reads as H blowing up with A, below
    ``h_bounded_slope`` as H staying bounded.
    """
    checks = checks or ChecksConfig()
    sup_A = np.array([rec.sup_A for rec in series])
    sup_H = np.array([rec.sup_H for rec in series])
    final_ratio = float(sup_H[-1] / sup_A[-1])
    window = np.flatnonzero(sup_A >= sup_A[-1] / 10.0)
    log_A = np.log(sup_A[window])
    if len(window) < 3 or np.ptp(log_A) < 1e-9:
        return HBlowupReport(final_ratio, float("nan"), HVerdict.INCONCLUSIVE)
    slope = float(np.polyfit(log_A, np.log(sup_H[window]), 1)[0])
    if slope > checks.h_blowup_slope:
        verdict = HVerdict.H_BLOWS_UP
    elif slope < checks.h_bounded_slope:
        verdict = HVerdict.H_BOUNDED
    else:
        verdict = HVerdict.INCONCLUSIVE
    return HBlowupReport(final_ratio, slope, verdict)


def detect_mean_convex(field: CurvatureField) -> bool:
    return bool(np.min(field.mean_curvature) > 0)


def detect_convex(field: CurvatureField) -> bool:
    return bool(np.min(field.principal_curvatures) > 0)


@dataclass(frozen=True)
class PinchingReport:
    running_max: Optional[float]
    onset_step: Optional[int]
    onset_value: Optional[float]
    max_relative_excess: Optional[float]
    bounded: Optional[bool]

    @property
    def vacuous(self) -> bool:
        return self.onset_step is None


def pinching_check(series: Sequence[DiagnosticsRecord], slack: float = 0.1) -> PinchingReport:
    """
    Running max of pinch_ratio over mean-convex steps, and whether the
    scale-invariant max|A|²/H² stays within ``slack`` of its value at the first
    mean-convex step.
    """
    convex_steps = [rec for rec in series if rec.mean_convex]
    if not convex_steps:
        logger.info("Pinching check is vacuous: no mean-convex step")
        return PinchingReport(None, None, None, None, None)
    onset = convex_steps[0]
    running_max = max(rec.pinch_ratio for rec in convex_steps)
    ratios = [rec.max_A2_over_H2 for rec in convex_steps if rec.max_A2_over_H2 is not None]
    if not ratios:
        return PinchingReport(running_max, onset.step, None, None, None)
    excess = max(ratios) / ratios[0] - 1.0
    return PinchingReport(running_max, onset.step, ratios[0], float(excess), bool(excess <= slack))


@dataclass(frozen=True)
class RoundnessReport:
    max_traceless: float
    radius_spread: float


def roundness_of_attractor(surface: Hypersurface, field: Optional[CurvatureField] = None) -> RoundnessReport:
    """Max node |Å| and (max - min)/mean of node distances to the area centroid."""
    field = field or curvature_field(surface, 0)
    distance = np.linalg.norm(surface.positions - area_centroid(surface), axis=1)
    return RoundnessReport(float(np.max(field.norm_traceless)),
                           float((distance.max() - distance.min()) / distance.mean()))


@dataclass(frozen=True)
class CaseSplitReport:
    """Which branch of the small-energy argument a run followed."""
    initial_int_Ao2: float
    small_energy: bool
    mean_convex_step: Optional[int]
    max_sup_A: float
    curvature_bounded: bool
    max_sup_H: float
    mean_curvature_bounded: bool
    case: str  # mean_convex | bounded_curvature | open

    def to_dict(self) -> dict:
        return asdict(self)


def theorem_case_split(series: Sequence[DiagnosticsRecord], config: FlowConfig) -> CaseSplitReport:
    """
    Report the knobs: initial ∫|Å|² against ``epsilon_knob``, the first strictly
    mean-convex step, max|A| against ``lambda0_knob`` and sup|H| against ``c0_knob``.
    """
    if not series:
        raise InsufficientDataError("theorem_case_split needs at least one record")
    mean_convex_step = next((rec.step for rec in series if rec.mean_convex), None)
    max_sup_A = max(rec.sup_A for rec in series)
    max_sup_H = max(rec.sup_H for rec in series)
    curvature_bounded = max_sup_A <= config.lambda0_knob
    if mean_convex_step is not None:
        case = "mean_convex"
    elif curvature_bounded:
        case = "bounded_curvature"
    else:
        case = "open"
    return CaseSplitReport(series[0].int_Ao2, series[0].int_Ao2 < config.epsilon_knob, mean_convex_step,
                           float(max_sup_A), bool(curvature_bounded), float(max_sup_H),
                           bool(max_sup_H <= config.c0_knob), case)
