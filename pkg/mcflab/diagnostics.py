"""
Per-step functionals, inequality ratios and runtime monitors.

Integrals are weight sums over nodes and sup/min are node extrema. Checkers
never raise on a violated inequality: they return ratios or reports, and only
a request that cannot be evaluated (wrong backend, missing derivative order,
Δt = 0) raises ``DiagnosticsError``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import TYPE_CHECKING, Optional, Sequence, Union

import numpy as np
from loguru import logger

from mcflab.config import ChecksConfig, SlackPolicy
from mcflab.curvature import (CurvatureField, arc_derivative, curvature_field, gradient_pinch_check, kato_check,
                              scalar_laplacian)
from mcflab.geometry import Hypersurface, intrinsic_diameter, total_area
from mcflab.mcflab_common import (SERIES_COLUMNS, Backend, DiagnosticsError, FlowMode, GeometryError, TestFunction,
                                  safe_ratio)

if TYPE_CHECKING:
    from mcflab.flow import FlowState

MONITORED_KEYS = ("area", "int_Ao2", "int_grad1A2", "int_grad2A2", "int_grad3A2")
AREA_DERIVATIVE_DT_LIMIT = 1e-3


@dataclass
class DiagnosticsRecord:
    """
    One row of the time series plus the integrals the identity checks need.

    The first block of fields is the series.csv contract; absent derivative
    orders and skipped diameters are None.
    """
    step: int
    t: float
    t_tilde: float
    psi: float
    area: float
    int_Ao2: float
    int_grad1A2: Optional[float]
    int_grad2A2: Optional[float]
    int_grad3A2: Optional[float]
    sup_A: float
    sup_H: float
    min_H: float
    sup_gradH: Optional[float]
    h_tilde: float
    diameter: Optional[float]
    topping_ratio: Optional[float]
    pinch_ratio: float
    dt: float
    kato_margin: Optional[float]
    gradient_pinch_ratio: Optional[float]
    michael_simon_margin: Optional[float]
    hamilton_margin: Optional[float]

    n: int = 2
    backend: str = Backend.AXI.value
    mode: str = FlowMode.UNNORMALIZED.value
    h: float = float("nan")
    int_H2: Optional[float] = None
    int_A2: Optional[float] = None
    int_Hn1: Optional[float] = None
    int_A2Ao2: Optional[float] = None
    int_H2Ao2: Optional[float] = None
    int_gradAo2: dict[int, float] = field(default_factory=dict)
    max_A2_over_H2: Optional[float] = None
    mean_convex: bool = False
    convex: bool = False
    kato_ok: Optional[bool] = None
    gradient_pinch_ok: Optional[bool] = None
    remesh_drift: dict[str, float] = field(default_factory=dict)

    def to_row(self) -> dict:
        return {column: getattr(self, column) for column in SERIES_COLUMNS}

    @classmethod
    def from_row(cls, row: dict, n: int = 2, backend: str = Backend.AXI.value,
                 mode: str = FlowMode.UNNORMALIZED.value) -> DiagnosticsRecord:
        """Rebuild a record from a persisted series row; the extra integrals stay unset."""
        def clean(value):
            if value is None or (isinstance(value, float) and np.isnan(value)) or value == "":
                return None
            return value

        values = {column: clean(row.get(column)) for column in SERIES_COLUMNS}
        values["step"] = int(values["step"])
        record = cls(**values, n=n, backend=backend, mode=mode)
        record.mean_convex = values["min_H"] is not None and values["min_H"] > 0
        return record

    def get(self, key: str) -> Optional[float]:
        if key not in {f.name for f in fields(self)}:
            raise DiagnosticsError(f"Unknown record field '{key}'")
        return getattr(self, key)


def _integral(surface: Hypersurface, values: np.ndarray) -> float:
    return float(np.sum(surface.node_weights * values))


def record(state: FlowState, field: CurvatureField, checks: Optional[ChecksConfig] = None,
           with_diameter: bool = True, remesh_drift: Optional[dict[str, float]] = None) -> DiagnosticsRecord:
    """
    Evaluate every monitored functional on the state's surface.

    Args:
        state: current flow state
        field: curvature of ``state.surface`` up to the monitored order
        checks: slack coefficients of the pointwise checks
        with_diameter: compute the intrinsic diameter and the Topping ratio
        remesh_drift: relative changes logged by a remesh just before this state
    """
    checks = checks or ChecksConfig()
    surface = state.surface
    n = surface.n
    H = field.mean_curvature
    A2 = field.norm_A_sq
    Ao2 = field.norm_tracelessA_sq
    area = total_area(surface)
    w = surface.node_weights
    grads = {m: _integral(surface, field.grad_A[m] ** 2) for m in field.grad_A}
    grads_ao = {m: _integral(surface, field.grad_traceless[m] ** 2) for m in field.grad_traceless}
    int_Hn1 = _integral(surface, np.abs(H) ** (n - 1))
    diameter = topping = None
    if with_diameter:
        try:
            diameter = intrinsic_diameter(surface)
            topping = safe_ratio(diameter, int_Hn1)
        except GeometryError as e:
            logger.warning(f"Diameter skipped at step {state.step}: {e}")
    mean_convex = bool(np.min(H) > 0)
    kato_margin = pinch_ratio = None
    kato_ok = pinch_ok = None
    if field.m_max >= 1 and field.grad_abs_traceless is not None:
        kato = kato_check(surface, field, checks.kato_slack_coeff, checks.kato_slack_power)
        kato_margin, kato_ok = kato.max_margin, kato.ok
        pinch = gradient_pinch_check(surface, field, checks.zero_threshold, checks.pinch_slack)
        pinch_ratio, pinch_ok = pinch.ratio, pinch.ok
    ms_margin = michael_simon_check(surface, field, zero_threshold=checks.zero_threshold).ratio
    hamilton_margin = None
    if surface.backend == Backend.AXI and field.m_max >= 2:
        hamilton = hamilton_interpolation_check(surface, field, checks.zero_threshold)
        hamilton_margin = None if hamilton.vacuous else hamilton.ratio
    return DiagnosticsRecord(
        step=state.step, t=state.t, t_tilde=state.t_tilde, psi=state.psi, area=area,
        int_Ao2=_integral(surface, Ao2),
        int_grad1A2=grads.get(1), int_grad2A2=grads.get(2), int_grad3A2=grads.get(3),
        sup_A=float(np.max(np.sqrt(A2))), sup_H=float(np.max(np.abs(H))), min_H=float(np.min(H)),
        sup_gradH=float(np.max(field.grad_H)) if field.grad_H is not None else None,
        h_tilde=float(np.sum(w * H ** 2) / np.sum(w)),
        diameter=diameter, topping_ratio=topping,
        pinch_ratio=float(np.max(A2 / (H ** 2 + 1.0))),
        dt=state.dt_last, kato_margin=kato_margin, gradient_pinch_ratio=pinch_ratio,
        michael_simon_margin=ms_margin, hamilton_margin=hamilton_margin,
        n=n, backend=surface.backend.value, mode=state.mode.value, h=surface.mean_spacing(),
        int_H2=_integral(surface, H ** 2), int_A2=_integral(surface, A2), int_Hn1=int_Hn1,
        int_A2Ao2=_integral(surface, A2 * Ao2), int_H2Ao2=_integral(surface, H ** 2 * Ao2),
        int_gradAo2=grads_ao,
        max_A2_over_H2=float(np.max(A2 / H ** 2)) if mean_convex else None,
        mean_convex=mean_convex, convex=bool(np.all(field.principal_curvatures > 0)),
        kato_ok=kato_ok, gradient_pinch_ok=pinch_ok, remesh_drift=dict(remesh_drift or {}))


# ---------------------------------------------------------------------------
# inequalities


@dataclass(frozen=True)
class InequalityReport:
    """LHS/RHS of one inequality; vacuous when both sides vanish to roundoff."""
    name: str
    lhs: float
    rhs: float
    vacuous: bool = False

    @property
    def ratio(self) -> float:
        return float("nan") if self.vacuous else safe_ratio(self.lhs, self.rhs)


def _test_function(field: CurvatureField, choice: TestFunction) -> tuple[np.ndarray, np.ndarray, float]:
    """Values, gradient norms and a natural size of the chosen test function."""
    scale = float(np.max(field.norm_A_sq))
    if choice == TestFunction.CONSTANT:
        ones = np.ones(field.num_nodes)
        return ones, np.zeros_like(ones), 1.0
    if field.m_max < 1 or field.grad_H is None:
        raise DiagnosticsError(f"Test function {choice.value} needs first derivatives (m_max >= 1)")
    if choice == TestFunction.TRACELESS_NORM:
        return field.norm_traceless, field.grad_abs_traceless, np.sqrt(scale)
    H = field.mean_curvature
    return H ** 2, 2.0 * np.abs(H) * field.grad_H, scale


def michael_simon_check(surface: Hypersurface, field: CurvatureField,
                        test_function: TestFunction = TestFunction.CONSTANT, original: bool = False,
                        zero_threshold: float = 1e-8) -> InequalityReport:
    """
    Sobolev inequality of Michael-Simon type for a test function v >= 0.

    n = 2:  ∫v² against ∫|∇v|² + ∫H²v².
    n > 2:  (∫v^{2n/(n-2)})^{(n-2)/n} against ∫|∇v|² + ∫H²v².
    ``original`` uses the first order form (∫v^{n/(n-1)})^{(n-1)/n} against ∫|∇v| + ∫|H|v.

    The ratio is recorded, never asserted: the constant C(n) is not known.
    """
    n = surface.n
    if n < 2:
        raise DiagnosticsError(f"Michael-Simon check is undefined for n = {n}")
    v, grad_v, size = _test_function(field, test_function)
    H = field.mean_curvature
    if original:
        lhs = _integral(surface, v ** (n / (n - 1.0))) ** ((n - 1.0) / n)
        rhs = _integral(surface, grad_v) + _integral(surface, np.abs(H) * v)
        name = "michael_simon_original"
    else:
        rhs = _integral(surface, grad_v ** 2) + _integral(surface, H ** 2 * v ** 2)
        if n == 2:
            lhs = _integral(surface, v ** 2)
        else:
            lhs = _integral(surface, v ** (2.0 * n / (n - 2.0))) ** ((n - 2.0) / n)
        name = "michael_simon"
    vacuous = float(np.max(v)) <= zero_threshold * size or rhs == 0.0
    return InequalityReport(f"{name}[{test_function.value}]", lhs, rhs, vacuous)


def hamilton_interpolation_check(surface: Hypersurface, field: CurvatureField,
                                 zero_threshold: float = 1e-8) -> InequalityReport:
    """
    ∫|∇Å|² against (2r - 2 + n)(∫|∇²Å|²)^{1/2}(∫|Å|²)^{1/2} with r = 1, p = q = 2.

    Raises:
        DiagnosticsError: not a profile, or fewer than two derivative orders
    """
    if surface.backend != Backend.AXI:
        raise DiagnosticsError("Hamilton interpolation check needs the axi backend")
    if field.m_max < 2:
        raise DiagnosticsError("Hamilton interpolation check needs m_max >= 2")
    first = _integral(surface, field.grad_traceless[1] ** 2)
    second = _integral(surface, field.grad_traceless[2] ** 2)
    zeroth = _integral(surface, field.norm_tracelessA_sq)
    rhs = surface.n * np.sqrt(second) * np.sqrt(zeroth)
    vacuous = zeroth <= zero_threshold ** 2 * _integral(surface, field.norm_A_sq) or rhs == 0.0
    return InequalityReport("hamilton", first, float(rhs), vacuous)


def topping_check(surface: Hypersurface, field: CurvatureField) -> float:
    """Intrinsic diameter over ∫|H|^{n-1}dμ (∫|H|dμ when n = 2)."""
    denominator = _integral(surface, np.abs(field.mean_curvature) ** (surface.n - 1))
    if not denominator > 0:
        raise DiagnosticsError("∫|H|^(n-1) vanishes; the Topping ratio is undefined")
    return intrinsic_diameter(surface) / denominator


# ---------------------------------------------------------------------------
# time series checks


@dataclass(frozen=True)
class AreaDerivativeResult:
    relative_error: float
    status: str  # ok | violation | timestep_limited


def area_derivative_check(record_prev: DiagnosticsRecord, record_next: DiagnosticsRecord,
                          int_H2_prev: Optional[float] = None, tolerance: float = 0.05,
                          dt_limit: float = AREA_DERIVATIVE_DT_LIMIT) -> AreaDerivativeResult:
    """
    Compare Δarea/Δt with -∫H²dμ between consecutive unnormalized records.

    Errors above ``tolerance`` are a violation when Δt <= ``dt_limit`` and
    "timestep_limited" otherwise.
    """
    if record_prev.mode != FlowMode.UNNORMALIZED.value or record_next.mode != FlowMode.UNNORMALIZED.value:
        raise DiagnosticsError("area_derivative_check needs unnormalized records")
    dt = record_next.t - record_prev.t
    if dt == 0:
        raise DiagnosticsError("area_derivative_check needs Δt != 0")
    rate = int_H2_prev if int_H2_prev is not None else record_prev.int_H2
    if rate is None or not rate > 0:
        raise DiagnosticsError("area_derivative_check needs ∫H²dμ > 0 on the earlier record")
    error = abs((record_next.area - record_prev.area) / dt + rate) / rate
    if error <= tolerance:
        status = "ok"
    elif dt > dt_limit:
        status = "timestep_limited"
        logger.warning(f"Area derivative at step {record_next.step} is timestep-limited ({error:.3f} at dt={dt:.2e})")
    else:
        status = "violation"
    return AreaDerivativeResult(float(error), status)


def monotonicity_monitor(series: Sequence[Union[DiagnosticsRecord, float]], key: str = "int_Ao2",
                         slack_policy: Optional[SlackPolicy] = None) -> Optional[int]:
    """
    Index of the first entry that increases over its predecessor by more than
    the slack, or None. Remesh drift logged on a record widens its slack.
    """
    if key not in MONITORED_KEYS:
        raise DiagnosticsError(f"Unknown monotone key '{key}' (valid: {', '.join(MONITORED_KEYS)})")
    policy = slack_policy or SlackPolicy()
    previous = None
    for index, entry in enumerate(series):
        if isinstance(entry, DiagnosticsRecord):
            value, drift = entry.get(key), entry.remesh_drift.get(key, 0.0)
        else:
            value, drift = float(entry), 0.0
        if value is None:
            continue
        if previous is not None and value - previous > policy.slack(previous, drift):
            logger.warning(f"{key} increased from {previous:.6g} to {value:.6g} at index {index}")
            return index
        previous = value
    return None


@dataclass(frozen=True)
class EvolutionResiduals:
    """Scaled max-node residuals of the H, |A|² and |Å|² evolution equations."""
    residual_H: float
    residual_A2: float
    residual_Ao2: float


def evolution_residual_check(state_prev: FlowState, state_next: FlowState,
                             field_prev: Optional[CurvatureField] = None) -> EvolutionResiduals:
    """
    Pointwise evolution equations between two consecutive states with the same nodes.

      ∂H/∂t    = ΔH + |A|²H
      ∂|A|²/∂t = Δ|A|² - 2|∇A|² + 2|A|⁴
      ∂|Å|²/∂t = Δ|Å|² - 2|∇Å|² + 2|A|²|Å|²

    In normalized time each right side also gets -(h̃/n)H or -(2/n)h̃·(|A|², |Å|²).
    Node velocities along the profile are removed as transport terms. Residuals are
    divided by max|A|²·max|H| (for H) and max|A|⁴ (for the squared norms).
    """
    surface = state_prev.surface
    if surface.backend != Backend.AXI or state_next.surface.backend != Backend.AXI:
        raise DiagnosticsError("evolution_residual_check needs the axi backend")
    if state_next.surface.num_nodes != surface.num_nodes:
        raise DiagnosticsError("evolution_residual_check needs states without a remesh in between")
    normalized = state_prev.mode == FlowMode.NORMALIZED
    dt = (state_next.t_tilde - state_prev.t_tilde) if normalized else (state_next.t - state_prev.t)
    if not dt > 0:
        raise DiagnosticsError("evolution_residual_check needs Δt > 0")
    if field_prev is None or field_prev.m_max < 1:
        field_prev = curvature_field(surface, 1)
    field_next = curvature_field(state_next.surface, 0)
    n = surface.n
    H, A2, Ao2 = field_prev.mean_curvature, field_prev.norm_A_sq, field_prev.norm_tracelessA_sq
    w = surface.node_weights
    h_tilde = float(np.sum(w * H ** 2) / np.sum(w)) if normalized else 0.0
    s = surface.arc_coordinate()
    velocity = (state_next.surface.positions - surface.positions) / dt
    v_t = np.einsum("ij,ij->i", velocity, field_prev.tangent)

    def rate(before: np.ndarray, after: np.ndarray) -> np.ndarray:
        return (after - before) / dt - v_t * arc_derivative(before, s, even=True)

    def lap(values: np.ndarray) -> np.ndarray:
        return scalar_laplacian(surface, values, field_prev)

    rhs_H = lap(H) + A2 * H - (h_tilde / n) * H
    rhs_A2 = lap(A2) - 2.0 * field_prev.grad_A[1] ** 2 + 2.0 * A2 ** 2 - (2.0 / n) * h_tilde * A2
    rhs_Ao2 = lap(Ao2) - 2.0 * field_prev.grad_traceless[1] ** 2 + 2.0 * A2 * Ao2 - (2.0 / n) * h_tilde * Ao2
    scale_H = float(np.max(A2) * np.max(np.abs(H)))
    scale_4 = float(np.max(A2) ** 2)
    residual_H = np.max(np.abs(rate(H, field_next.mean_curvature) - rhs_H)) / scale_H
    residual_A2 = np.max(np.abs(rate(A2, field_next.norm_A_sq) - rhs_A2)) / scale_4
    residual_Ao2 = np.max(np.abs(rate(Ao2, field_next.norm_tracelessA_sq) - rhs_Ao2)) / scale_4
    return EvolutionResiduals(float(residual_H), float(residual_A2), float(residual_Ao2))


def _energy_rate_terms(rec: DiagnosticsRecord) -> tuple[float, float]:
    """Right side of d/dt ∫|Å|²dμ and the sum of its absolute terms."""
    if None in (rec.int_A2Ao2, rec.int_H2Ao2) or 1 not in rec.int_gradAo2:
        raise DiagnosticsError(f"Record at step {rec.step} lacks the energy identity integrals")
    terms = [-2.0 * rec.int_gradAo2[1], 2.0 * rec.int_A2Ao2, -rec.int_H2Ao2]
    if rec.mode == FlowMode.NORMALIZED.value:
        terms.append((rec.n - 2.0) / rec.n * rec.h_tilde * rec.int_Ao2)
    return sum(terms), sum(abs(term) for term in terms)


def energy_identity_check(record_prev: DiagnosticsRecord, record_next: DiagnosticsRecord) -> float:
    """
    Integrated |Å|² identity: d/dt ∫|Å|² = -2∫|∇Å|² + 2∫|A|²|Å|² - ∫H²|Å|²
    (plus (n-2)/n·h̃∫|Å|² in normalized time).

    Returns the finite-difference rate error relative to the size of the terms,
    with the right side averaged over both records.
    """
    normalized = record_prev.mode == FlowMode.NORMALIZED.value
    dt = (record_next.t_tilde - record_prev.t_tilde) if normalized else (record_next.t - record_prev.t)
    if dt == 0:
        raise DiagnosticsError("energy_identity_check needs Δt != 0")
    rhs_prev, size_prev = _energy_rate_terms(record_prev)
    rhs_next, size_next = _energy_rate_terms(record_next)
    size = 0.5 * (size_prev + size_next)
    if size == 0.0:
        return 0.0
    fd_rate = (record_next.int_Ao2 - record_prev.int_Ao2) / dt
    return float(abs(fd_rate - 0.5 * (rhs_prev + rhs_next)) / size)
