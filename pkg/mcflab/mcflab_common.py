"""Shared enums, exceptions and small helpers for the mcflab package."""
from enum import Enum

import numpy as np
from scipy.special import gamma


class Backend(Enum):
    """
    Enum for discretization backends.
    """
    MESH = "mesh"  # triangle mesh in R^3 (n = 2)
    AXI = "axi"  # profile curve of a surface of revolution in R^{n+1}


class FlowMode(Enum):
    """
    Enum for the flow variants.
    """
    UNNORMALIZED = "unnormalized"
    NORMALIZED = "normalized"


class Method(Enum):
    """
    Enum for time stepping methods.
    """
    EXPLICIT = "explicit"
    SEMI_IMPLICIT = "semi_implicit"
    AUTO = "auto"


class StopCause(Enum):
    """
    Enum for the reason a run ended.
    """
    EXTINCTION = "extinction"
    BLOW_UP = "blow_up"
    STEADY = "steady"
    MAX_STEPS = "max_steps"
    ERROR = "error"


class ScenarioKind(Enum):
    """
    Enum for the initial surfaces the lab can build.
    """
    SPHERE = "sphere"
    PERTURBED_SPHERE = "perturbed_sphere"
    DUMBBELL = "dumbbell"
    ELLIPSOID = "ellipsoid"


class TestFunction(Enum):
    """
    Enum for the test functions of the Sobolev inequality check.
    """
    __test__ = False

    CONSTANT = "constant"
    TRACELESS_NORM = "traceless_norm"
    MEAN_CURVATURE_SQUARED = "mean_curvature_squared"


class Verdict(Enum):
    """
    Enum for blow-up type classification.
    """
    TYPE_I = "typeI"
    TYPE_II = "typeII"
    UNDETERMINED = "undetermined"


class HVerdict(Enum):
    """
    Enum for the behaviour of sup|H| relative to sup|A| near a singularity.
    """
    H_BLOWS_UP = "H_blows_up"
    H_BOUNDED = "H_bounded"
    INCONCLUSIVE = "inconclusive"


class SingularMethod(Enum):
    """
    Enum for the singular time estimator.
    """
    EXTINCTION = "extinction"
    BLOWUP_RATE = "blowup_rate"


class SweepKey(Enum):
    """
    Enum for the scenario parameters a sweep can vary.
    """
    AMPLITUDE = "amplitude"
    NECK_RADIUS = "neck_radius"
    BULB_SEPARATION = "bulb_separation"
    RESOLUTION = "resolution"
    CFL = "cfl"


class ExportFormat(Enum):
    """
    Enum for snapshot export formats.
    """
    OBJ = "obj"
    PROFILE_CSV = "profile-csv"
    CURVATURE_CSV = "curvature-csv"


class SeriesFields(Enum):
    """
    Enum for the columns of series.csv, in file order.
    """
    STEP = "step"
    T = "t"
    T_TILDE = "t_tilde"
    PSI = "psi"
    AREA = "area"
    INT_AO2 = "int_Ao2"
    INT_GRAD1A2 = "int_grad1A2"
    INT_GRAD2A2 = "int_grad2A2"
    INT_GRAD3A2 = "int_grad3A2"
    SUP_A = "sup_A"
    SUP_H = "sup_H"
    MIN_H = "min_H"
    SUP_GRADH = "sup_gradH"
    H_TILDE = "h_tilde"
    DIAMETER = "diameter"
    TOPPING_RATIO = "topping_ratio"
    PINCH_RATIO = "pinch_ratio"
    DT = "dt"
    KATO_MARGIN = "kato_margin"
    GRADIENT_PINCH_RATIO = "gradient_pinch_ratio"
    MICHAEL_SIMON_MARGIN = "michael_simon_margin"
    HAMILTON_MARGIN = "hamilton_margin"


SERIES_COLUMNS = [field.value for field in SeriesFields]


class McfLabError(Exception):
    """Base class for all mcflab errors."""


class GeometryError(McfLabError):
    """Invalid surface, unsupported construction or a disconnected mesh."""


class CurvatureError(McfLabError):
    """Curvature requested beyond what a backend supports."""


class FlowError(McfLabError):
    """A time step or a flow precondition failed."""


class StepRejected(FlowError):
    """The step produced a degenerate surface; retry with a smaller dt."""


class DiagnosticsError(McfLabError):
    """A diagnostic was requested on data it cannot be evaluated on."""


class InsufficientDataError(DiagnosticsError):
    """Too few records to fit a singular time or a blow-up rate."""


class ConfigError(McfLabError):
    """Unparseable, unknown or out-of-range configuration."""


def unit_sphere_area(n: int) -> float:
    """Area of the unit n-sphere S^n in R^{n+1}."""
    return float(2.0 * np.pi ** ((n + 1) / 2.0) / gamma((n + 1) / 2.0))


def sphere_area(n: int, radius: float) -> float:
    """Area of the round n-sphere of the given radius."""
    return unit_sphere_area(n) * radius ** n


def traceless_norm_sq(kappa: np.ndarray) -> np.ndarray:
    """
    |Å|² from principal curvatures, as the pairwise sum (1/n) Σ_{i<j} (κ_i - κ_j)².

    Args:
        kappa: principal curvatures with shape (N, n)

    Returns:
        Array of shape (N,), never negative.
    """
    n = kappa.shape[1]
    total = np.zeros(kappa.shape[0])
    for i in range(n):
        for j in range(i + 1, n):
            total += (kappa[:, i] - kappa[:, j]) ** 2
    return total / n


def safe_ratio(numerator: float, denominator: float) -> float:
    """Return numerator/denominator or NaN when the denominator vanishes."""
    if denominator == 0.0 or not np.isfinite(denominator):
        return float("nan")
    return float(numerator / denominator)
