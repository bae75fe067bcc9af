import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcflab.config import (ChecksConfig, FlowConfig, ScenarioSpec, battery, config_hash, parse_config,
                           parse_config_text, serialize_config, sweep_values)
from mcflab.mcflab_common import Backend, ConfigError, FlowMode, Method, ScenarioKind

MINIMAL = """\
[scenario]
kind = sphere
"""


def test_minimal_config_fills_defaults() -> None:
    scenario, flow, checks = parse_config_text(MINIMAL)
    assert scenario.kind == ScenarioKind.SPHERE
    assert scenario.backend == Backend.AXI
    assert scenario.n == 2 and scenario.radius == 1.0 and scenario.seed == 0
    assert flow == FlowConfig()
    assert flow.mode == FlowMode.UNNORMALIZED and flow.cfl == 0.1
    assert checks == ChecksConfig()


def test_parse_config_reads_files(write_config) -> None:
    path = write_config(MINIMAL + "\n[flow]\nmode = normalized\nmethod = semi_implicit\n")
    _, flow, _ = parse_config(path)
    assert flow.mode == FlowMode.NORMALIZED
    assert flow.method == Method.SEMI_IMPLICIT


def test_missing_file_is_a_config_error(tmp_path) -> None:
    with pytest.raises(ConfigError, match="Cannot read"):
        parse_config(tmp_path / "absent.ini")


@pytest.mark.parametrize("text, message", [
    (MINIMAL + "[flow]\ncfl = 1.5\n", "cfl out of \\(0,1\\]"),
    ("[scenario]\nkind = dumbbel\n", "unknown kind 'dumbbel'"),
    (MINIMAL + "colour = red\n", "colour"),
    (MINIMAL + "[plots]\nwidth = 3\n", "unknown section"),
    ("[flow]\ncfl = 0.2\n", "missing \\[scenario\\]"),
    ("[scenario]\nkind = sphere\nthis line is wrong\n", "line 3"),
    (MINIMAL + "amplitude = 0.6\nkind = perturbed_sphere\n", "duplicate key"),
    ("[scenario]\nkind = perturbed_sphere\namplitude = 0.6\n", "amplitude"),
    ("[scenario]\nkind = sphere\nbackend = mesh\nn = 3\n", "mesh backend requires n = 2"),
    ("[scenario]\nkind = ellipsoid\n", "ellipsoid requires the mesh backend"),
    (MINIMAL + "[flow]\ndt_min = 1.0\ndt_max = 0.1\n", "dt_min"),
])
def test_invalid_configs_are_rejected(text: str, message: str) -> None:
    with pytest.raises(ConfigError, match=message):
        parse_config_text(text)


def test_errors_name_the_source(write_config) -> None:
    path = write_config("[scenario]\nkind = cube\n", name="bad.ini")
    with pytest.raises(ConfigError, match="bad.ini"):
        parse_config(path)


def test_semi_axes_are_split() -> None:
    scenario, _, _ = parse_config_text("[scenario]\nkind = ellipsoid\nbackend = mesh\nsemi_axes = 2, 1, 0.5\n")
    assert scenario.semi_axes == (2.0, 1.0, 0.5)


def test_resolved_defaults_per_backend() -> None:
    flow = FlowConfig()
    assert flow.resolved_m_max(Backend.AXI) == 2
    assert flow.resolved_m_max(Backend.MESH) == 1
    assert FlowConfig(m_max=3).resolved_m_max(Backend.MESH) == 1
    assert flow.resolved_method(Backend.MESH) == Method.SEMI_IMPLICIT


def test_slack_policy_from_checks() -> None:
    policy = ChecksConfig(monotone_relative_slack=1e-2, zero_threshold=1e-6).slack_policy()
    assert policy.slack(2.0) == pytest.approx(2e-2 + 1e-6)
    assert policy.slack(2.0, drift=0.5) == pytest.approx(1.02 + 1e-6)


scenarios = st.builds(
    ScenarioSpec,
    kind=st.just(ScenarioKind.PERTURBED_SPHERE),
    n=st.integers(min_value=2, max_value=5),
    resolution=st.integers(min_value=16, max_value=4096),
    radius=st.floats(min_value=0.01, max_value=100.0),
    mode=st.integers(min_value=2, max_value=12),
    amplitude=st.floats(min_value=-0.49, max_value=0.49),
    seed=st.integers(min_value=0, max_value=2 ** 31),
)
flows = st.builds(
    FlowConfig,
    mode=st.sampled_from(FlowMode),
    cfl=st.floats(min_value=1e-3, max_value=1.0),
    max_steps=st.integers(min_value=0, max_value=10 ** 6),
    max_abs_A_stop=st.none() | st.floats(min_value=1.0, max_value=1e6),
    m_max=st.none() | st.integers(min_value=0, max_value=3),
)


@settings(max_examples=50, deadline=None)
@given(scenario=scenarios, flow=flows)
def test_serialized_config_parses_back(scenario: ScenarioSpec, flow: FlowConfig) -> None:
    text = serialize_config(scenario, flow)
    assert parse_config_text(text) == (scenario, flow, ChecksConfig())


def test_config_hash_is_stable() -> None:
    scenario = ScenarioSpec(kind=ScenarioKind.SPHERE)
    assert config_hash(scenario) == config_hash(ScenarioSpec(kind="sphere"), FlowConfig(), ChecksConfig())
    assert len(config_hash(scenario)) == 64
    assert config_hash(scenario) != config_hash(ScenarioSpec(kind=ScenarioKind.SPHERE, radius=2.0))


def test_sweep_values() -> None:
    assert sweep_values("0.01, 0.05,0.1") == [0.01, 0.05, 0.1]
    assert sweep_values("") == []
    with pytest.raises(ConfigError):
        sweep_values("1, inf")
    with pytest.raises(ValueError):
        sweep_values("one")


def test_battery_members() -> None:
    members = dict(battery(3, ChecksConfig(battery_resolution_axi=64, battery_resolution_mesh=162)))
    assert list(members) == ["sphere_R0.5", "sphere_R1", "sphere_R2", "perturbed_d0.01", "perturbed_d0.05",
                             "perturbed_d0.1", "dumbbell", "ellipsoid"]
    assert members["sphere_R2"].n == 3 and members["sphere_R2"].resolution == 64
    assert members["ellipsoid"].backend == Backend.MESH and members["ellipsoid"].n == 2
