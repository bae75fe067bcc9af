from pathlib import Path

import pytest

from mcflab.geometry import build_dumbbell, build_perturbed_sphere, build_sphere
from mcflab.mcflab_common import Backend

AXI_NODES = 129
MESH_NODES = 642

SPHERE_CONFIG = """\
[scenario]
kind = sphere
n = 2
radius = 1.0
resolution = 64
backend = axi

[flow]
max_steps = 20000
"""


@pytest.fixture
def axi_sphere():
    return build_sphere(Backend.AXI, 2, 1.0, AXI_NODES)


@pytest.fixture
def mesh_sphere():
    return build_sphere(Backend.MESH, 2, 1.0, MESH_NODES)


@pytest.fixture
def perturbed_profile():
    return build_perturbed_sphere(Backend.AXI, 2, 1.0, 2, 0.1, AXI_NODES)


@pytest.fixture
def dumbbell_profile():
    return build_dumbbell(2, 0.4, 1.0, 3.0, AXI_NODES)


@pytest.fixture
def write_config(tmp_path):
    """Write config text to a file under tmp_path and return its path."""
    def write(text: str, name: str = "experiment.ini") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path
    return write
