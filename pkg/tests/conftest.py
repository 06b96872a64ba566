import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from exprdsl import parse  # noqa: E402
from fields import Grid, ScalarField, sample  # noqa: E402
from invariants import AmbientSpec  # noqa: E402

CONFIG_DIR = ROOT / "configs"


@pytest.fixture
def unit_grid():
    return Grid.uv((0.0, 1.0), (0.0, 1.0), 17)


@pytest.fixture
def neutral_flat():
    return AmbientSpec("neutral", 0.0)


@pytest.fixture
def liouville_grid():
    # λ = -ln v solves λ_uu - λ_vv + e^{2λ} = 0 away from v = 0
    return Grid.uv((0.0, 1.0), (1.0, 2.0), 33)


@pytest.fixture
def liouville_lambda(liouville_grid):
    return sample(parse("-ln(v)", ("u", "v")), liouville_grid)


@pytest.fixture
def zero_lambda(unit_grid):
    return ScalarField.constant(unit_grid, 0.0)
