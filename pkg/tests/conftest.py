import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ufb.grid import Grid, GridField  # noqa: E402


@pytest.fixture(scope="session")
def cross_field():
    """u = x2^2 - 4 x1^2 on [-1/2, 1/2]^2, h = 1/256: free boundary x2 = +-2 x1."""
    g = Grid.square(0.5, 1 / 256)
    return GridField.sample(g, lambda X: X[..., 1] ** 2 - 4 * X[..., 0] ** 2)


@pytest.fixture(scope="session")
def bent_cross_field():
    """Product of the parabolas x2 = +-2 x1 + 2 x1^2: arcs tangent to x2 = +-2 x1 at 0."""
    g = Grid.square(0.5, 1 / 256)
    return GridField.sample(g, lambda X: (X[..., 1] - 2 * X[..., 0] - 2 * X[..., 0] ** 2)
                            * (X[..., 1] + 2 * X[..., 0] - 2 * X[..., 0] ** 2))


@pytest.fixture(scope="session")
def circle_arc_field():
    """Free boundary = circle of radius r = 1/4 centred at (r/2, 0): an arc in B_r(0) at distance r/2."""
    g = Grid.square(0.5, 1 / 256)
    return GridField.sample(g, lambda X: 0.25 ** 2 - ((X - np.array([0.125, 0.0])) ** 2).sum(-1))


@pytest.fixture(scope="session")
def sector_solutions():
    """Laplacian blow-up runs with lemma_v0 data for the three test apertures."""
    from ufb.cone import SectorSpec, blowup
    from ufb.operators import OperatorSpec

    out = {}
    for name, th in (("quarter", math.pi / 2), ("half", math.pi), ("three-quarter", 1.5 * math.pi)):
        out[name] = blowup(OperatorSpec.laplacian(2), SectorSpec(th))
    return out
