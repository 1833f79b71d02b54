"""Shared fixtures: small deterministic scenario/link bundles."""

import pytest

from dcapa.pipeline import build_link
from dcapa.scenario import generate_scenario


def make_link(seed=3, surfaces=2, ius=4, eus=2, aperture=1.0, power=1e-2,
              quad_n=12, alpha_zf=None):
    scn = generate_scenario(seed, surfaces, ius, eus, aperture, power)
    return build_link(scn, quad_n, alpha_zf)


@pytest.fixture(scope="session")
def link_s2():
    """Two surfaces, 4 IU + 2 EU, modest quadrature: the workhorse case."""
    return make_link()
