"""Scenario construction, placement rules, and JSON round-trips."""

import math

import numpy as np
import pytest

from dcapa.scenario import (generate_scenario, load_scenario, save_scenario,
                            scenario_from_dict, scenario_to_dict,
                            LayoutParams, PhysicalConstants, PlacementError,
                            ScenarioError, ScenarioFormatError,
                            ScenarioValidationError)


def test_round_trip_file(tmp_path):
    scn = generate_scenario(5, 3, 4, 2, 1.0, 1e-2)
    path = tmp_path / "scn.json"
    save_scenario(scn, path)
    again = load_scenario(path)
    assert scn.same_as(again)


def test_round_trip_dict():
    scn = generate_scenario(9, 2, 3, 3, 0.5, 5e-3)
    assert scn.same_as(scenario_from_dict(scenario_to_dict(scn)))


def test_equal_split_geometry():
    scn = generate_scenario(1, 6, 2, 1, 1.0, 1e-2)
    side = math.sqrt(1.0 / 6.0)
    for surf in scn.surfaces:
        assert surf.side == pytest.approx(side, rel=1e-12)
    assert sum(s.area for s in scn.surfaces) == pytest.approx(1.0, rel=1e-12)
    assert sum(s.power_budget for s in scn.surfaces) == pytest.approx(
        1e-2, rel=1e-12)


def test_same_seed_same_layout():
    a = generate_scenario(7, 3, 4, 2, 1.0, 1e-2)
    b = generate_scenario(7, 3, 4, 2, 1.0, 1e-2)
    assert a.same_as(b)
    c = generate_scenario(8, 3, 4, 2, 1.0, 1e-2)
    assert not a.same_as(c)


def test_draw_order_isolates_groups():
    # Surfaces and IUs are drawn before EUs, so adding EUs must not move them.
    a = generate_scenario(4, 2, 3, 1, 1.0, 1e-2)
    b = generate_scenario(4, 2, 3, 4, 1.0, 1e-2)
    for sa, sb in zip(a.surfaces, b.surfaces):
        np.testing.assert_array_equal(sa.center, sb.center)
    for ua, ub in zip(a.iu_users(), b.iu_users()):
        np.testing.assert_array_equal(ua.position, ub.position)


def test_user_ordering_and_counts():
    scn = generate_scenario(2, 1, 3, 2, 1.0, 1e-2)
    assert scn.L == 3 and scn.M == 2 and scn.K == 5
    assert [u.uid for u in scn.users] == [1, 2, 3, 4, 5]
    assert [u.kind for u in scn.users] == ["IU"] * 3 + ["EU"] * 2


def test_placement_rules():
    layout = LayoutParams()
    scn = generate_scenario(13, 4, 6, 4, 1.0, 1e-2)
    for surf in scn.surfaces:
        assert surf.center[2] == 0.0
    # Non-overlap: center spacing at least one side length.
    for i, a in enumerate(scn.surfaces):
        for b in scn.surfaces[i + 1:]:
            gap = np.hypot(*(a.center[:2] - b.center[:2]))
            assert gap >= a.side - 1e-12
    for u in scn.users:
        lo, hi = (layout.iu_z if u.kind == "IU" else layout.eu_z)
        assert lo <= u.position[2] <= hi
    for u in scn.eu_users():
        assert u.antenna_normal is not None
        assert 0.0 <= u.incidence_cos <= 1.0
        # Each EU sits in a box around some surface center.
        near = min(np.hypot(*(u.position[:2] - s.center[:2]))
                   for s in scn.surfaces)
        assert near <= math.sqrt(2.0) * layout.eu_box_halfwidth + 1e-12


@pytest.mark.parametrize("args", [
    (1, 0, 3, 2, 1.0, 1e-2),    # no surfaces
    (1, 1, 0, 0, 1.0, 1e-2),    # no users
    (1, 1, 3, 2, -1.0, 1e-2),   # bad aperture
    (1, 1, 3, 2, 1.0, 0.0),     # bad power
])
def test_invalid_params_raise(args):
    with pytest.raises(ScenarioError):
        generate_scenario(*args)


def test_placement_failure_raises():
    # A region too small for six non-overlapping large surfaces.
    layout = LayoutParams(region_halfwidth=0.1, max_attempts=50)
    with pytest.raises(PlacementError):
        generate_scenario(1, 6, 1, 1, 6.0, 1e-2, layout=layout)


def test_constants_validation():
    good = PhysicalConstants.from_wavelength()
    good.validate()
    with pytest.raises(ScenarioValidationError):
        PhysicalConstants(lam=good.lam, kappa=good.kappa * 1.01, Z0=good.Z0,
                          Z=good.Z, sigma2=good.sigma2, A_R=good.A_R,
                          eh_a=good.eh_a, eh_b=good.eh_b,
                          Q_max=good.Q_max).validate()


def test_corrupt_file_raises(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ScenarioFormatError):
        load_scenario(path)


def test_wrong_version_raises(tmp_path):
    scn = generate_scenario(1, 1, 1, 1, 1.0, 1e-2)
    data = scenario_to_dict(scn)
    data["format_version"] = 999
    with pytest.raises(ScenarioFormatError):
        scenario_from_dict(data)
