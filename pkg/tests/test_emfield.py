"""Propagation kernel, quadrature, and channel correlation checks.

The closed-form checks re-derive their expected values inline from the
kernel definition rather than trusting the module under test.
"""

import numpy as np
import pytest

from dcapa.emfield import (build_quadrature, correlations, green_dyadic,
                           load_channels, sample_channels, save_channels,
                           scalar_channel, FieldError)
from dcapa.scenario import (generate_scenario, PhysicalConstants, Surface,
                            User)

CONST = PhysicalConstants.from_wavelength()
EYE = np.eye(3)


def _aligned_surface(side=0.3):
    return Surface(sid=1, center=np.zeros(3), side=side, area=side ** 2,
                   power_budget=1e-3, basis=EYE.copy())


def _aligned_user(pos):
    return User(uid=1, kind="IU", position=np.asarray(pos, float),
                rx_basis=EYE.copy())


def test_copolar_sum_matches_closed_form():
    # With both frames aligned the axis sum telescopes to the trace, where
    # the reactive dyads cancel: h(u) = j kappa Z0 exp(j kappa r) / (2 pi r).
    surf = _aligned_surface()
    user = _aligned_user([0.4, -0.2, 1.7])
    rule = build_quadrature(surf, 6)
    h = scalar_channel(surf, user, rule, CONST)
    r = np.linalg.norm(user.position[None, :] - rule.nodes, axis=1)
    expected = (1j * CONST.kappa * CONST.Z0 * np.exp(1j * CONST.kappa * r)
                / (2.0 * np.pi * r))
    np.testing.assert_allclose(h, expected, rtol=1e-13)


def test_dyad_symmetry_and_reciprocity():
    r = np.array([0.3, 0.1, 1.2])
    u = np.array([-0.1, 0.05, 0.0])
    G = green_dyadic(r, u, CONST)
    np.testing.assert_allclose(G, G.T, rtol=1e-14)
    np.testing.assert_allclose(G, green_dyadic(u, r, CONST), rtol=1e-14)


def test_trace_decays_exactly_inverse_distance():
    u = np.zeros(3)
    tr_near = np.trace(green_dyadic(np.array([0.0, 0.0, 1.0]), u, CONST))
    tr_far = np.trace(green_dyadic(np.array([0.0, 0.0, 2.0]), u, CONST))
    assert abs(tr_near) / abs(tr_far) == pytest.approx(2.0, rel=1e-12)


def test_coincident_points_raise():
    p = np.array([0.1, 0.2, 0.3])
    with pytest.raises(FieldError):
        green_dyadic(p, p, CONST)


def test_quadrature_weights_sum_to_area():
    surf = _aligned_surface(side=0.41)
    for n in (1, 4, 9):
        rule = build_quadrature(surf, n)
        assert rule.weights.sum() == pytest.approx(surf.area, rel=1e-12)
        assert np.all(rule.weights > 0)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_quadrature_polynomial_exactness(n):
    # Gauss-Legendre with n nodes per axis integrates per-axis monomials up
    # to degree 2n - 1 exactly.
    surf = _aligned_surface(side=0.6)
    rule = build_quadrature(surf, n)
    half = surf.side / 2.0
    x, y = rule.nodes[:, 0], rule.nodes[:, 1]

    def mono_integral(p):
        return (half ** (p + 1) - (-half) ** (p + 1)) / (p + 1)

    for a in (0, 1, 2 * n - 1):
        for b in (0, 2 * n - 2):
            got = float(np.sum(rule.weights * x ** a * y ** b))
            want = mono_integral(a) * mono_integral(b)
            assert got == pytest.approx(want, rel=1e-12, abs=1e-15)


def test_channel_self_convergence():
    # Gauss-Legendre converges exponentially once the per-axis node count
    # covers the aperture's phase oscillation; at the default 32 the halving
    # error is far below the 1e-6 contract.
    scn = generate_scenario(1, 1, 2, 1, 1.0, 1e-2)
    coarse = correlations(sample_channels(scn, 32))
    fine = correlations(sample_channels(scn, 64))
    for c, f in zip(coarse, fine):
        rel = np.linalg.norm(c.A - f.A) / np.linalg.norm(f.A)
        assert rel < 1e-6


def test_correlations_hermitian_psd_and_diagonal():
    scn = generate_scenario(8, 2, 3, 2, 1.0, 1e-2)
    channels = sample_channels(scn, 10)
    for s, corr in enumerate(correlations(channels)):
        corr.validate()
        # Diagonal equals the weighted channel energy, computed directly.
        w = channels.rules[s].weights
        direct = np.sum(w * np.abs(channels.samples[s]) ** 2, axis=1)
        np.testing.assert_allclose(np.diag(corr.A).real, direct, rtol=1e-12)
        assert np.all(np.diag(corr.A).real > 0)


def test_mirrored_users_have_equal_energy():
    # Two users mirrored across the surface's x axis see congruent node
    # distance sets, so their channel energies agree.
    surf = _aligned_surface(side=0.5)
    rule = build_quadrature(surf, 8)
    pos = np.array([0.7, 0.3, 1.1])
    mirrored = pos * np.array([-1.0, 1.0, 1.0])
    ha = scalar_channel(surf, _aligned_user(pos), rule, CONST)
    hb = scalar_channel(surf, _aligned_user(mirrored), rule, CONST)
    ea = float(np.sum(rule.weights * np.abs(ha) ** 2))
    eb = float(np.sum(rule.weights * np.abs(hb) ** 2))
    assert ea == pytest.approx(eb, rel=1e-10)


def test_channel_dump_round_trip(tmp_path):
    scn = generate_scenario(3, 2, 2, 1, 1.0, 1e-2)
    channels = sample_channels(scn, 6)
    path = tmp_path / "channels.json"
    save_channels(channels, path)
    again = load_channels(path)
    np.testing.assert_array_equal(channels.samples, again.samples)
    assert channels.nodes_per_side == again.nodes_per_side
    for a, b in zip(channels.rules, again.rules):
        np.testing.assert_array_equal(a.nodes, b.nodes)
        np.testing.assert_array_equal(a.weights, b.weights)
