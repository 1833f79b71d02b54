"""Verification helpers: the checkers themselves must be trustworthy."""

import csv

import numpy as np
import pytest

from dcapa.alopt import ALProblem, SolveOptions, solve
from dcapa.metrics import harvest_coefficients
from dcapa.oracle import (append_report, fd_gradient, gradient_check,
                          grid_search_pa, refine_quadrature,
                          OracleDomainError, OracleReport)
from dcapa.scenario import generate_scenario
from dcapa.pipeline import build_link


def test_fd_quadratic_exact():
    c = np.array([[0.2, 0.7], [0.4, 0.1]])
    f = lambda x: float(np.sum((x - c) ** 2))
    x = np.array([[0.5, 0.5], [0.5, 0.5]])
    fd = fd_gradient(f, x, 1e-6)
    np.testing.assert_allclose(fd, 2.0 * (x - c), rtol=1e-9)


def test_fd_constant_zero():
    fd = fd_gradient(lambda x: 3.5, np.array([[0.1, 0.9]]), 1e-6)
    np.testing.assert_allclose(fd, 0.0, atol=1e-12)


def test_fd_domain_guards():
    f = lambda x: float(np.sum(x ** 2))
    with pytest.raises(OracleDomainError):
        fd_gradient(f, np.array([0.5]), 0.0)
    with pytest.raises(OracleDomainError):
        fd_gradient(f, np.array([1e-9]), 1e-6, upper=np.array([1.0]))
    with pytest.raises(OracleDomainError):
        fd_gradient(f, np.array([1.0 - 1e-9]), 1e-6, upper=np.array([1.0]))


def test_gradient_check_flags_wrong_gradient():
    f = lambda x: float(np.sum(x ** 2))
    right = lambda x: 2.0 * x
    wrong = lambda x: 2.0 * x + 0.01
    points = [np.array([[0.3, 0.6]]), np.array([[0.5, 0.2]])]
    assert gradient_check(f, right, points, 1e-6).passed
    report = gradient_check(f, wrong, points, 1e-6)
    assert not report.passed
    assert report.samples == 2


def test_report_append(tmp_path):
    path = tmp_path / "checks.csv"
    append_report(path, OracleReport("a", 1e-9, 1e-10, 5, True))
    append_report(path, OracleReport("b", 2e-9, 2e-10, 7, False))
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(OracleReport.CSV_COLUMNS)
    assert len(rows) == 3
    assert rows[1][0] == "a" and rows[2][0] == "b"


def test_refine_quadrature():
    scn = generate_scenario(2, 1, 1, 1, 1.0, 1e-2)
    fine = refine_quadrature(scn, factor=2, base_nodes_per_side=6)
    assert fine.nodes_per_side == 12
    with pytest.raises(OracleDomainError):
        refine_quadrature(scn, factor=1)


def test_grid_search_guards():
    magsq = np.zeros((2, 3, 3))
    with pytest.raises(OracleDomainError):
        grid_search_pa(magsq, np.ones(2), np.ones(1), 1e-9, np.ones(1),
                       np.ones((2, 3)), 10, 1e-3)


def test_grid_search_matches_analytic_minimum():
    # Diagonal couplings decouple the two constraints, so the least feasible
    # power is gf * sigma2 / |g11|^2 + qf / |g22|^2, computable by hand.
    g = np.zeros((1, 2, 2), dtype=complex)
    g[0, 0, 0] = 2.0
    g[0, 1, 1] = 3.0
    magsq = np.abs(g) ** 2
    sigma2 = 1e-3
    gf = np.array([40.0])
    qf = np.array([0.09])
    coef = np.array([1.0])
    upper = np.ones((1, 2))
    analytic = gf[0] * sigma2 / 4.0 + qf[0] / 9.0
    res = grid_search_pa(magsq, gf, qf, sigma2, coef, upper, 201, 1e-3)
    assert res.feasible_points > 0
    assert res.total_points == 201 ** 2
    assert res.pc == pytest.approx(analytic, rel=0.05)
    # The grid's winner can undershoot only within the epsilon slack.
    assert res.pc > analytic * (1.0 - 5e-3)


def test_grid_agrees_with_solver_on_tiny_instance():
    scn = generate_scenario(11, 1, 1, 1, 1.0, 1e-2)
    link = build_link(scn, 16)
    problem = ALProblem.from_parts(link.gains, link.targets,
                                   scn.constants.sigma2,
                                   harvest_coefficients(scn), scn.L)
    upper = np.full((1, 2), np.sqrt(scn.total_power))
    grid = grid_search_pa(problem.magsq, problem.gamma_floor,
                          problem.q_floor, problem.sigma2,
                          problem.harvest_coef, upper, 80, 1e-3)
    result = solve(scn, link.gains, link.targets, SolveOptions())
    assert result.vmax <= 1e-3
    # The continuous solver must not lose to a coarse grid by more than the
    # quantization margin, and the grid bounds it from above.
    assert result.pc <= grid.pc * 1.02
