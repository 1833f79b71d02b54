"""Independent verification oracles.

Everything here re-derives its answer without calling the implementation
under test: finite differences for gradients, refined quadrature for
integrals, exhaustive grid search for tiny allocation problems, and a
straight-line re-statement of the augmented-Lagrangian objective. Reports
append to a checks.csv for CI consumption.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .emfield import ChannelSet, sample_channels
from .scenario import Scenario


class OracleDomainError(ValueError):
    """Oracle preconditions violated (e.g. FD point too close to the box)."""


@dataclass(frozen=True)
class OracleReport:
    name: str
    max_abs_err: float
    max_rel_err: float
    samples: int
    passed: bool

    CSV_COLUMNS = ("name", "max_abs_err", "max_rel_err", "samples", "passed")

    def csv_row(self) -> list:
        return [self.name, self.max_abs_err, self.max_rel_err,
                self.samples, self.passed]


def append_report(path: str | Path, report: OracleReport) -> None:
    path = Path(path)
    new = not path.exists()
    with path.open("a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(OracleReport.CSV_COLUMNS)
        writer.writerow(report.csv_row())


def fd_gradient(f, omega: np.ndarray, step, upper: np.ndarray | None = None
                ) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array.

    step may be a scalar or an array broadcastable to omega. When upper is
    given, the point must sit strictly inside [0, upper] with margin 2*step
    so both probes stay in-domain.
    """
    omega = np.asarray(omega, float)
    h = np.broadcast_to(np.asarray(step, float), omega.shape)
    if np.any(h <= 0):
        raise OracleDomainError("step must be > 0")
    if upper is not None:
        if np.any(omega - 2 * h < 0) or np.any(omega + 2 * h > upper):
            raise OracleDomainError(
                "point not interior to the box by a 2*step margin")
    grad = np.empty_like(omega)
    it = np.nditer(omega, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        hp = omega.copy()
        hm = omega.copy()
        hp[idx] += h[idx]
        hm[idx] -= h[idx]
        grad[idx] = (f(hp) - f(hm)) / (2.0 * h[idx])
    return grad


def gradient_check(f, grad_fn, points, step, upper: np.ndarray | None = None,
                   name: str = "gradient", tol: float = 1e-6) -> OracleReport:
    """Compare an analytic gradient against central differences.

    Relative error per point is norm-normalized:
    ||fd - analytic||_inf / ||analytic||_inf.
    """
    max_abs = 0.0
    max_rel = 0.0
    n = 0
    for omega in points:
        fd = fd_gradient(f, omega, step, upper)
        an = np.asarray(grad_fn(omega), float)
        abs_err = float(np.max(np.abs(fd - an)))
        scale = float(np.max(np.abs(an)))
        rel_err = abs_err / max(scale, 1e-300)
        max_abs = max(max_abs, abs_err)
        max_rel = max(max_rel, rel_err)
        n += 1
    return OracleReport(name=name, max_abs_err=max_abs, max_rel_err=max_rel,
                        samples=n, passed=max_rel < tol)


def refine_quadrature(scenario: Scenario, factor: int = 2,
                      base_nodes_per_side: int = 32) -> ChannelSet:
    """Channels resampled on a refined grid, for self-convergence checks."""
    if factor < 2:
        raise OracleDomainError("refinement factor must be >= 2")
    return sample_channels(scenario, base_nodes_per_side * factor)


def reference_al_objective(omega: np.ndarray, lam_se: np.ndarray,
                           lam_he: np.ndarray, rho: float, beta: float,
                           magsq: np.ndarray, gamma_floor: np.ndarray,
                           q_floor: np.ndarray, sigma2: float,
                           harvest_coef: np.ndarray) -> float:
    """Straight-line restatement of the penalized objective, all loops.

    Hinge residuals are fractions of their floors, matching the solver.
    """
    S, K, _ = magsq.shape
    L = len(gamma_floor)
    total = 0.0
    for s in range(S):
        for j in range(K):
            total += omega[s, j] ** 2
    for l in range(L):
        num = 0.0
        intf = 0.0
        for s in range(S):
            for j in range(K):
                term = omega[s, j] ** 2 * magsq[s, l, j]
                if j == l:
                    num += term
                else:
                    intf += term
        gamma = num / (intf + sigma2)
        v = max((gamma_floor[l] - gamma) / gamma_floor[l], 0.0)
        total += lam_se[l] * v + 0.5 * rho * v * v
    for m in range(len(q_floor)):
        acc = 0.0
        for s in range(S):
            for j in range(K):
                acc += omega[s, j] ** 2 * magsq[s, L + m, j]
        q = harvest_coef[m] * acc
        v = max((q_floor[m] - q) / q_floor[m], 0.0)
        total += beta * (lam_he[m] * v + 0.5 * rho * v * v)
    return total


@dataclass(frozen=True)
class GridSearchResult:
    omega: np.ndarray   # (S, K) best feasible point
    pc: float
    feasible_points: int
    total_points: int


def grid_search_pa(magsq: np.ndarray, gamma_floor: np.ndarray,
                   q_floor: np.ndarray, sigma2: float,
                   harvest_coef: np.ndarray, upper: np.ndarray,
                   grid_points: int, epsilon: float) -> GridSearchResult:
    """Exhaustive grid search over the allocation box, for S*K <= 4.

    Feasibility matches the solver's convergence measure: the Euclidean
    norms of the floor-normalized hinge residual vectors must both be
    <= epsilon. Returns the feasible grid point of least total power.
    """
    S, K, _ = magsq.shape
    dims = S * K
    if dims > 4:
        raise OracleDomainError(f"grid search limited to S*K <= 4, got {dims}")
    L = len(gamma_floor)
    axes = [np.linspace(0.0, float(np.asarray(upper).reshape(S, K)[s, j]),
                        grid_points)
            for s in range(S) for j in range(K)]
    mesh = np.meshgrid(*axes, indexing="ij")
    omegas = np.stack([m.reshape(-1) for m in mesh], axis=-1)  # (G, S*K)
    G = omegas.shape[0]
    P = (omegas ** 2).reshape(G, S, K)

    totals = np.tensordot(P, magsq, axes=([1, 2], [0, 2]))  # (G, K)
    pc = P.sum(axis=(1, 2))
    feasible = np.ones(G, dtype=bool)

    se_sq = np.zeros(G)
    for l in range(L):
        num = np.einsum("gs,s->g", P[:, :, l], magsq[:, l, l])
        den = totals[:, l] - num + sigma2
        v = np.maximum(1.0 - (num / den) / gamma_floor[l], 0.0)
        se_sq += v * v
    he_sq = np.zeros(G)
    for m in range(len(q_floor)):
        q = harvest_coef[m] * totals[:, L + m]
        v = np.maximum(1.0 - q / q_floor[m], 0.0)
        he_sq += v * v
    feasible &= np.sqrt(se_sq) <= epsilon
    feasible &= np.sqrt(he_sq) <= epsilon

    if not feasible.any():
        raise OracleDomainError("no feasible grid point")
    pc_masked = np.where(feasible, pc, np.inf)
    best = int(np.argmin(pc_masked))
    return GridSearchResult(omega=omegas[best].reshape(S, K),
                            pc=float(pc[best]),
                            feasible_points=int(feasible.sum()),
                            total_points=G)
