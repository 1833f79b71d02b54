"""Link metrics: SINR and spectral efficiency for information users,
harvested power (linear front end and nonlinear rectifier) for energy
users, total power consumption, and aperture power density.

Everything is evaluated from the cached coupling-gain magnitudes, so the
metric layer never touches channel samples directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beamform import BeamformerSet, CouplingGains
from .scenario import Scenario


@dataclass(frozen=True)
class PowerAllocation:
    """Per-surface, per-beam amplitude weights Omega[s, j] >= 0 [A]."""
    omega: np.ndarray  # (S, K) real

    def validate(self) -> None:
        if self.omega.ndim != 2:
            raise ValueError("omega must be (S, K)")
        if np.any(self.omega < 0) or not np.all(np.isfinite(self.omega)):
            raise ValueError("omega entries must be finite and >= 0")

    @property
    def powers(self) -> np.ndarray:
        return self.omega ** 2


def epa_allocation(total_power: float, n_surfaces: int, n_beams: int
                   ) -> PowerAllocation:
    """Equal power allocation: Omega = sqrt(P_t / (S K)) everywhere, so each
    surface radiates exactly its budget P_t / S."""
    w = np.full((n_surfaces, n_beams), np.sqrt(total_power / (n_surfaces * n_beams)))
    return PowerAllocation(omega=w)


def power_consumption(alloc: PowerAllocation) -> float:
    return float(np.sum(alloc.powers))


def per_surface_power(alloc: PowerAllocation) -> np.ndarray:
    return alloc.powers.sum(axis=1)


def beam_totals(gains: CouplingGains, alloc: PowerAllocation) -> np.ndarray:
    """T[k] = sum_s sum_j Omega[s,j]^2 |g[s,k,j]|^2, per user."""
    return np.einsum("sj,skj->k", alloc.powers, gains.magsq, optimize=True)


def sinr(gains: CouplingGains, alloc: PowerAllocation, sigma2, n_iu: int
         ) -> np.ndarray:
    """Per-IU SINR: own beams from every surface add coherently in power;
    everything else is interference."""
    P = alloc.powers
    totals = beam_totals(gains, alloc)[:n_iu]
    diag = np.diagonal(gains.magsq, axis1=1, axis2=2)  # (S, K) self couplings
    num = np.einsum("sl,sl->l", P[:, :n_iu], diag[:, :n_iu])
    den = totals - num + np.broadcast_to(np.asarray(sigma2, float), (n_iu,))
    return num / den


def spectral_efficiency(sinr_values: np.ndarray) -> np.ndarray:
    return np.log2(1.0 + sinr_values)


def harvest_coefficients(scenario: Scenario) -> np.ndarray:
    """Per-EU factor A_R cos(phi) / (2 Z) mapping beam totals to watts."""
    c = scenario.constants
    cos = np.array([u.incidence_cos for u in scenario.eu_users()])
    return c.A_R * cos / (2.0 * c.Z)


def harvested_power(gains: CouplingGains, alloc: PowerAllocation,
                    coefficients: np.ndarray, n_iu: int) -> np.ndarray:
    """Linear harvested power per EU [W]; EUs occupy beam slots n_iu..K-1."""
    totals = beam_totals(gains, alloc)
    return coefficients * totals[n_iu:]


def nl_harvest(q_linear, constants) -> np.ndarray:
    """Nonlinear rectifier output for linear input power q_linear [W].

    Logistic saturation normalized so zero input harvests exactly zero and
    the output approaches Q_max from below.
    """
    q = np.asarray(q_linear, dtype=float)
    eab = np.exp(constants.eh_a * constants.eh_b)
    scale = eab / (1.0 + eab)
    offset = constants.Q_max / eab
    raw = constants.Q_max / (scale * (1.0 + np.exp(-constants.eh_a * (q - constants.eh_b))))
    return raw - offset


@dataclass(frozen=True)
class QosTargets:
    """Per-user service floors taken from the EPA operating point."""
    gamma: np.ndarray  # (L,) SINR floors, linear
    q: np.ndarray      # (M,) linear harvested power floors [W]


def qos_targets(gains: CouplingGains, scenario: Scenario) -> QosTargets:
    epa = epa_allocation(scenario.total_power, scenario.S, scenario.K)
    coeffs = harvest_coefficients(scenario)
    return QosTargets(
        gamma=sinr(gains, epa, scenario.constants.sigma2, scenario.L),
        q=harvested_power(gains, epa, coeffs, scenario.L))


def surface_power_density(alloc: PowerAllocation, beams: BeamformerSet,
                          surface_index: int) -> np.ndarray:
    """Radiated power density at each node of one surface [A^2/m^2]."""
    P = alloc.powers[surface_index]
    return P @ np.abs(beams.theta[surface_index]) ** 2


def peak_surface_density(alloc: PowerAllocation, beams: BeamformerSet) -> float:
    """Max node density over all surfaces."""
    return max(float(surface_power_density(alloc, beams, s).max())
               for s in range(alloc.omega.shape[0]))


def epa_mean_density(total_power: float, total_aperture: float) -> float:
    """Aperture-averaged density of the EPA reference."""
    return total_power / total_aperture


@dataclass(frozen=True)
class MetricsReport:
    pc: float                    # total consumed power [A^2]
    sinr: np.ndarray             # (L,) linear
    se: np.ndarray               # (L,) bit/s/Hz
    q_linear: np.ndarray         # (M,) W
    q_nonlinear: np.ndarray      # (M,) W
    peak_density: float          # [A^2/m^2]
    per_surface_power: np.ndarray  # (S,) [A^2]

    CSV_COLUMNS = ("pc_A2", "se_sum_bps_hz", "sinr_min", "sinr_mean",
                   "q_lin_min_W", "q_lin_sum_W", "q_nl_min_W", "q_nl_sum_W",
                   "peak_density_A2_per_m2", "surface_power_max_A2")

    def csv_row(self) -> list:
        """Flat row matching CSV_COLUMNS."""
        return [
            self.pc,
            float(self.se.sum()) if self.se.size else 0.0,
            float(self.sinr.min()) if self.sinr.size else 0.0,
            float(self.sinr.mean()) if self.sinr.size else 0.0,
            float(self.q_linear.min()) if self.q_linear.size else 0.0,
            float(self.q_linear.sum()) if self.q_linear.size else 0.0,
            float(self.q_nonlinear.min()) if self.q_nonlinear.size else 0.0,
            float(self.q_nonlinear.sum()) if self.q_nonlinear.size else 0.0,
            self.peak_density,
            float(self.per_surface_power.max()),
        ]


def evaluate_metrics(scenario: Scenario, gains: CouplingGains,
                     beams: BeamformerSet, alloc: PowerAllocation
                     ) -> MetricsReport:
    coeffs = harvest_coefficients(scenario)
    gam = sinr(gains, alloc, scenario.constants.sigma2, scenario.L)
    q_lin = harvested_power(gains, alloc, coeffs, scenario.L)
    return MetricsReport(
        pc=power_consumption(alloc),
        sinr=gam,
        se=spectral_efficiency(gam),
        q_linear=q_lin,
        q_nonlinear=nl_harvest(q_lin, scenario.constants),
        peak_density=peak_surface_density(alloc, beams),
        per_surface_power=per_surface_power(alloc))
