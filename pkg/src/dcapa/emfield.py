"""Free-space dyadic propagation kernel, aperture quadrature, and the
scalar co-polar channels it induces between surfaces and users.

Channel samples are kept on tensor-product Gauss-Legendre grids so that all
aperture integrals downstream reduce to weighted sums over the same nodes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss

from .scenario import Scenario, ScenarioFormatError, Surface, User, FORMAT_VERSION

DEFAULT_NODES_PER_SIDE = 32


class FieldError(ValueError):
    """Singular or invalid field evaluation."""


def green_dyadic(r: np.ndarray, u: np.ndarray, constants) -> np.ndarray:
    """Dyadic kernel G(r, u) between a source point u and a field point r.

    Returns the (3,3) complex dyad including the radiating term and both
    reactive corrections; all three are always evaluated.
    """
    G = _green_many(np.asarray(r, float)[None, :], np.asarray(u, float)[None, :],
                    constants)
    return G[0]


def _green_many(r: np.ndarray, pts: np.ndarray, constants) -> np.ndarray:
    """Vectorized dyad: r broadcast against pts, result (n, 3, 3)."""
    p = r - pts
    dist = np.linalg.norm(p, axis=-1)
    if np.any(dist == 0.0):
        raise FieldError("field point coincides with a source point")
    phat = p / dist[..., None]
    outer = phat[..., :, None] * phat[..., None, :]
    eye = np.eye(3)
    proj = eye - outer          # radiating dyad
    tilt = eye - 3.0 * outer    # shared by both reactive corrections
    kr = constants.kappa * dist
    pref = (1j * constants.kappa * constants.Z0 / (4.0 * np.pi)
            * np.exp(1j * kr) / dist)
    inv_kr = 1.0 / kr
    terms = proj + (1j * inv_kr + inv_kr ** 2)[..., None, None] * tilt
    return pref[..., None, None] * terms


@dataclass(frozen=True)
class QuadratureRule:
    surface_id: int
    nodes: np.ndarray    # (n, 3) aperture points [m]
    weights: np.ndarray  # (n,) positive, sums to the surface area
    nodes_per_side: int


def build_quadrature(surface: Surface, nodes_per_side: int = DEFAULT_NODES_PER_SIDE
                     ) -> QuadratureRule:
    """Tensor-product Gauss-Legendre rule over the square aperture.

    Exact for per-axis polynomials up to degree 2*nodes_per_side - 1.
    """
    if nodes_per_side < 1:
        raise ValueError("nodes_per_side must be >= 1")
    x, w = leggauss(nodes_per_side)
    half = surface.side / 2.0
    ax = x * half
    aw = w * half
    i_hat, j_hat = surface.basis[0], surface.basis[1]
    xv, yv = np.meshgrid(ax, ax, indexing="ij")
    nodes = (surface.center[None, :]
             + xv.reshape(-1, 1) * i_hat[None, :]
             + yv.reshape(-1, 1) * j_hat[None, :])
    weights = np.outer(aw, aw).reshape(-1)
    return QuadratureRule(surface_id=surface.sid, nodes=nodes,
                          weights=weights, nodes_per_side=nodes_per_side)


def scalar_channel(surface: Surface, user: User, rule: QuadratureRule,
                   constants) -> np.ndarray:
    """Co-polar scalar channel h(u_i) at every quadrature node, shape (n,).

    Combines the dyad through the receive and transmit frames axis by axis:
    h = sum_a rx_a^T G tx_a.
    """
    G = _green_many(user.position[None, :], rule.nodes, constants)
    return np.einsum("ai,nij,aj->n", user.rx_basis, G, surface.basis,
                     optimize=True)


@dataclass(frozen=True)
class ChannelSet:
    """Sampled channels h[s, k, i] for every surface, user, node."""
    samples: np.ndarray            # (S, K, n) complex
    rules: tuple[QuadratureRule, ...]
    nodes_per_side: int

    @property
    def weights(self) -> np.ndarray:
        """(S, n) node weights, one row per surface."""
        return np.stack([r.weights for r in self.rules])


def sample_channels(scenario: Scenario,
                    nodes_per_side: int = DEFAULT_NODES_PER_SIDE) -> ChannelSet:
    rules = tuple(build_quadrature(s, nodes_per_side) for s in scenario.surfaces)
    n = nodes_per_side ** 2
    h = np.empty((scenario.S, scenario.K, n), dtype=complex)
    for si, (surf, rule) in enumerate(zip(scenario.surfaces, rules)):
        for ki, user in enumerate(scenario.users):
            h[si, ki] = scalar_channel(surf, user, rule, scenario.constants)
    if not np.all(np.isfinite(h.view(float))):
        raise FieldError("non-finite channel sample")
    return ChannelSet(samples=h, rules=rules, nodes_per_side=nodes_per_side)


@dataclass(frozen=True)
class CorrelationMatrix:
    surface_id: int
    A: np.ndarray  # (K, K) complex Hermitian PSD channel correlation

    def validate(self, tol: float = 1e-12) -> None:
        scale = np.linalg.norm(self.A)
        if np.linalg.norm(self.A - self.A.conj().T) > tol * max(scale, 1e-300):
            raise ValueError(f"correlation for surface {self.surface_id} not Hermitian")
        evals = np.linalg.eigvalsh(self.A)
        if evals.min() < -1e-10 * max(evals.max(), 1e-300):
            raise ValueError(f"correlation for surface {self.surface_id} not PSD")


def correlation(channels: ChannelSet, surface_index: int) -> CorrelationMatrix:
    """A_kk' = sum_i w_i h[k, i] conj(h[k', i]) for one surface."""
    h = channels.samples[surface_index]
    w = channels.rules[surface_index].weights
    A = np.einsum("ki,i,li->kl", h, w, h.conj(), optimize=True)
    return CorrelationMatrix(surface_id=channels.rules[surface_index].surface_id,
                             A=A)


def correlations(channels: ChannelSet) -> tuple[CorrelationMatrix, ...]:
    return tuple(correlation(channels, s) for s in range(channels.samples.shape[0]))


# ---------------------------------------------------------------------------
# Channel dumps for regression fixtures: same JSON family as scenario files.

def save_channels(channels: ChannelSet, path: str | Path) -> None:
    data = {
        "format_version": FORMAT_VERSION,
        "nodes_per_side": channels.nodes_per_side,
        "surfaces": [
            {
                "id": rule.surface_id,
                "nodes_m": [list(p) for p in rule.nodes],
                "weights_m2": list(rule.weights),
                "h_re_im": [
                    [[z.real, z.imag] for z in channels.samples[si, ki]]
                    for ki in range(channels.samples.shape[1])
                ],
            }
            for si, rule in enumerate(channels.rules)
        ],
    }
    Path(path).write_text(json.dumps(data) + "\n")


def load_channels(path: str | Path) -> ChannelSet:
    try:
        data = json.loads(Path(path).read_text())
        if data["format_version"] != FORMAT_VERSION:
            raise ScenarioFormatError(
                f"unsupported format_version {data['format_version']!r}")
        nodes_per_side = int(data["nodes_per_side"])
        rules = []
        blocks = []
        for s in data["surfaces"]:
            rules.append(QuadratureRule(
                surface_id=int(s["id"]),
                nodes=np.array(s["nodes_m"], float),
                weights=np.array(s["weights_m2"], float),
                nodes_per_side=nodes_per_side))
            re_im = np.array(s["h_re_im"], float)
            blocks.append(re_im[..., 0] + 1j * re_im[..., 1])
    except ScenarioFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"bad channel dump: {exc}") from exc
    return ChannelSet(samples=np.stack(blocks), rules=tuple(rules),
                      nodes_per_side=nodes_per_side)
