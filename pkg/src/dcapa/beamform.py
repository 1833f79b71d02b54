"""Continuous transmit beamformers and their coupling gains.

Information users get regularized zero-forcing precoders over the pooled
channel correlation; energy users get maximum-ratio beams. Synthesis is the
matched-filter combination of the sampled channels, normalized to unit
radiated energy per surface-beam pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .emfield import ChannelSet, CorrelationMatrix

RZF_ALPHA_SCALE = 1e-2     # default alpha_ZF = 1e-2 * trace(A_L) / L
_COND_LIMIT = 1e12
_NORM_FLOOR = 1e-300


class PrecoderError(ValueError):
    """Regularized inverse is numerically unusable."""


class DegenerateBeamError(ValueError):
    """A beam has no radiated energy on some surface."""


@dataclass(frozen=True)
class PrecoderSet:
    """Columns of b are the per-beam combining vectors, b[:, j] for beam j."""
    b: np.ndarray       # (K, K) complex
    n_iu: int
    alpha_zf: float


def default_alpha_zf(A_iu: np.ndarray) -> float:
    return RZF_ALPHA_SCALE * float(np.trace(A_iu).real) / A_iu.shape[0]


def rzf_precoders(A_total: np.ndarray, n_iu: int,
                  alpha_zf: float | None = None) -> np.ndarray:
    """RZF combining vectors for the IU block, zero-padded to K rows.

    A_total is the pooled correlation sum over surfaces; only its leading
    IU block enters the inverse.
    """
    K = A_total.shape[0]
    if not 1 <= n_iu <= K:
        raise ValueError("n_iu out of range")
    A_iu = A_total[:n_iu, :n_iu]
    if alpha_zf is None:
        alpha_zf = default_alpha_zf(A_iu)
    if alpha_zf <= 0:
        raise PrecoderError("alpha_zf must be > 0")
    reg = A_iu + alpha_zf * np.eye(n_iu)
    cond = np.linalg.cond(reg)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise PrecoderError(
            f"regularized IU correlation is near-singular (cond {cond:.3e}); "
            f"increase alpha_zf (current {alpha_zf:.3e})")
    b = np.zeros((K, K), dtype=complex)
    b[:n_iu, :n_iu] = np.linalg.solve(reg, np.eye(n_iu))
    return b


def mrt_precoders(K: int, eu_indices: np.ndarray) -> np.ndarray:
    """Unit-vector selections for the EU beams, zero elsewhere."""
    b = np.zeros((K, K), dtype=complex)
    for j in eu_indices:
        b[j, j] = 1.0
    return b


def build_precoders(correlation_sum: np.ndarray, n_iu: int,
                    alpha_zf: float | None = None) -> PrecoderSet:
    K = correlation_sum.shape[0]
    if alpha_zf is None and n_iu >= 1:
        alpha_zf = default_alpha_zf(correlation_sum[:n_iu, :n_iu])
    b = rzf_precoders(correlation_sum, n_iu, alpha_zf) if n_iu else np.zeros(
        (K, K), dtype=complex)
    b += mrt_precoders(K, np.arange(n_iu, K))
    return PrecoderSet(b=b, n_iu=n_iu, alpha_zf=float(alpha_zf))


@dataclass(frozen=True)
class BeamformerSet:
    """theta[s, j, i]: beam j of surface s sampled at node i, unit energy."""
    theta: np.ndarray  # (S, K, n) complex
    norms: np.ndarray  # (S, K) real, b_j^H A^(s) b_j before normalization


def synthesize_beamformers(precoders: PrecoderSet, channels: ChannelSet,
                           corrs: tuple[CorrelationMatrix, ...]) -> BeamformerSet:
    """Matched-filter synthesis: theta_sj = sum_k b_jk conj(h_sk) / sqrt(b^H A b)."""
    S, K, n = channels.samples.shape
    theta = np.empty((S, K, n), dtype=complex)
    norms = np.empty((S, K))
    bT = precoders.b.T  # rows are b_j
    for s in range(S):
        A = corrs[s].A
        energy = np.real(np.einsum("jk,kl,jl->j", bT.conj(), A, bT,
                                   optimize=True))
        if np.any(energy <= _NORM_FLOOR):
            j = int(np.argmin(energy))
            raise DegenerateBeamError(
                f"beam {j} radiates no energy on surface {s + 1} "
                f"(b^H A b = {energy[j]:.3e})")
        norms[s] = energy
        theta[s] = (bT @ channels.samples[s].conj()) / np.sqrt(energy)[:, None]
    return BeamformerSet(theta=theta, norms=norms)


@dataclass(frozen=True)
class CouplingGains:
    """g[s, k, j] = sum_i w_i h[s, k, i] theta[s, j, i], with |g|^2 cached."""
    g: np.ndarray      # (S, K, K) complex
    magsq: np.ndarray  # (S, K, K) real


def coupling_gains(channels: ChannelSet, beams: BeamformerSet) -> CouplingGains:
    S = channels.samples.shape[0]
    g = np.empty(channels.samples.shape[:2] + (channels.samples.shape[1],),
                 dtype=complex)
    for s in range(S):
        w = channels.rules[s].weights
        g[s] = (channels.samples[s] * w) @ beams.theta[s].T
    return CouplingGains(g=g, magsq=np.abs(g) ** 2)
