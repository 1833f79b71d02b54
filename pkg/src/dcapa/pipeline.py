"""One-call wiring from a scenario to the objects the optimizer consumes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beamform import (BeamformerSet, CouplingGains, PrecoderSet,
                       build_precoders, coupling_gains, synthesize_beamformers)
from .emfield import (ChannelSet, CorrelationMatrix, correlations,
                      sample_channels, DEFAULT_NODES_PER_SIDE)
from .metrics import QosTargets, qos_targets
from .scenario import Scenario


@dataclass(frozen=True)
class LinkProducts:
    scenario: Scenario
    channels: ChannelSet
    corrs: tuple[CorrelationMatrix, ...]
    precoders: PrecoderSet
    beams: BeamformerSet
    gains: CouplingGains
    targets: QosTargets


def build_link(scenario: Scenario,
               nodes_per_side: int = DEFAULT_NODES_PER_SIDE,
               alpha_zf: float | None = None) -> LinkProducts:
    """Sample channels, build beams, and derive the EPA QoS floors."""
    channels = sample_channels(scenario, nodes_per_side)
    corrs = correlations(channels)
    pooled = np.sum([c.A for c in corrs], axis=0)
    precoders = build_precoders(pooled, scenario.L, alpha_zf)
    beams = synthesize_beamformers(precoders, channels, corrs)
    gains = coupling_gains(channels, beams)
    targets = qos_targets(gains, scenario)
    return LinkProducts(scenario=scenario, channels=channels, corrs=corrs,
                        precoders=precoders, beams=beams, gains=gains,
                        targets=targets)
