"""Distributed continuous-aperture array SWIPT simulator."""

from .scenario import (PhysicalConstants, Scenario, Surface, User,
                       LayoutParams, generate_scenario, load_scenario,
                       save_scenario, ScenarioError)
from .emfield import (green_dyadic, build_quadrature, sample_channels,
                      correlations, ChannelSet, QuadratureRule,
                      CorrelationMatrix, FieldError)
from .beamform import (build_precoders, synthesize_beamformers,
                       coupling_gains, PrecoderSet, BeamformerSet,
                       CouplingGains)
from .metrics import (PowerAllocation, MetricsReport, QosTargets,
                      epa_allocation, evaluate_metrics, qos_targets,
                      sinr, spectral_efficiency, harvested_power, nl_harvest,
                      power_consumption, peak_surface_density,
                      epa_mean_density)
from .alopt import (SolveOptions, SolveResult, solve, solve_scenario,
                    lbfgsb_minimize, al_objective, al_gradient)
from .pipeline import LinkProducts, build_link

__version__ = "0.1.0"
