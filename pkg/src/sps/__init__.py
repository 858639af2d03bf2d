"""Steady states, emission spectra and photon statistics of driven emitters."""

__version__ = "0.1.0"

from .qops import Operator, SpaceLayout, annihilation_op, embed_operator, space_compose, transition_op
from .liouville import DensityMatrix, LindbladModel, Propagator, build_liouvillian, evolve, steady_state
from .correl import emission_spectrum, g2_emitter, spectral_modes, two_time_correlation
from .models import LambdaParams, DetectorParams, build_emitter_detector, build_lambda_emitter

__all__ = [
    "Operator", "SpaceLayout", "annihilation_op", "embed_operator", "space_compose", "transition_op",
    "DensityMatrix", "LindbladModel", "Propagator", "build_liouvillian", "evolve", "steady_state",
    "emission_spectrum", "g2_emitter", "spectral_modes", "two_time_correlation",
    "LambdaParams", "DetectorParams", "build_emitter_detector", "build_lambda_emitter",
]
