"""Simulation and analysis of distributed sequential probability ratio tests."""

from .analytics import ErrorTargets, RefinedConstants, ca_thresholds, refined_constants
from .consensus_weights import WeightMatrix, equal_weight_matrix, validate_condition1
from .detectors import (
    ExplicitDissemination,
    SensorVerdict,
    Thresholds,
    ca_dsprt_trial,
    csprt_trial,
    local_dsprt_trial,
    sd_dsprt_trial_closed_form,
    sd_dsprt_trial_explicit,
)
from .hypothesis_models import HypothesisModel, ModelSet
from .montecarlo import DetectorSpec, ExperimentConfig, run_experiment
from .streams import CounterStream
from .topology import Topology, delay_matrix, from_edge_list, ring_topology

__all__ = [
    "CounterStream",
    "DetectorSpec",
    "ErrorTargets",
    "ExperimentConfig",
    "ExplicitDissemination",
    "HypothesisModel",
    "ModelSet",
    "RefinedConstants",
    "SensorVerdict",
    "Thresholds",
    "Topology",
    "WeightMatrix",
    "ca_dsprt_trial",
    "ca_thresholds",
    "csprt_trial",
    "delay_matrix",
    "equal_weight_matrix",
    "from_edge_list",
    "local_dsprt_trial",
    "refined_constants",
    "ring_topology",
    "run_experiment",
    "sd_dsprt_trial_closed_form",
    "sd_dsprt_trial_explicit",
    "validate_condition1",
]
