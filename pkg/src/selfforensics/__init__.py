"""Self-forensics toolkit: case files, event reconstruction, evidence journals."""

__version__ = "0.1.0"

from .dsl import CaseError, CaseSpec, Diagnostic, parse_case, render_case, validate
from .journal import Journal, SensorConfig, ingest, verify
from .model import (
    INF,
    WILDCARD,
    EvidentialStatement,
    Observation,
    ObservationSequence,
    Run,
    SystemModel,
    eval_property,
    make_observation,
    matches_sequence,
)
from .reconstruct import agrees, compile_story, psi, psi_inverse, rank_theories, reconstruct
from .simulator import FaultSpec, parse_faults, simulate

__all__ = [
    "INF", "WILDCARD", "CaseError", "CaseSpec", "Diagnostic", "EvidentialStatement", "FaultSpec",
    "Journal", "Observation", "ObservationSequence", "Run", "SensorConfig", "SystemModel",
    "agrees", "compile_story", "eval_property", "ingest", "make_observation", "matches_sequence",
    "parse_case", "parse_faults", "psi", "psi_inverse", "rank_theories", "reconstruct",
    "render_case", "simulate", "validate", "verify",
]
