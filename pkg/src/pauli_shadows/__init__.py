"""Randomized-measurement state and channel estimation with Pauli-symmetric ensembles."""

from .engine import (
    EstimateReport,
    NonInvertibleError,
    ReconstructionMap,
    SnapshotSet,
    WTable,
    collect_snapshots,
    compute_W_exact,
    compute_W_noisy,
    compute_W_u,
    estimate_observable,
    estimate_W_monte_carlo,
    invert_W,
)
from .ensembles import EnsembleSpec, NotEnumerableError
from .pauli import PauliLabel, PhasedPauli, parse_observable, pauli_compose

__version__ = "0.1.0"

__all__ = [
    "EnsembleSpec",
    "EstimateReport",
    "NonInvertibleError",
    "NotEnumerableError",
    "PauliLabel",
    "PhasedPauli",
    "ReconstructionMap",
    "SnapshotSet",
    "WTable",
    "collect_snapshots",
    "compute_W_exact",
    "compute_W_noisy",
    "compute_W_u",
    "estimate_W_monte_carlo",
    "estimate_observable",
    "invert_W",
    "parse_observable",
    "pauli_compose",
]
