"""technet: autocatalytic structure detection in temporal technology networks.

The pipeline turns (family, year, region, code) event data into, per year
pair: an occurrence matrix, its RCA presence matrix, the lagged assist
network, null-model link p-values, the FDR-filtered directed network, its
autocatalytic core/periphery decomposition, and fitness/variety/mixing
statistics.
"""

__version__ = "0.1.0"

from .acs import AcsDecomposition, decompose, find_core, find_periphery, pf_eigen
from .assist import AssistMatrix, assist_matrix, diversification, ubiquity
from .dynamics import estimate_growth_rate, simulate_linear
from .fdr import TechnologyNetwork, bh_fdr, build_adjacency
from .hierarchy import CodeHierarchy
from .ingest import (
    EventRecord,
    OccurrenceMatrix,
    build_occurrence_matrix,
    parse_events,
    split_family_weights,
)
from .nullmodel import (
    BicmParameters,
    PvalueMatrix,
    empirical_pvalues,
    fit_bicm,
    null_assist_ensemble,
    sample_null_matrix,
)
from .pipeline import RunConfig, run_pipeline
from .rca import PresenceMatrix, binarize_rca
from .stats import (
    field_fitness,
    fit_noncentral_weights,
    section_mixing,
    section_occupancy,
    subset_fitness,
    variety_llr,
)
from .synth import SynthConfig, generate_events

__all__ = [
    "AcsDecomposition",
    "AssistMatrix",
    "BicmParameters",
    "CodeHierarchy",
    "EventRecord",
    "OccurrenceMatrix",
    "PresenceMatrix",
    "PvalueMatrix",
    "RunConfig",
    "SynthConfig",
    "TechnologyNetwork",
    "assist_matrix",
    "bh_fdr",
    "binarize_rca",
    "build_adjacency",
    "build_occurrence_matrix",
    "decompose",
    "diversification",
    "empirical_pvalues",
    "estimate_growth_rate",
    "field_fitness",
    "find_core",
    "find_periphery",
    "fit_bicm",
    "fit_noncentral_weights",
    "generate_events",
    "null_assist_ensemble",
    "parse_events",
    "pf_eigen",
    "run_pipeline",
    "sample_null_matrix",
    "section_mixing",
    "section_occupancy",
    "simulate_linear",
    "split_family_weights",
    "subset_fitness",
    "ubiquity",
    "variety_llr",
]
