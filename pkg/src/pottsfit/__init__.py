"""Sparse Potts model estimation by node-wise multinomial regression."""
from .cv import CvGrid, cross_validate
from .evaluate import fitness_benchmark, landscape, pair_dependency, selection_metrics, spearman
from .model import (MutationSpec, PottsParams, delta_e_multi, delta_e_single, energy,
                    parse_mutation_spec)
from .msa import Alignment, EncodedAlignment, encode, encode_states, parse_alignment
from .sampler import GibbsConfig, gen_coupling_m1, gen_coupling_m2, gibbs_sample
from .solver import FitConfig, SiteFit, fit_all, fit_site
from .structure import distance_matrix, group_weights

__version__ = "0.1.0"

__all__ = [
    "Alignment", "CvGrid", "EncodedAlignment", "FitConfig", "GibbsConfig", "MutationSpec",
    "PottsParams", "SiteFit", "cross_validate", "delta_e_multi", "delta_e_single",
    "distance_matrix", "encode", "encode_states", "energy", "fit_all", "fit_site",
    "fitness_benchmark", "gen_coupling_m1", "gen_coupling_m2", "gibbs_sample",
    "group_weights", "landscape", "pair_dependency", "parse_alignment",
    "parse_mutation_spec", "selection_metrics", "spearman",
]
