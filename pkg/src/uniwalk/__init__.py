"""Explainable recommendation from random walks over a unified rating and social graph."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .errors import (DivergenceError, DuplicateRatingError, ModelFormatError, ParseError,
                     UniWalkError, UnknownEntityError)
from .graph import TransitionTable, UnifiedGraph, build_unified_graph, transition_table
from .ingest import (Dataset, DatasetStats, EntityIndex, RatingRecord, SocialEdge, holdout_split,
                     kfold_split, parse_ratings, parse_trust)
from .kinds import EntityKind, LinkKind, PairSet, WalkKind
from .pairs import ClassifiedPair, CoocCounts, extract_pairs
from .persistence import load_model, save_model
from .recommender import ExplanationReport, Recommender, similarity
from .trainer import FittedModel, Hyperparams, ModelParams, fit, train
from .walker import Walk, generate_walks, sample_walk

__all__ = [
    "BACKEND", "ClassifiedPair", "CoocCounts", "Dataset", "DatasetStats", "DivergenceError",
    "DuplicateRatingError", "EntityIndex", "EntityKind", "ExplanationReport", "FittedModel",
    "Hyperparams", "LinkKind", "ModelFormatError", "ModelParams", "PairSet", "ParseError",
    "RatingRecord", "Recommender", "SocialEdge", "TransitionTable", "UniWalkError",
    "UnifiedGraph", "UnknownEntityError", "Walk", "WalkKind", "build_unified_graph",
    "extract_pairs", "fit", "generate_walks", "holdout_split", "kfold_split", "load_model",
    "parse_ratings", "parse_trust", "sample_walk", "save_model", "similarity", "train",
    "transition_table",
]
