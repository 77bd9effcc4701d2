from .main import build_parser, main
from .synthetic import SyntheticGraph, generate, majority_vote_accuracy, synth_schema

__all__ = ["SyntheticGraph", "build_parser", "generate", "main", "majority_vote_accuracy", "synth_schema"]
