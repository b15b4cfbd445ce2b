"""Operational semantics for relaxed memory models with a litmus-test explorer."""

from .explorer import ExplorationResult, Outcome, Strategy, Witness, explore, find_witness, replay_witness
from .interleaving import sc_explore
from .litmus import LitmusError, LitmusTest, builtin_corpus, format_test, parse_test, run_test
from .models import MODEL_NAMES, MemoryModel, builtin_model, load_model_file, validate_model
from .relaxed import RelaxedConfig, StepOptions

__all__ = [
    "ExplorationResult", "LitmusError", "LitmusTest", "MODEL_NAMES", "MemoryModel", "Outcome",
    "RelaxedConfig", "StepOptions", "Strategy", "Witness", "builtin_corpus", "builtin_model",
    "explore", "find_witness", "format_test", "load_model_file", "parse_test", "replay_witness",
    "run_test", "sc_explore", "validate_model",
]
