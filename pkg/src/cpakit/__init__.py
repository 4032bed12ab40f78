"""Correlation power analysis of AES-128 from last-round power traces."""

from .aes_core import encrypt_with_states, expand_key, invert_key_schedule, selection_value
from .engine import AttackConfig, AttackResult, attack
from .synth import SynthConfig, generate_dataset
from .trace_model import CiphertextSet, Layout, Precision, TraceSet, load_ciphertexts, load_traces, save_traces

__all__ = [
    "AttackConfig",
    "AttackResult",
    "CiphertextSet",
    "Layout",
    "Precision",
    "SynthConfig",
    "TraceSet",
    "attack",
    "encrypt_with_states",
    "expand_key",
    "generate_dataset",
    "invert_key_schedule",
    "load_ciphertexts",
    "load_traces",
    "save_traces",
    "selection_value",
]
