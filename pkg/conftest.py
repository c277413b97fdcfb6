"""
Shared pytest fixtures for the CAN translation toolkit tests.
"""

import os
import sys

import numpy as np
import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from can_translation.analysis_pipeline import CanTranslator
from can_translation.config import AnalysisConfig
from can_translation.data.synth import default_synth_config, generate_capture
from can_translation.data.traces import AidKey, AidTrace


def bits_trace(rows, aid: int = 0x100, step: float = 0.01) -> AidTrace:
    """AidTrace from a list of 64-element 0/1 rows (or an n x 64 array)."""
    bits = np.asarray(rows, dtype=np.uint8).reshape(-1, 64)
    return AidTrace(aid=AidKey(aid), times=np.arange(len(bits)) * step, bits=bits)


def payload_trace(payloads, aid: int = 0x100, step: float = 0.01) -> AidTrace:
    """AidTrace from a list of 8-byte payloads."""
    raw = np.frombuffer(b''.join(bytes(p) for p in payloads), dtype=np.uint8).reshape(-1, 8)
    return bits_trace(np.unpackbits(raw, axis=1, bitorder='big'), aid=aid, step=step)


@pytest.fixture
def make_bits_trace():
    return bits_trace


@pytest.fixture
def make_payload_trace():
    return payload_trace


@pytest.fixture(scope="session")
def synthetic():
    """Default 600 s synthetic capture and its ground truth (seed 42)."""
    return generate_capture(default_synth_config(duration=600.0, seed=42))


@pytest.fixture(scope="session")
def synthetic_report(synthetic):
    capture, _ = synthetic
    return CanTranslator(AnalysisConfig(alpha=0.5, workers=4)).analyze_capture(capture)
