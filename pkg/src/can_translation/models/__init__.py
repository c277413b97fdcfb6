"""
Models module for the CAN translation toolkit.
Tokenization, diagnostic matching and message packing.
"""

from .tokenizer import BitClassification, TokenBoundary, categorize_bits, valid_token_boundaries
from .matcher import Endianness, InterpolationMode, TokenMatch, match_traces
from .packer import PackingCandidate, PayloadMap, find_optimal_payload, reduce_to_candidates
