"""
Trace builder for the CAN translation toolkit.
Splits a capture into per-AID bit matrices and per-PID diagnostic series,
decoding the OBD-II responses that ride on the same bus.
"""

import os
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ..errors import MalformedDiagnosticFrame
from .canio import Capture, CanFrame

logger = logging.getLogger(__name__)

PID_TABLE_PATH = os.path.join(os.path.dirname(__file__), 'pid_formulas.json')

MODE01_POSITIVE = 0x41
NEGATIVE_RESPONSE = 0x7F


class AidKey(NamedTuple):
    """Arbitration identifier; 11-bit and 29-bit ids are separate key spaces."""
    value: int
    extended: bool = False

    @property
    def label(self) -> str:
        return f"{self.value:08X}" if self.extended else f"{self.value:03X}"

    @classmethod
    def parse(cls, label: str) -> "AidKey":
        return cls(int(label, 16), len(label) == 8)


class AidRange(NamedTuple):
    """Inclusive AID interval inside one identifier key space."""
    low: int
    high: int
    extended: bool = False

    def covers(self, key: AidKey) -> bool:
        return key.extended == self.extended and self.low <= key.value <= self.high


@dataclass(frozen=True)
class PidFormula:
    """Public conversion for one PID: physical = scale * raw + offset."""
    pid: int
    name: str
    byte_count: int
    scale: float
    offset: float
    unit: str

    def apply(self, raw: float) -> float:
        return self.scale * raw + self.offset


@dataclass
class AidTrace:
    """n x 64 bit matrix for one AID. Bit 0 is the MSB of payload byte 0."""
    aid: AidKey
    times: np.ndarray
    bits: np.ndarray

    def __post_init__(self):
        if len(self.times) < 1:
            raise ValueError("AID trace needs at least one frame")
        if self.bits.shape != (len(self.times), 64):
            raise ValueError(f"bit matrix shape {self.bits.shape} does not match {len(self.times)} frames")
        if np.any(np.diff(self.times) < 0):
            raise ValueError("AID trace times must be non-decreasing")

    @property
    def n(self) -> int:
        return len(self.times)


@dataclass
class DidTrace:
    """Raw integer responses for one diagnostic PID."""
    did: int
    times: np.ndarray
    values: np.ndarray
    formula: Optional[PidFormula] = None

    def __post_init__(self):
        if len(self.times) < 1 or len(self.times) != len(self.values):
            raise ValueError("DID trace needs matching, non-empty times and values")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("DID trace times must be strictly increasing")

    @property
    def m(self) -> int:
        return len(self.times)

    @property
    def name(self) -> str:
        return self.formula.name if self.formula else f"PID{self.did:02X}"


@dataclass
class DecodeStats:
    """Per-AID counts from diagnostic decoding."""
    decoded: int = 0
    malformed: int = 0
    multi_frame: int = 0
    negative: int = 0

    def as_dict(self) -> Dict[str, int]:
        return {"decoded": self.decoded, "malformed": self.malformed,
                "multi_frame": self.multi_frame, "negative": self.negative}


class AidTraceMap(dict):
    """AidKey -> AidTrace, remembering AIDs that never carried 8 bytes."""

    def __init__(self, *args, skipped: Optional[List[AidKey]] = None, **kwargs):
        super().__init__(*args, **kwargs)
        self.skipped: List[AidKey] = skipped or []


class DidTraceMap(dict):
    """PID -> DidTrace, remembering decode counts and dropped constant PIDs."""

    def __init__(self, *args, stats: Optional[Dict[AidKey, DecodeStats]] = None,
                 constant: Optional[List[int]] = None, **kwargs):
        super().__init__(*args, **kwargs)
        self.stats: Dict[AidKey, DecodeStats] = stats or {}
        self.constant: List[int] = constant or []


@lru_cache(maxsize=1)
def load_pid_table(path: str = PID_TABLE_PATH) -> Dict[int, PidFormula]:
    """Load the bundled PID conversion table."""
    with open(path, 'r') as f:
        doc = json.load(f)
    return {
        row["pid"]: PidFormula(pid=row["pid"], name=row["name"], byte_count=row["bytes"],
                               scale=row["scale"], offset=row["offset"], unit=row["unit"])
        for row in doc["pids"]
    }


def pid_formula(pid: int) -> Optional[PidFormula]:
    return load_pid_table().get(pid)


def frame_key(frame: CanFrame) -> AidKey:
    return AidKey(frame.aid, frame.extended)


def in_ranges(key: AidKey, ranges: Iterable[Tuple[int, ...]]) -> bool:
    """Plain (low, high) pairs are taken as 11-bit ranges."""
    return any(AidRange(*item).covers(key) for item in ranges)


def payload_bits(payloads: Sequence[bytes]) -> np.ndarray:
    """Unpack 8-byte payloads MSB-first into an n x 64 uint8 matrix."""
    raw = np.frombuffer(b''.join(payloads), dtype=np.uint8).reshape(len(payloads), 8)
    return np.unpackbits(raw, axis=1, bitorder='big')


def build_aid_traces(capture: Capture, diag_aid_ranges: Iterable[AidRange]) -> AidTraceMap:
    """
    Build one bit-matrix trace per non-diagnostic AID.

    Args:
        capture: Sorted capture
        diag_aid_ranges: AID intervals excluded from broadcast traces

    Returns:
        AidTraceMap keyed by AidKey; AIDs with no 8-byte frame are listed in ``skipped``
    """
    ranges = list(diag_aid_ranges)
    grouped: Dict[AidKey, List[CanFrame]] = defaultdict(list)
    seen = set()
    for frame in capture.frames:
        key = frame_key(frame)
        if in_ranges(key, ranges):
            continue
        seen.add(key)
        if len(frame.payload) == 8:
            grouped[key].append(frame)

    traces = AidTraceMap(skipped=sorted(seen - set(grouped)))
    for key in sorted(grouped):
        frames = grouped[key]
        traces[key] = AidTrace(
            aid=key,
            times=np.array([frame.timestamp for frame in frames], dtype=np.float64),
            bits=payload_bits([frame.payload for frame in frames]),
        )
    for key in traces.skipped:
        logger.info("AID %s skipped: no 8-byte payloads", key.label)
    return traces


def decode_mode01_response(payload: bytes) -> Tuple[int, int]:
    """
    Decode an ISO-TP single-frame Mode-01 positive response.

    Layout: byte0 = length L (1-7), byte1 = 0x41, byte2 = PID,
    bytes 3..L = data, remainder padding.

    Returns:
        (pid, raw big-endian value over the data bytes)

    Raises:
        MalformedDiagnosticFrame: with ``kind`` set to "multi_frame",
            "negative" or "malformed"
    """
    if not payload:
        raise _malformed("empty payload", "malformed")
    frame_type = payload[0] >> 4
    if frame_type != 0:
        raise _malformed(f"ISO-TP frame type {frame_type}", "multi_frame")
    length = payload[0] & 0x0F
    if length < 1 or length > 7 or length + 1 > len(payload):
        raise _malformed(f"bad single-frame length {length}", "malformed")
    if payload[1] == NEGATIVE_RESPONSE:
        raise _malformed("negative response", "negative")
    if payload[1] != MODE01_POSITIVE:
        raise _malformed(f"service byte 0x{payload[1]:02X}", "malformed")
    if length < 3:
        raise _malformed("no data bytes", "malformed")
    data = payload[3:length + 1]
    return payload[2], int.from_bytes(data, 'big')


def _malformed(message: str, kind: str) -> MalformedDiagnosticFrame:
    exc = MalformedDiagnosticFrame(message)
    exc.kind = kind
    return exc


def build_did_traces(capture: Capture, diag_aid_ranges: Iterable[AidRange]) -> DidTraceMap:
    """
    Decode diagnostic responses into per-PID traces.

    Constant traces are dropped. When two responses for one PID share a
    timestamp (several ECUs answering), the first one is kept.

    Args:
        capture: Sorted capture
        diag_aid_ranges: Response AID intervals to decode

    Returns:
        DidTraceMap keyed by PID number
    """
    ranges = list(diag_aid_ranges)
    samples: Dict[int, List[Tuple[float, int]]] = defaultdict(list)
    stats: Dict[AidKey, DecodeStats] = defaultdict(DecodeStats)
    for frame in capture.frames:
        key = frame_key(frame)
        if not in_ranges(key, ranges):
            continue
        counts = stats[key]
        try:
            pid, value = decode_mode01_response(frame.payload)
        except MalformedDiagnosticFrame as exc:
            if exc.kind == "multi_frame":
                counts.multi_frame += 1
            elif exc.kind == "negative":
                counts.negative += 1
            else:
                counts.malformed += 1
            logger.debug("AID %s at %.6f: %s", key.label, frame.timestamp, exc)
            continue
        counts.decoded += 1
        series = samples[pid]
        if series and series[-1][0] == frame.timestamp:
            continue
        series.append((frame.timestamp, value))

    traces = DidTraceMap(stats=dict(sorted(stats.items())))
    for pid in sorted(samples):
        series = samples[pid]
        values = np.array([value for _, value in series], dtype=np.int64)
        if np.all(values == values[0]):
            traces.constant.append(pid)
            logger.info("PID 0x%02X dropped: constant response %d", pid, values[0])
            continue
        traces[pid] = DidTrace(
            did=pid,
            times=np.array([t for t, _ in series], dtype=np.float64),
            values=values,
            formula=pid_formula(pid),
        )
    for key, counts in traces.stats.items():
        if counts.malformed or counts.multi_frame or counts.negative:
            logger.info("AID %s: %d decoded, %d malformed, %d multi-frame, %d negative",
                        key.label, counts.decoded, counts.malformed,
                        counts.multi_frame, counts.negative)
    return traces


def to_physical(did: DidTrace, sample: float) -> Tuple[float, str]:
    """
    Convert a raw diagnostic value to physical units.

    Args:
        did: Trace whose PID formula is used (identity when unknown)
        sample: Raw integer value

    Returns:
        (physical value, unit label)
    """
    formula = did.formula if did.formula is not None else pid_formula(did.did)
    if formula is None:
        return float(sample), "raw"
    return formula.apply(sample), formula.unit


def aid_timing(trace: AidTrace) -> Dict[str, Optional[float]]:
    """Frame count, mean period and period jitter (std) for one AID."""
    periods = np.diff(trace.times)
    if periods.size == 0:
        return {"frame_count": trace.n, "mean_period": None, "period_jitter": None}
    return {
        "frame_count": trace.n,
        "mean_period": float(periods.mean()),
        "period_jitter": float(periods.std()),
    }
