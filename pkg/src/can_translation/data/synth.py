"""
Synthetic capture generator for the CAN translation toolkit.
Simulates diagnostic channels, embeds them in broadcast payloads with a
known layout, interleaves OBD-II responses, and scores analysis reports
against the resulting ground truth.
"""

import json
import logging
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator
from scipy.signal import lfilter

from ..errors import ConfigError, LayoutOverlap, RangeOverflow, SchemaMismatch
from .canio import CanFrame, Capture
from .traces import AidKey, pid_formula

logger = logging.getLogger(__name__)

TRUTH_SCHEMA = 1
REPORT_SCHEMA = 1
REQUEST_AID = 0x7DF
RESPONSE_LATENCY = 0.002
# correlation time of the channel velocity process, seconds
VELOCITY_TIME_CONSTANT = 2.0

SignalKind = Literal["did-linked", "counter", "constant-run", "noise", "indicator"]


class ChannelSpec(BaseModel):
    """One simulated diagnostic channel, in raw response units."""
    did: int = Field(ge=0, le=0xFF)
    low: float
    high: float
    rate: float = Field(0.1, gt=0.0)  # RMS speed, in ranges per second
    driver_did: Optional[int] = None
    driver_weight: float = Field(0.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_range(self):
        if not self.high > self.low:
            raise ValueError(f"channel {self.did}: high must exceed low")
        return self


class SignalSpec(BaseModel):
    """One token embedded in a broadcast payload."""
    j_s: int = Field(ge=0, le=63)
    j_e: int = Field(ge=0, le=63)
    kind: SignalKind = "did-linked"
    endianness: Literal["little", "big"] = "big"
    did: Optional[int] = None
    a: Optional[float] = None
    b: float = 0.0
    value: int = 0

    @model_validator(mode="after")
    def _check_signal(self):
        if self.j_s > self.j_e:
            raise ValueError(f"signal [{self.j_s}, {self.j_e}] has start after end")
        if self.kind in ("did-linked", "indicator") and self.did is None:
            raise ValueError(f"{self.kind} signal [{self.j_s}, {self.j_e}] needs a did")
        if self.kind == "did-linked" and not self.a:
            raise ValueError(f"did-linked signal [{self.j_s}, {self.j_e}] needs a nonzero a")
        return self

    @property
    def length(self) -> int:
        return self.j_e - self.j_s + 1


class AidSpec(BaseModel):
    """Broadcast message layout and period."""
    aid: str
    period: float = Field(gt=0.0)
    signals: List[SignalSpec] = Field(default_factory=list)

    @property
    def key(self) -> AidKey:
        return AidKey.parse(self.aid)


class SynthConfig(BaseModel):
    """Everything needed to regenerate a synthetic capture."""
    duration: float = Field(gt=0.0)
    seed: int = 42
    start_time: float = Field(0.0, ge=0.0)
    grid_step: float = Field(0.01, gt=0.0)
    diag_rate: float = Field(20.0, gt=0.0)
    diag_mode: Literal["round-robin", "per-did"] = "round-robin"
    diag_aid: str = "7E8"
    channel: str = "can0"
    channels: List[ChannelSpec] = Field(default_factory=list)
    aids: List[AidSpec] = Field(default_factory=list)


def default_synth_config(duration: float = 600.0, seed: int = 42) -> SynthConfig:
    """Three broadcast AIDs, each with a 16-bit and a 12-bit channel token,
    a 4-bit counter and a constant byte, separated by constant padding."""
    return SynthConfig(
        duration=duration,
        seed=seed,
        channels=[
            ChannelSpec(did=5, low=100, high=140, rate=0.1),
            ChannelSpec(did=12, low=2400, high=24000, rate=0.15),
            ChannelSpec(did=13, low=0, high=40, rate=0.2),
            ChannelSpec(did=17, low=20, high=230, rate=0.15),
            ChannelSpec(did=73, low=0, high=230, rate=0.2),
        ],
        aids=[
            AidSpec(aid="0C5", period=0.02, signals=[
                SignalSpec(j_s=0, j_e=7, kind="constant-run", value=0xA5),
                SignalSpec(j_s=10, j_e=25, did=12, a=0.4, b=0.0),
                SignalSpec(j_s=28, j_e=39, did=13, a=0.01, b=0.0),
                SignalSpec(j_s=60, j_e=63, kind="counter"),
            ]),
            AidSpec(aid="1A0", period=0.05, signals=[
                SignalSpec(j_s=0, j_e=7, kind="constant-run", value=0x3C),
                SignalSpec(j_s=12, j_e=23, did=73, a=0.06, b=0.0, endianness="little"),
                SignalSpec(j_s=32, j_e=47, did=17, a=0.004, b=0.0),
                SignalSpec(j_s=56, j_e=59, kind="counter"),
            ]),
            AidSpec(aid="2F0", period=0.1, signals=[
                SignalSpec(j_s=0, j_e=15, did=13, a=0.001, b=-2.0, endianness="little"),
                SignalSpec(j_s=20, j_e=31, did=5, a=0.01, b=100.0),
                SignalSpec(j_s=40, j_e=43, kind="counter"),
                SignalSpec(j_s=56, j_e=63, kind="constant-run", value=0xFF),
            ]),
        ],
    )


def load_synth_config(path: str) -> SynthConfig:
    """Read and validate a synthetic layout JSON file."""
    try:
        with open(path, 'r') as f:
            return SynthConfig(**json.load(f))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"Cannot read synth config {path}: {exc}")
    except ValidationError as exc:
        raise ConfigError(str(exc))


def _fold(position: np.ndarray) -> np.ndarray:
    """Reflect an unbounded path into [0, 1]."""
    wrapped = np.mod(position, 2.0)
    return np.where(wrapped > 1.0, 2.0 - wrapped, wrapped)


def _grid(config: SynthConfig) -> np.ndarray:
    steps = int(np.ceil(config.duration / config.grid_step))
    return config.start_time + np.arange(steps + 1) * config.grid_step


def simulate_channels(config: SynthConfig) -> Dict[int, Tuple[np.ndarray, np.ndarray]]:
    """
    Simulate every channel as a smooth random walk reflected inside its range.

    The velocity is an AR(1) process with standard deviation ``rate`` (in
    ranges per second); position is its running integral folded into [0, 1].
    Channels with a driver blend in the driver's own walk.

    Returns:
        did -> (grid times, values in raw units)
    """
    rng = np.random.default_rng(config.seed)
    grid = _grid(config)
    dt = config.grid_step
    phi = float(np.exp(-dt / VELOCITY_TIME_CONSTANT))

    walks: Dict[int, np.ndarray] = {}
    for channel in sorted(config.channels, key=lambda c: c.did):
        noise = rng.normal(0.0, channel.rate * np.sqrt(1.0 - phi ** 2), size=grid.size)
        velocity = lfilter([1.0], [1.0, -phi], noise)
        start = rng.uniform(0.0, 1.0)
        walks[channel.did] = _fold(start + np.cumsum(velocity) * dt)

    channels = {}
    for channel in sorted(config.channels, key=lambda c: c.did):
        unit = walks[channel.did]
        if channel.driver_did is not None:
            if channel.driver_did not in walks:
                raise ConfigError(f"channel {channel.did}: unknown driver {channel.driver_did}")
            unit = (1.0 - channel.driver_weight) * unit + channel.driver_weight * walks[channel.driver_did]
        channels[channel.did] = (grid, channel.low + unit * (channel.high - channel.low))
    return channels


def _raw_byte_count(channel: ChannelSpec) -> int:
    formula = pid_formula(channel.did)
    if formula is not None:
        return formula.byte_count
    return 1 if channel.high < 256 else 2


def _check_layout(config: SynthConfig, channels: Dict[int, ChannelSpec]):
    for aid in config.aids:
        ordered = sorted(aid.signals, key=lambda s: (s.j_s, s.j_e))
        for first, second in zip(ordered, ordered[1:]):
            if second.j_s <= first.j_e:
                raise LayoutOverlap(
                    f"AID {aid.aid}: [{first.j_s}, {first.j_e}] overlaps [{second.j_s}, {second.j_e}]")
        for signal in aid.signals:
            if signal.did is not None and signal.did not in channels:
                raise ConfigError(f"AID {aid.aid}: no channel for did {signal.did}")
            if signal.kind != "did-linked":
                continue
            channel = channels[signal.did]
            ends = [round((edge - signal.b) / signal.a) for edge in (channel.low, channel.high)]
            if min(ends) < 0 or max(ends) > (1 << signal.length) - 1:
                raise RangeOverflow(
                    f"AID {aid.aid} [{signal.j_s}, {signal.j_e}]: channel {signal.did} "
                    f"encodes to {min(ends)}..{max(ends)}, outside {signal.length} bits")
    for channel in channels.values():
        if channel.low < -0.5 or round(channel.high) > (1 << (8 * _raw_byte_count(channel))) - 1:
            raise RangeOverflow(f"channel {channel.did} does not fit its response bytes")


def _token_values(signal: SignalSpec, frame_count: int, level: Optional[np.ndarray],
                  median: Optional[float], rng: np.random.Generator) -> np.ndarray:
    top = (1 << signal.length) - 1
    if signal.kind == "did-linked":
        values = np.rint((level - signal.b) / signal.a)
        return np.clip(values, 0, top).astype(np.uint64)
    if signal.kind == "indicator":
        return (level > median).astype(np.uint64)
    if signal.kind == "counter":
        return (np.arange(frame_count, dtype=np.uint64) % np.uint64(top + 1)).astype(np.uint64)
    if signal.kind == "noise":
        return rng.integers(0, top, size=frame_count, endpoint=True, dtype=np.uint64)
    return np.full(frame_count, signal.value & top, dtype=np.uint64)


def _write_token(bits: np.ndarray, signal: SignalSpec, values: np.ndarray):
    offsets = np.arange(signal.length, dtype=np.uint64)
    if signal.endianness == "big":
        offsets = np.uint64(signal.length - 1) - offsets
    columns = (values[:, None] >> offsets[None, :]) & np.uint64(1)
    bits[:, signal.j_s:signal.j_e + 1] = columns.astype(np.uint8)


def _timestamp(value: float) -> float:
    return round(float(value), 6)


def _diagnostic_frames(config: SynthConfig, channels: Dict[int, Tuple[np.ndarray, np.ndarray]],
                       specs: Dict[int, ChannelSpec]) -> List[CanFrame]:
    dids = sorted(channels)
    if not dids:
        return []
    end = config.start_time + config.duration
    schedule: List[Tuple[float, int]] = []
    if config.diag_mode == "round-robin":
        count = int(np.floor(config.duration * config.diag_rate))
        for k in range(count):
            schedule.append((config.start_time + k / config.diag_rate, dids[k % len(dids)]))
    else:
        stagger = 1.0 / (config.diag_rate * len(dids))
        for index, did in enumerate(dids):
            count = int(np.floor(config.duration * config.diag_rate))
            for k in range(count):
                schedule.append((config.start_time + k / config.diag_rate + index * stagger, did))
        schedule.sort()

    response_aid = AidKey.parse(config.diag_aid)
    frames = []
    for query_time, did in schedule:
        response_time = query_time + RESPONSE_LATENCY
        if response_time > end:
            continue
        grid, values = channels[did]
        byte_count = _raw_byte_count(specs[did])
        raw = int(np.clip(np.rint(np.interp(response_time, grid, values)),
                          0, (1 << (8 * byte_count)) - 1))
        request = bytes([0x02, 0x01, did, 0, 0, 0, 0, 0])
        response = bytes([2 + byte_count, 0x41, did]) + raw.to_bytes(byte_count, 'big')
        response = response + bytes(8 - len(response))
        frames.append(CanFrame(timestamp=_timestamp(query_time), channel=config.channel,
                               aid=REQUEST_AID, payload=request))
        frames.append(CanFrame(timestamp=_timestamp(response_time), channel=config.channel,
                               aid=response_aid.value, payload=response,
                               extended=response_aid.extended))
    return frames


def generate_capture(config: SynthConfig) -> Tuple[Capture, Dict[str, Any]]:
    """
    Build a capture whose broadcast payloads embed the configured signals.

    did-linked tokens carry round((y - b) / a) clamped to the token width,
    counters count frames modulo 2**len, constant runs hold ``value``, noise
    tokens are uniform, indicators are 1 when the channel is above its median.
    Diagnostic responses sample each channel at the query schedule.

    Returns:
        (capture, ground truth document)
    """
    specs = {channel.did: channel for channel in config.channels}
    _check_layout(config, specs)
    channels = simulate_channels(config)
    medians = {did: float(np.median(values)) for did, (_, values) in channels.items()}
    rng = np.random.default_rng([config.seed, 1])
    end = config.start_time + config.duration

    frames: List[CanFrame] = []
    for aid in sorted(config.aids, key=lambda spec: spec.key):
        key = aid.key
        phase = rng.uniform(0.0, aid.period)
        times = config.start_time + phase + np.arange(int(np.floor((config.duration - phase) / aid.period)) + 1) * aid.period
        times = times[times <= end]
        bits = np.zeros((times.size, 64), dtype=np.uint8)
        for signal in sorted(aid.signals, key=lambda s: s.j_s):
            level = None
            if signal.did is not None:
                grid, values = channels[signal.did]
                level = np.interp(times, grid, values)
            values = _token_values(signal, times.size, level, medians.get(signal.did), rng)
            _write_token(bits, signal, values)
        payloads = np.packbits(bits, axis=1, bitorder='big')
        for t, payload in zip(times, payloads):
            frames.append(CanFrame(timestamp=_timestamp(t), channel=config.channel,
                                   aid=key.value, payload=payload.tobytes(), extended=key.extended))

    frames.extend(_diagnostic_frames(config, channels, specs))
    frames.sort(key=lambda frame: frame.timestamp)
    capture = Capture(frames=frames, source=f"synthetic(seed={config.seed})")
    logger.info("generated %d frames over %.1f s", len(frames), config.duration)
    return capture, ground_truth(config, medians)


def ground_truth(config: SynthConfig, medians: Optional[Dict[int, float]] = None) -> Dict[str, Any]:
    """Ground truth document: signal records plus the generating config."""
    specs = {channel.did: channel for channel in config.channels}
    signals = []
    for aid in sorted(config.aids, key=lambda spec: spec.key):
        for signal in sorted(aid.signals, key=lambda s: s.j_s):
            record = {
                "aid": aid.key.label,
                "j_s": signal.j_s,
                "j_e": signal.j_e,
                "endianness": signal.endianness,
                "kind": signal.kind,
                "did": signal.did,
                "a": signal.a,
                "b": signal.b if signal.kind == "did-linked" else None,
            }
            if signal.did is not None:
                record["channel_low"] = specs[signal.did].low
                record["channel_high"] = specs[signal.did].high
            if signal.kind == "indicator" and medians is not None:
                record["threshold"] = medians[signal.did]
            signals.append(record)
    return {"schema": TRUTH_SCHEMA, "config": config.model_dump(), "signals": signals}


def _overlaps(j_s: int, j_e: int, other: dict) -> bool:
    return j_s <= other["j_e"] and other["j_s"] <= j_e


def _ratio(numerator: int, denominator: int):
    return numerator / denominator if denominator else "N/A"


def score_against_truth(report: Dict[str, Any], truth: Dict[str, Any]) -> Dict[str, Any]:
    """
    Compare an analysis report with the ground truth it was generated from.

    Per did-linked signal: exact boundary recovery, endianness and DID
    agreement, relative error of a, and error of b as a fraction of the
    channel range. Per counter/noise/constant signal: whether any selected
    or merely accepted token overlaps it (a false match). Aggregate
    precision/recall are over payload bits of did-linked signals; both are
    "N/A" when undefined.

    Raises:
        SchemaMismatch: unknown schema versions, missing sections, or an
            anonymized report
    """
    if not isinstance(report, dict) or report.get("schema") != REPORT_SCHEMA or "aids" not in report:
        raise SchemaMismatch("report is not a schema-1 analysis report")
    if not isinstance(truth, dict) or truth.get("schema") != TRUTH_SCHEMA or "signals" not in truth:
        raise SchemaMismatch("truth is not a schema-1 ground truth document")
    if report.get("anonymized"):
        raise SchemaMismatch("anonymized reports cannot be scored against ground truth")

    per_signal = []
    truth_bits = set()
    for signal in truth["signals"]:
        aid_entry = report["aids"].get(signal["aid"], {})
        selected = aid_entry.get("selected", [])
        entry = {key: signal[key] for key in ("aid", "j_s", "j_e", "kind", "did")}
        if signal["kind"] == "did-linked":
            truth_bits.update((signal["aid"], j) for j in range(signal["j_s"], signal["j_e"] + 1))
            exact = [m for m in selected if m["j_s"] == signal["j_s"] and m["j_e"] == signal["j_e"]]
            entry["boundary_exact"] = bool(exact)
            if exact:
                match = exact[0]
                span = signal["channel_high"] - signal["channel_low"]
                entry.update({
                    "endianness_match": match["endianness"] == signal["endianness"],
                    "did_match": match["did"] == signal["did"],
                    "r2": match["r2"],
                    "a": match["a"],
                    "b": match["b"],
                    "a_rel_error": abs(match["a"] - signal["a"]) / abs(signal["a"]),
                    "b_range_error": abs(match["b"] - signal["b"]) / span,
                })
            else:
                entry["overlapping"] = [[m["j_s"], m["j_e"]] for m in selected
                                        if _overlaps(signal["j_s"], signal["j_e"], m)]
        elif signal["kind"] == "indicator":
            exact = [m for m in selected if m["j_s"] == signal["j_s"] and m["j_e"] == signal["j_e"]]
            entry["matched"] = bool(exact)
            entry["r2"] = exact[0]["r2"] if exact else None
        else:
            accepted = selected + aid_entry.get("matches", [])
            entry["false_match"] = any(_overlaps(signal["j_s"], signal["j_e"], m) for m in accepted)
        per_signal.append(entry)

    truth_aids = {signal["aid"] for signal in truth["signals"]}
    predicted_bits = set()
    for label in truth_aids:
        for match in report["aids"].get(label, {}).get("selected", []):
            predicted_bits.update((label, j) for j in range(match["j_s"], match["j_e"] + 1))
    hits = len(truth_bits & predicted_bits)

    linked = [entry for entry in per_signal if entry["kind"] == "did-linked"]
    return {
        "schema": TRUTH_SCHEMA,
        "signals": per_signal,
        "did_linked": len(linked),
        "recovered_exact": sum(1 for entry in linked if entry["boundary_exact"]),
        "false_matches": sum(1 for entry in per_signal if entry.get("false_match")),
        "bit_precision": _ratio(hits, len(predicted_bits)),
        "bit_recall": _ratio(hits, len(truth_bits)),
    }
