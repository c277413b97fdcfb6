"""
Main analysis pipeline.
Runs capture parsing, trace building, tokenization, diagnostic matching and
message packing for every AID, and assembles the analysis report.
"""

import os
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from .config import AnalysisConfig, build_analysis_config
from .data.canio import Capture, read_log
from .data.traces import (AidKey, AidTrace, DidTrace, aid_timing, build_aid_traces,
                          build_did_traces, pid_formula)
from .errors import InvariantViolation, NoUsableDiagnostics
from .models.matcher import InterpolationMode, MatchStats, TokenMatch, match_traces
from .models.packer import PayloadMap, find_optimal_payload, reduce_to_candidates
from .models.tokenizer import (PAYLOAD_BITS, BitClassification, TokenBoundary, categorize_bits,
                               unmatched_tokens, valid_token_boundaries)

logger = logging.getLogger(__name__)

REPORT_SCHEMA = 1
SIGNIFICANT_DIGITS = 9


def signal_name(did: int) -> str:
    """DBC-style name for a DID, e.g. DID12_EngineRPM."""
    formula = pid_formula(did)
    return f"DID{did}_{formula.name}" if formula else f"DID{did}"


def round_floats(value: Any) -> Any:
    """Round every float in a JSON-like structure to 9 significant digits."""
    if isinstance(value, float):
        return float(f"{value:.{SIGNIFICANT_DIGITS}g}")
    if isinstance(value, dict):
        return {key: round_floats(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_floats(item) for item in value]
    return value


@dataclass
class AidAnalysis:
    """Everything computed for one AID."""
    trace: AidTrace
    classification: BitClassification
    boundaries: int
    matches: List[TokenMatch]
    payload: PayloadMap
    unmatched: List[TokenBoundary]
    match_stats: MatchStats

    @property
    def used_fraction(self) -> float:
        return len(self.classification.b_used) / PAYLOAD_BITS

    def as_dict(self) -> Dict[str, Any]:
        used = self.used_fraction
        return {
            "timing": aid_timing(self.trace),
            "classification": self.classification.as_dict(),
            "candidate_boundaries": self.boundaries,
            "match_stats": self.match_stats.as_dict(),
            "matches": [match.as_dict() for match in self.matches],
            "selected": [dict(match.as_dict(), name=signal_name(match.did))
                         for match in self.payload.selected],
            "unmatched": [[boundary.j_s, boundary.j_e] for boundary in self.unmatched],
            "score": self.payload.score,
            "covered_bits": self.payload.covered_bits,
            "used_fraction": used,
            "translation_efficiency": self.payload.score / used if used else None,
        }


def analyze_aid(trace: AidTrace, did_traces: Dict[int, DidTrace],
                config: AnalysisConfig) -> AidAnalysis:
    """
    Tokenize, match and pack a single AID.

    Args:
        trace: AID trace
        did_traces: Diagnostic traces keyed by PID
        config: Analysis settings

    Returns:
        AidAnalysis for the trace
    """
    classification = categorize_bits(trace)
    boundaries = valid_token_boundaries(classification)
    stats = MatchStats()
    matches = match_traces(trace, boundaries, did_traces, alpha=config.alpha,
                           min_points=config.min_points,
                           mode=InterpolationMode(config.interpolation), stats=stats)
    payload = find_optimal_payload(reduce_to_candidates(matches))
    payload.aid = trace.aid
    payload.classification = classification.as_dict()
    unmatched = unmatched_tokens(classification, [m.boundary for m in payload.selected])
    return AidAnalysis(trace=trace, classification=classification, boundaries=len(boundaries),
                       matches=matches, payload=payload, unmatched=unmatched, match_stats=stats)


@dataclass
class AnalysisReport:
    """Per-AID results, capture statistics and the configuration echo."""
    config: AnalysisConfig
    capture: Dict[str, Any]
    did_traces: Dict[int, DidTrace]
    aids: Dict[AidKey, AidAnalysis] = field(default_factory=dict)
    skipped_aids: List[AidKey] = field(default_factory=list)
    constant_dids: List[int] = field(default_factory=list)
    diagnostics: Dict[AidKey, Dict[str, int]] = field(default_factory=dict)

    def capture_stats(self) -> Dict[str, Any]:
        """
        Fractions over the AID x 64 bit grid, plus the total match score
        (mean of per-AID packing scores) and its ratio to the matched fraction.
        """
        count = len(self.aids)
        if count == 0:
            return {"aid_count": 0, "constant_fraction": None, "matched_fraction": None,
                    "unknown_fraction": None, "total_match_score": None,
                    "overall_match_score": None}
        total_bits = PAYLOAD_BITS * count
        constant = sum(len(a.classification.constant) for a in self.aids.values())
        matched = sum(a.payload.covered_bits for a in self.aids.values())
        used = sum(len(a.classification.b_used) for a in self.aids.values())
        unknown = used - matched
        if unknown < 0 or constant + used != total_bits:
            raise InvariantViolation("bit accounting does not add up to the AID x 64 grid")
        total_score = sum(a.payload.score for a in self.aids.values()) / count
        matched_fraction = matched / total_bits
        return {
            "aid_count": count,
            "constant_fraction": constant / total_bits,
            "matched_fraction": matched_fraction,
            "unknown_fraction": unknown / total_bits,
            "total_match_score": total_score,
            "overall_match_score": total_score / matched_fraction if matched else None,
        }

    def aid_labels(self, anonymize: bool = False) -> Dict[AidKey, str]:
        """Report label per AID; anonymized labels are priority ranks."""
        keys = sorted(self.aids)
        if anonymize:
            return {key: f"AID{rank}" for rank, key in enumerate(keys, start=1)}
        return {key: key.label for key in keys}

    def to_dict(self, anonymize: bool = False) -> Dict[str, Any]:
        labels = self.aid_labels(anonymize)
        dids = {}
        for did, trace in sorted(self.did_traces.items()):
            formula = trace.formula
            dids[str(did)] = {
                "name": signal_name(did),
                "samples": trace.m,
                "unit": formula.unit if formula else "raw",
                "scale": formula.scale if formula else 1.0,
                "offset": formula.offset if formula else 0.0,
            }
        report = {
            "schema": REPORT_SCHEMA,
            "anonymized": anonymize,
            "config": self.config.echo(),
            "capture": self.capture,
            "dids": dids,
            "constant_dids": list(self.constant_dids),
            "diagnostic_frames": {key.label: counts for key, counts in sorted(self.diagnostics.items())},
            "skipped_aids": [] if anonymize else [key.label for key in self.skipped_aids],
            "aids": {labels[key]: analysis.as_dict() for key, analysis in sorted(self.aids.items())},
            "stats": self.capture_stats(),
        }
        if anonymize:
            for key, analysis in self.aids.items():
                report["aids"][labels[key]]["id"] = sorted(self.aids).index(key) + 1
        else:
            for key in self.aids:
                report["aids"][labels[key]]["id"] = key.value
                report["aids"][labels[key]]["extended"] = key.extended
        return round_floats(report)

    def to_json(self, anonymize: bool = False) -> str:
        return json.dumps(self.to_dict(anonymize), indent=2, sort_keys=True) + '\n'


class CanTranslator:
    """Runs the full pipeline over a capture."""

    def __init__(self, config: Optional[AnalysisConfig] = None):
        """
        Initialize the translator.

        Args:
            config: Analysis settings (config.json defaults when omitted)
        """
        self.config = config or build_analysis_config()

    def load(self, log_path: str) -> Capture:
        return read_log(log_path, malformed_ratio_limit=self.config.malformed_ratio_limit)

    def analyze_capture(self, capture: Capture) -> AnalysisReport:
        """
        Analyze a parsed capture.

        Raises:
            NoUsableDiagnostics: no DID trace could be fitted against any AID
        """
        excluded = self.config.diag_aid_ranges + self.config.request_aid_ranges
        aid_traces = build_aid_traces(capture, excluded)
        did_traces = build_did_traces(capture, self.config.diag_aid_ranges)
        if not did_traces:
            raise NoUsableDiagnostics("capture contains no non-constant diagnostic responses")

        keys = sorted(aid_traces)
        logger.info("analyzing %d AIDs against %d DIDs with %d workers",
                    len(keys), len(did_traces), self.config.workers)
        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            results = list(pool.map(
                lambda key: analyze_aid(aid_traces[key], did_traces, self.config), keys))
        aids = dict(zip(keys, results))

        if aids and not any(result.match_stats.fitted_dids for result in aids.values()):
            raise NoUsableDiagnostics(
                f"no DID overlaps any AID trace with at least {self.config.min_points} samples")

        metadata = capture.metadata()
        metadata["source"] = os.path.basename(metadata["source"])
        return AnalysisReport(
            config=self.config,
            capture=metadata,
            did_traces=dict(did_traces),
            aids=aids,
            skipped_aids=list(aid_traces.skipped),
            constant_dids=list(did_traces.constant),
            diagnostics={key: counts.as_dict() for key, counts in did_traces.stats.items()},
        )

    def analyze(self, log_path: str) -> AnalysisReport:
        return self.analyze_capture(self.load(log_path))


def analyze(log_path: str, alpha: Optional[float] = None, **options) -> AnalysisReport:
    """
    Analyze a capture file.

    Args:
        log_path: candump log path
        alpha: Match threshold (config default when None)
        **options: Other AnalysisConfig overrides (min_points, interpolation, ...)

    Returns:
        AnalysisReport
    """
    config = build_analysis_config(dict(options, alpha=alpha))
    return CanTranslator(config).analyze(log_path)
