"""
Diagnostic matching.
Turns token bit slices into integer series, aligns them to diagnostic sample
times and scores a least-squares linear map from token to diagnostic value.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..data.traces import AidKey, AidTrace, DidTrace
from ..errors import DivisionByZeroVariance, InsufficientOverlap, NoVariance
from .tokenizer import PAYLOAD_BITS, TokenBoundary

logger = logging.getLogger(__name__)

DEFAULT_MIN_POINTS = 10
DEFAULT_ALPHA = 0.50
# candidate columns fitted per matrix product
CHUNK = 512


class Endianness(str, Enum):
    """Which end of the bit slice carries the most significant weight."""
    LITTLE = "little"
    BIG = "big"

    @property
    def rank(self) -> int:
        return 0 if self is Endianness.LITTLE else 1


ENDIANNESSES = (Endianness.LITTLE, Endianness.BIG)


class InterpolationMode(str, Enum):
    LINEAR = "linear"
    HOLD = "hold"


@dataclass
class TokenSeries:
    """Unsigned integer value of one token in every frame of a trace."""
    boundary: TokenBoundary
    endianness: Endianness
    values: np.ndarray
    times: np.ndarray


@dataclass(frozen=True)
class FitResult:
    r2: float
    a: float
    b: float


@dataclass(frozen=True)
class TokenMatch:
    """A token whose linear map onto a DID scored at least alpha."""
    aid: AidKey
    boundary: TokenBoundary
    endianness: Endianness
    did: int
    r2: float
    a: float
    b: float
    n_points: int

    @property
    def sort_key(self) -> tuple:
        return (self.aid, self.boundary.j_s, self.boundary.j_e,
                self.endianness.rank, self.did)

    def as_dict(self) -> dict:
        return {
            "j_s": self.boundary.j_s,
            "j_e": self.boundary.j_e,
            "endianness": self.endianness.value,
            "did": self.did,
            "r2": self.r2,
            "a": self.a,
            "b": self.b,
            "n_points": self.n_points,
        }


@dataclass
class MatchStats:
    """Why candidates were fitted or skipped for one AID."""
    fitted_dids: int = 0
    insufficient_overlap: int = 0
    constant_target: int = 0
    no_variance: int = 0
    fits: int = 0
    matches: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _shifts(boundary: TokenBoundary, endianness: Endianness) -> np.ndarray:
    offsets = np.arange(boundary.length, dtype=np.uint64)
    if endianness is Endianness.LITTLE:
        return offsets
    return np.uint64(boundary.length - 1) - offsets


def make_integers(trace: AidTrace, boundary: TokenBoundary,
                  endianness: Endianness) -> TokenSeries:
    """
    Encode a token's bits as unsigned integers.

    little: x_i = sum_j X[i, j] * 2**(j - j_s)   (bit j_e most significant)
    big:    x_i = sum_j X[i, j] * 2**(j_e - j)   (bit j_s most significant)
    """
    if not 0 <= boundary.j_s <= boundary.j_e < PAYLOAD_BITS:
        raise ValueError(f"invalid token boundary {boundary}")
    endianness = Endianness(endianness)
    columns = trace.bits[:, boundary.j_s:boundary.j_e + 1].astype(np.uint64)
    shifted = np.left_shift(columns, _shifts(boundary, endianness))
    values = np.bitwise_or.reduce(shifted, axis=1) if boundary.length > 1 else shifted[:, 0]
    return TokenSeries(boundary=boundary, endianness=endianness,
                       values=values.astype(np.uint64), times=trace.times)


def token_weights(boundary: TokenBoundary, endianness: Endianness) -> np.ndarray:
    """Length-64 float weights w with x = X @ w for this token."""
    weights = np.zeros(PAYLOAD_BITS, dtype=np.float64)
    powers = np.ldexp(1.0, _shifts(boundary, endianness).astype(np.int64))
    weights[boundary.j_s:boundary.j_e + 1] = powers
    return weights


def align(times: np.ndarray, values: np.ndarray, diag_times: np.ndarray,
          mode: InterpolationMode = InterpolationMode.LINEAR,
          min_points: int = DEFAULT_MIN_POINTS) -> Tuple[np.ndarray, np.ndarray]:
    """
    Resample ``values`` (1-D, or 2-D with one row per time) at ``diag_times``.

    Diagnostic times outside [times[0], times[-1]] are dropped. At a
    repeated source time the last sample wins.

    Returns:
        (aligned values, indices of the diagnostic times kept)

    Raises:
        InsufficientOverlap: fewer than ``min_points`` times survive
    """
    times = np.asarray(times, dtype=np.float64)
    diag_times = np.asarray(diag_times, dtype=np.float64)
    inside = (diag_times >= times[0]) & (diag_times <= times[-1])
    kept = np.flatnonzero(inside)
    if kept.size < min_points:
        raise InsufficientOverlap(
            f"{kept.size} diagnostic samples inside AID span, need {min_points}")
    points = diag_times[kept]
    values = np.asarray(values, dtype=np.float64)

    left = np.searchsorted(times, points, side='right') - 1
    if InterpolationMode(mode) is InterpolationMode.HOLD:
        return values[left], kept

    right = np.minimum(left + 1, len(times) - 1)
    span = times[right] - times[left]
    frac = np.divide(points - times[left], span, out=np.zeros_like(points), where=span > 0)
    if values.ndim == 2:
        frac = frac[:, None]
    aligned = values[left] + frac * (values[right] - values[left])
    return aligned, kept


def interpolate(series: TokenSeries, diag_times: np.ndarray,
                mode: InterpolationMode = InterpolationMode.LINEAR,
                min_points: int = DEFAULT_MIN_POINTS) -> Tuple[np.ndarray, np.ndarray]:
    """Token values at the diagnostic times (see ``align``)."""
    return align(series.times, series.values.astype(np.float64), diag_times,
                 mode=mode, min_points=min_points)


def coef_determ(y: np.ndarray, y_hat: np.ndarray) -> float:
    """R² = 1 - sum((y_hat - y)^2) / sum((y - mean(y))^2)."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if np.ptp(y) == 0:
        raise DivisionByZeroVariance("diagnostic values are constant")
    ss_tot = np.sum((y - y.mean()) ** 2)
    ss_res = np.sum((y_hat - y) ** 2)
    return float(1.0 - ss_res / ss_tot)


def linear_fit(x: np.ndarray, y: np.ndarray) -> FitResult:
    """
    Ordinary least squares fit y ≈ a*x + b, scored with R².

    Raises:
        NoVariance: x is constant
        DivisionByZeroVariance: y is constant
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.ptp(x) == 0:
        raise NoVariance("token constant over aligned window")
    if np.ptp(y) == 0:
        raise DivisionByZeroVariance("diagnostic values are constant")
    x_mean = x.mean()
    y_mean = y.mean()
    x_centered = x - x_mean
    a = float(np.dot(x_centered, y - y_mean) / np.dot(x_centered, x_centered))
    b = float(y_mean - a * x_mean)
    return FitResult(r2=coef_determ(y, a * x + b), a=a, b=b)


def _fit_columns(x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Column-wise version of ``linear_fit``; returns (r2, a, b, has_variance)."""
    has_variance = np.ptp(x, axis=0) > 0
    x_mean = x.mean(axis=0)
    x_centered = x - x_mean
    y_centered = y - y.mean()
    sxx = np.einsum('ij,ij->j', x_centered, x_centered)
    sxy = y_centered @ x_centered
    safe_sxx = np.where(has_variance, sxx, 1.0)
    a = np.where(has_variance, sxy / safe_sxx, 0.0)
    b = y.mean() - a * x_mean
    residual = x_centered * a - y_centered[:, None]
    ss_res = np.einsum('ij,ij->j', residual, residual)
    ss_tot = float(np.dot(y_centered, y_centered))
    r2 = 1.0 - ss_res / ss_tot
    return r2, a, b, has_variance


def match_traces(trace: AidTrace, boundaries: Iterable[TokenBoundary],
                 did_traces: Dict[int, DidTrace], alpha: float = DEFAULT_ALPHA,
                 min_points: int = DEFAULT_MIN_POINTS,
                 mode: InterpolationMode = InterpolationMode.LINEAR,
                 stats: Optional[MatchStats] = None) -> List[TokenMatch]:
    """
    Fit every (boundary, endianness, DID) triple and keep those with R² >= alpha.

    Interpolation is linear in the token value, so the 64 bit columns are
    aligned once per DID and each token's aligned series is a weighted sum
    of them.

    Args:
        trace: AID trace
        boundaries: Candidate token boundaries
        did_traces: Diagnostic traces keyed by PID
        alpha: Acceptance threshold, 0 < alpha <= 1
        min_points: Minimum aligned samples per fit
        mode: Interpolation mode
        stats: Optional counters filled in place

    Returns:
        Matches sorted by (aid, j_s, j_e, endianness, did)
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    stats = stats if stats is not None else MatchStats()
    candidates = [(boundary, endianness) for boundary in sorted(boundaries)
                  for endianness in ENDIANNESSES]
    if not candidates:
        return []
    weights = np.stack([token_weights(b, e) for b, e in candidates], axis=1)
    bit_columns = trace.bits.astype(np.float64)

    matches = []
    for did in sorted(did_traces):
        did_trace = did_traces[did]
        try:
            aligned_bits, kept = align(trace.times, bit_columns, did_trace.times,
                                       mode=mode, min_points=min_points)
        except InsufficientOverlap as exc:
            stats.insufficient_overlap += 1
            logger.debug("AID %s vs PID 0x%02X skipped: %s", trace.aid.label, did, exc)
            continue
        y = did_trace.values[kept].astype(np.float64)
        if np.ptp(y) == 0:
            stats.constant_target += 1
            logger.debug("AID %s vs PID 0x%02X skipped: constant in overlap", trace.aid.label, did)
            continue
        stats.fitted_dids += 1

        for start in range(0, len(candidates), CHUNK):
            block = weights[:, start:start + CHUNK]
            r2, a, b, has_variance = _fit_columns(aligned_bits @ block, y)
            stats.no_variance += int(np.count_nonzero(~has_variance))
            stats.fits += int(np.count_nonzero(has_variance))
            accepted = has_variance & (r2 >= alpha) & (a != 0) & np.isfinite(a) & np.isfinite(b)
            for offset in np.flatnonzero(accepted):
                boundary, endianness = candidates[start + offset]
                matches.append(TokenMatch(
                    aid=trace.aid, boundary=boundary, endianness=endianness, did=did,
                    r2=float(r2[offset]), a=float(a[offset]), b=float(b[offset]),
                    n_points=int(kept.size),
                ))

    matches.sort(key=lambda match: match.sort_key)
    stats.matches = len(matches)
    logger.debug("AID %s: %d fits, %d matches at alpha=%.2f",
                 trace.aid.label, stats.fits, stats.matches, alpha)
    return matches
