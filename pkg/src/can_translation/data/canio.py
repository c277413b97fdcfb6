"""
CAN log input/output.
Parses candump-style capture logs into timestamped frames and writes them back.
This is the only module that knows the on-disk log format.
"""

import io
import re
import logging
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation, ROUND_HALF_EVEN
from enum import Enum
from typing import BinaryIO, Iterable, List, Union

from ..errors import FormatError, UnreadableInput

logger = logging.getLogger(__name__)

MAX_STANDARD_AID = 0x7FF
MAX_EXTENDED_AID = (1 << 29) - 1
MICROSECOND = Decimal("0.000001")

# (1596240000.123456) can0 0C5#DEADBEEF01020304
CANDUMP_LINE = re.compile(
    r'^\((?P<ts>\d+(?:\.\d+)?)\)\s+(?P<iface>\S+)\s+'
    r'(?P<aid>[0-9A-Fa-f]{3}|[0-9A-Fa-f]{8})#(?P<data>[0-9A-Fa-f]*)$'
)


class LogFormat(str, Enum):
    """Supported capture log formats."""
    CANDUMP = "candump"


@dataclass(frozen=True)
class CanFrame:
    """A single classic CAN data frame."""
    timestamp: float
    channel: str
    aid: int
    payload: bytes
    extended: bool = False

    def __post_init__(self):
        limit = MAX_EXTENDED_AID if self.extended else MAX_STANDARD_AID
        if not 0 <= self.aid <= limit:
            raise ValueError(f"AID 0x{self.aid:X} out of range for "
                             f"{'29' if self.extended else '11'}-bit identifier")
        if len(self.payload) > 8:
            raise ValueError(f"Payload of {len(self.payload)} bytes exceeds 8")
        if not (self.timestamp >= 0.0 and self.timestamp != float('inf')):
            raise ValueError(f"Invalid timestamp {self.timestamp!r}")

    @property
    def aid_label(self) -> str:
        """AID in candump notation (3 hex digits, or 8 for extended)."""
        return f"{self.aid:08X}" if self.extended else f"{self.aid:03X}"


@dataclass
class Capture:
    """Time-ordered list of frames plus ingestion metadata."""
    frames: List[CanFrame] = field(default_factory=list)
    source: str = "<stream>"
    malformed_lines: int = 0

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    @property
    def time_span(self) -> float:
        if not self.frames:
            return 0.0
        return self.frames[-1].timestamp - self.frames[0].timestamp

    def metadata(self) -> dict:
        return {
            "source": self.source,
            "frame_count": self.frame_count,
            "time_span": self.time_span,
            "malformed_lines": self.malformed_lines,
        }


def _parse_timestamp(text: str) -> float:
    value = Decimal(text).quantize(MICROSECOND, rounding=ROUND_HALF_EVEN)
    return float(value)


def parse_candump_line(line: str) -> CanFrame:
    """
    Parse one candump ``-l`` line.

    Args:
        line: Text line without trailing newline

    Returns:
        Parsed CanFrame

    Raises:
        ValueError: If the line does not follow the grammar
    """
    match = CANDUMP_LINE.match(line.strip())
    if match is None:
        raise ValueError("line does not match candump grammar")
    data = match.group("data")
    if len(data) % 2 or len(data) > 16:
        raise ValueError(f"bad payload length {len(data)} hex digits")
    aid_text = match.group("aid")
    try:
        timestamp = _parse_timestamp(match.group("ts"))
    except InvalidOperation:
        raise ValueError("bad timestamp")
    return CanFrame(
        timestamp=timestamp,
        channel=match.group("iface"),
        aid=int(aid_text, 16),
        payload=bytes.fromhex(data),
        extended=len(aid_text) == 8,
    )


def _iter_lines(data: Union[bytes, str, BinaryIO]) -> Iterable[str]:
    if isinstance(data, bytes):
        return data.decode('utf-8', errors='replace').splitlines()
    if isinstance(data, str):
        return data.splitlines()
    try:
        return data.read().decode('utf-8', errors='replace').splitlines()
    except OSError as exc:
        raise UnreadableInput(f"Cannot read capture stream: {exc}")


def parse_log(data: Union[bytes, str, BinaryIO],
              fmt: LogFormat = LogFormat.CANDUMP,
              source: str = "<stream>",
              malformed_ratio_limit: float = 0.5) -> Capture:
    """
    Parse a capture log into a Capture.

    Malformed lines are counted and skipped. If more than
    ``malformed_ratio_limit`` of the non-blank lines fail, the input is
    assumed to be in another format and FormatError is raised.

    Args:
        data: Raw log content (bytes, text, or a binary stream)
        fmt: Log format tag
        source: Name recorded in the capture metadata
        malformed_ratio_limit: Fraction of bad lines tolerated

    Returns:
        Capture with frames stably sorted by timestamp
    """
    if LogFormat(fmt) is not LogFormat.CANDUMP:
        raise FormatError(f"Unsupported log format: {fmt}")

    frames = []
    total = 0
    malformed = 0
    for number, line in enumerate(_iter_lines(data), start=1):
        if not line.strip():
            continue
        total += 1
        try:
            frames.append(parse_candump_line(line))
        except ValueError as exc:
            malformed += 1
            logger.debug("%s:%d skipped: %s", source, number, exc)

    if total and malformed / total > malformed_ratio_limit:
        raise FormatError(
            f"{malformed} of {total} lines in {source} are not candump frames")
    if malformed:
        logger.info("%s: skipped %d malformed lines of %d", source, malformed, total)

    frames.sort(key=lambda frame: frame.timestamp)
    return Capture(frames=frames, source=source, malformed_lines=malformed)


def read_log(path: str, fmt: LogFormat = LogFormat.CANDUMP,
             malformed_ratio_limit: float = 0.5) -> Capture:
    """Read and parse a capture log from disk."""
    try:
        with open(path, 'rb') as f:
            raw = f.read()
    except OSError as exc:
        raise UnreadableInput(f"Cannot read {path}: {exc}")
    return parse_log(raw, fmt=fmt, source=path,
                     malformed_ratio_limit=malformed_ratio_limit)


def format_candump_line(frame: CanFrame) -> str:
    return f"({frame.timestamp:.6f}) {frame.channel} {frame.aid_label}#{frame.payload.hex().upper()}"


def write_log(capture: Capture, fmt: LogFormat = LogFormat.CANDUMP) -> bytes:
    """
    Serialize a capture back to log text.

    Args:
        capture: Capture to write
        fmt: Log format tag

    Returns:
        Encoded log content; empty bytes for an empty capture
    """
    if LogFormat(fmt) is not LogFormat.CANDUMP:
        raise FormatError(f"Unsupported log format: {fmt}")
    buffer = io.StringIO()
    for frame in capture.frames:
        buffer.write(format_candump_line(frame))
        buffer.write('\n')
    return buffer.getvalue().encode('utf-8')


def save_log(capture: Capture, path: str, fmt: LogFormat = LogFormat.CANDUMP):
    """Write a capture to disk."""
    try:
        with open(path, 'wb') as f:
            f.write(write_log(capture, fmt))
    except OSError as exc:
        raise UnreadableInput(f"Cannot write {path}: {exc}")
