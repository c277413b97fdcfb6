"""
DBC fragment writer.
Renders the selected tokens of an analysis report as BO_/SG_ definitions.

Bit numbering: internally bit j = 0 is the most significant bit of payload
byte 0. In DBC terms that bit is (j // 8) * 8 + (7 - j % 8), e.g.

    j = 0  -> 7     (MSB of byte 0)
    j = 7  -> 0     (LSB of byte 0)
    j = 40 -> 47    (MSB of byte 5)

Big-endian tokens (j_s most significant) are written as Motorola (@0)
signals whose start bit is the mapped j_s; the Motorola bit walk visits
exactly j_s..j_e, so these lines are exact. Little-endian tokens have j_s
least significant with significance rising towards j_e, which lowers the
DBC bit number inside a byte. No DBC byte order walks bits that way, so a
multi-bit little-endian token is written as a commented Intel (@1) line
starting at the mapped j_e: inside one byte it covers the token's bits in
reversed order. One-bit tokens are exact either way.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

from .data.traces import pid_formula

DBC_HEADER = '''VERSION ""


NS_ :
    CM_
    BA_DEF_
    BA_

BS_:

BU_:
'''

NODE = "Vector__XXX"
EXTENDED_FLAG = 0x80000000


@dataclass(frozen=True)
class SignalDefinition:
    """One recovered signal in DBC terms."""
    aid: int
    name: str
    start_bit: int
    length: int
    endianness: str
    scale: float
    offset: float
    minimum: float
    maximum: float
    unit: str
    r2: float

    def __post_init__(self):
        if self.length < 1 or self.start_bit < 0 or self.start_bit > 63:
            raise ValueError(f"signal {self.name} does not fit a 64-bit payload")

    @property
    def byte_order(self) -> int:
        return 0 if self.endianness == "big" else 1

    @property
    def exact(self) -> bool:
        return self.endianness == "big" or self.length == 1


def dbc_start_bit(j: int) -> int:
    return (j // 8) * 8 + (7 - j % 8)


def _number(value: float) -> str:
    return f"{value:.9g}"


def compose_scale(did: int, a: float, b: float) -> Tuple[float, float, str]:
    """
    Physical value = PID formula applied to (a * token + b).

    All bundled formulas are affine, so the composition is affine too.
    Unknown PIDs keep the raw mapping and the "raw" unit.
    """
    formula = pid_formula(did)
    if formula is None:
        return a, b, "raw"
    return formula.scale * a, formula.scale * b + formula.offset, formula.unit


def signal_definition(aid: int, match: Dict[str, Any], name: Optional[str] = None) -> SignalDefinition:
    """Build the SignalDefinition for one selected match from a report."""
    length = match["j_e"] - match["j_s"] + 1
    scale, offset, unit = compose_scale(match["did"], match["a"], match["b"])
    ends = (offset, scale * ((1 << length) - 1) + offset)
    return SignalDefinition(
        aid=aid,
        name=name or match.get("name") or f"DID{match['did']}",
        start_bit=dbc_start_bit(match["j_s"] if match["endianness"] == "big" else match["j_e"]),
        length=length,
        endianness=match["endianness"],
        scale=scale,
        offset=offset,
        minimum=min(ends),
        maximum=max(ends),
        unit=unit,
        r2=match["r2"],
    )


def format_signal(signal: SignalDefinition) -> str:
    """Approximate definitions come out commented."""
    prefix = '' if signal.exact else '//'
    return (f'{prefix} SG_ {signal.name} : {signal.start_bit}|{signal.length}@{signal.byte_order}+ '
            f'({_number(signal.scale)},{_number(signal.offset)}) '
            f'[{_number(signal.minimum)}|{_number(signal.maximum)}] "{signal.unit}" {NODE}')


def _unique_names(selected: List[Dict[str, Any]]) -> List[str]:
    names = []
    seen: Dict[str, int] = {}
    for match in selected:
        base = match.get("name") or f"DID{match['did']}"
        seen[base] = seen.get(base, 0) + 1
        names.append(base if seen[base] == 1 else f"{base}_{seen[base]}")
    return names


def emit_dbc(report: Dict[str, Any]) -> str:
    """
    Render a report as a DBC fragment.

    Args:
        report: Report dictionary (AnalysisReport.to_dict() or loaded JSON)

    Returns:
        DBC text; header only when the report has no AIDs
    """
    lines = [DBC_HEADER]
    cycle_times = []
    for label, entry in sorted(report.get("aids", {}).items(), key=lambda item: item[1]["id"]):
        message_id = entry["id"] | (EXTENDED_FLAG if entry.get("extended") else 0)
        lines.append(f'BO_ {message_id} AID_{label}: 8 {NODE}')
        for match, name in zip(entry["selected"], _unique_names(entry["selected"])):
            lines.append(format_signal(signal_definition(entry["id"], match, name)))
        for j_s, j_e in entry.get("unmatched", []):
            lines.append(f'// SG_ UNKNOWN_{j_s}_{j_e} : {dbc_start_bit(j_s)}|{j_e - j_s + 1}@0+ '
                         f'(1,0) [0|{(1 << (j_e - j_s + 1)) - 1}] "" {NODE}')
        lines.append('')
        period = entry.get("timing", {}).get("mean_period")
        if period:
            cycle_times.append((message_id, int(round(period * 1000))))

    if cycle_times:
        lines.append('BA_DEF_ BO_ "GenMsgCycleTime" INT 0 65535;')
        for message_id, milliseconds in cycle_times:
            lines.append(f'BA_ "GenMsgCycleTime" BO_ {message_id} {milliseconds};')
        lines.append('')
    return '\n'.join(lines)
