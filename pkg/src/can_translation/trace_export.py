"""
Trace export.
Writes CSV dumps of recovered tokens and diagnostic traces, and optional
per-AID plots of fitted tokens against their DIDs.
"""

import os
import csv
import logging
from typing import List

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .analysis_pipeline import AnalysisReport, signal_name
from .models.matcher import Endianness, make_integers
from .models.tokenizer import TokenBoundary

logger = logging.getLogger(__name__)

PLOT_WINDOW = 300.0


def _write_series(path: str, times, values) -> str:
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(["time", "value"])
        for t, value in zip(times, values):
            writer.writerow([f"{float(t):.6f}", int(value)])
    return path


def export_csv(report: AnalysisReport, out_dir: str, anonymize: bool = False) -> List[str]:
    """
    Dump time,value CSV files for external plotting.

    One file per selected token (token integer at AID times), one per
    unmatched used-bit run (big-endian integer of the run), and one per DID
    (raw response values).

    Args:
        report: Analysis report with traces attached
        out_dir: Output directory (created when missing)
        anonymize: Use priority-rank AID labels in file names

    Returns:
        Paths written, in a fixed order
    """
    os.makedirs(out_dir, exist_ok=True)
    labels = report.aid_labels(anonymize)
    written = []
    for key, analysis in sorted(report.aids.items()):
        label = labels[key]
        for match in analysis.payload.selected:
            series = make_integers(analysis.trace, match.boundary, match.endianness)
            name = f"AID_{label}_{match.boundary.j_s}_{match.boundary.j_e}_{signal_name(match.did)}.csv"
            written.append(_write_series(os.path.join(out_dir, name), series.times, series.values))
        for boundary in analysis.unmatched:
            series = make_integers(analysis.trace, boundary, Endianness.BIG)
            name = f"AID_{label}_UNKNOWN_{boundary.j_s}_{boundary.j_e}.csv"
            written.append(_write_series(os.path.join(out_dir, name), series.times, series.values))
    for did, trace in sorted(report.did_traces.items()):
        written.append(_write_series(os.path.join(out_dir, f"{signal_name(did)}.csv"),
                                     trace.times, trace.values))
    logger.info("wrote %d CSV traces to %s", len(written), out_dir)
    return written


def plot_payload(report: AnalysisReport, out_dir: str, anonymize: bool = False,
                 window: float = PLOT_WINDOW) -> List[str]:
    """
    Plot each AID's recovered signals over the first ``window`` seconds.

    Selected tokens are drawn as fitted values a*x + b over their DID's
    raw responses; unmatched runs go on a secondary axis as raw integers.

    Returns:
        PNG paths written, one per AID
    """
    os.makedirs(out_dir, exist_ok=True)
    labels = report.aid_labels(anonymize)
    written = []
    for key, analysis in sorted(report.aids.items()):
        trace = analysis.trace
        start = trace.times[0]
        visible = trace.times <= start + window
        fig, ax = plt.subplots(figsize=(12, 5))

        for match in analysis.payload.selected:
            series = make_integers(trace, match.boundary, match.endianness)
            fitted = match.a * series.values.astype(float) + match.b
            ax.plot(trace.times[visible] - start, fitted[visible], linewidth=0.8,
                    label=f"[{match.boundary.j_s},{match.boundary.j_e}] r2={match.r2:.3f}")
            did_trace = report.did_traces.get(match.did)
            if did_trace is not None:
                did_visible = (did_trace.times >= start) & (did_trace.times <= start + window)
                ax.plot(did_trace.times[did_visible] - start, did_trace.values[did_visible],
                        'x', markersize=2, label=signal_name(match.did))

        if analysis.unmatched:
            other = ax.twinx()
            for boundary in analysis.unmatched:
                series = make_integers(trace, boundary, Endianness.BIG)
                other.plot(trace.times[visible] - start, series.values[visible].astype(float),
                           linestyle='--', linewidth=0.5, label=f"UNKNOWN [{boundary.j_s},{boundary.j_e}]")
            other.set_ylabel("raw")
            other.legend(loc='lower right', fontsize='small')

        ax.set_xlabel("Time (seconds)")
        ax.set_ylabel("raw diagnostic value")
        ax.set_title(f"AID {labels[key]}: packing score {analysis.payload.score:.3f}")
        ax.grid(True, alpha=0.3)
        if analysis.payload.selected:
            ax.legend(loc='upper right', fontsize='small')
        fig.tight_layout()

        path = os.path.join(out_dir, f"AID_{labels[key]}.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    logger.info("wrote %d plots to %s", len(written), out_dir)
    return written
