"""
Command-line interface for the CAN translation toolkit.
This script provides a CLI for analyzing captures, writing DBC fragments,
generating synthetic captures and scoring reports against ground truth.

Exit codes: 0 success, 1 usage or input error, 2 internal invariant violation.
"""

import os
import sys
import json
import logging
import argparse

# Add src to path
sys.path.append(os.path.join(os.path.dirname(__file__), 'src'))

from can_translation.analysis_pipeline import CanTranslator
from can_translation.config import build_analysis_config, load_config
from can_translation.data.canio import save_log
from can_translation.data.synth import (default_synth_config, generate_capture,
                                        load_synth_config, score_against_truth)
from can_translation.dbc_writer import emit_dbc
from can_translation.errors import CanTranslationError, ConfigError, InvariantViolation, UnreadableInput
from can_translation.trace_export import export_csv, plot_payload

logger = logging.getLogger("can_cli")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVARIANT = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="CAN signal tokenization and translation")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    parser.add_argument("--config", default=None, help="config.json path")

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    # Analyze command
    analyze_parser = subparsers.add_parser("analyze", help="Analyze a candump capture")
    analyze_parser.add_argument("log", help="candump -l capture file")
    analyze_parser.add_argument("--alpha", type=float, help="R² acceptance threshold (default 0.50)")
    analyze_parser.add_argument("--min-points", type=int, help="Minimum aligned samples per fit")
    analyze_parser.add_argument("--interp", choices=["linear", "hold"], help="Interpolation mode")
    analyze_parser.add_argument("--diag-range", action="append", dest="diag_ranges",
                                help="Diagnostic response AID range, e.g. 7E8-7EF (repeatable)")
    analyze_parser.add_argument("--workers", type=int, help="Worker threads")
    analyze_parser.add_argument("--out", help="Report JSON path (stdout when omitted)")
    analyze_parser.add_argument("--dbc", help="DBC fragment path")
    analyze_parser.add_argument("--csv-dir", help="Directory for CSV trace dumps")
    analyze_parser.add_argument("--plot-dir", help="Directory for per-AID PNG plots")
    analyze_parser.add_argument("--anonymize-aids", action="store_true",
                                help="Replace AIDs by priority rank")

    # DBC command
    dbc_parser = subparsers.add_parser("dbc", help="Write a DBC fragment from a report")
    dbc_parser.add_argument("report", help="Report JSON written by analyze")
    dbc_parser.add_argument("--out", help="DBC path (stdout when omitted)")

    # Synth command
    synth_parser = subparsers.add_parser("synth", help="Generate a synthetic capture")
    synth_parser.add_argument("--layout", help="Synthetic layout JSON (bundled default when omitted)")
    synth_parser.add_argument("--seed", type=int, help="Random seed")
    synth_parser.add_argument("--duration", type=float, help="Capture length in seconds")
    synth_parser.add_argument("--out", required=True, help="Capture log path")
    synth_parser.add_argument("--truth", required=True, help="Ground truth JSON path")

    # Score command
    score_parser = subparsers.add_parser("score", help="Score a report against ground truth")
    score_parser.add_argument("report", help="Report JSON")
    score_parser.add_argument("truth", help="Ground truth JSON")

    # Serve command
    serve_parser = subparsers.add_parser("serve", help="Run the HTTP API")
    serve_parser.add_argument("--host", help="Bind address")
    serve_parser.add_argument("--port", type=int, help="Port")

    return parser


def _read_json(path: str) -> dict:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise UnreadableInput(f"Cannot read {path}: {exc}")


def _write_text(path: str, text: str):
    try:
        with open(path, 'w', encoding='utf-8') as f:
            f.write(text)
    except OSError as exc:
        raise UnreadableInput(f"Cannot write {path}: {exc}")


def _dump(document: dict) -> str:
    return json.dumps(document, indent=2, sort_keys=True) + '\n'


def cmd_analyze(args) -> int:
    config = build_analysis_config({
        "alpha": args.alpha,
        "min_points": args.min_points,
        "interpolation": args.interp,
        "diag_ranges": args.diag_ranges,
        "workers": args.workers,
    }, path=args.config)
    report = CanTranslator(config).analyze(args.log)
    document = report.to_dict(anonymize=args.anonymize_aids)
    text = _dump(document)

    if args.out:
        _write_text(args.out, text)
        print(f"Report written to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    if args.dbc:
        _write_text(args.dbc, emit_dbc(document))
        print(f"DBC fragment written to {args.dbc}", file=sys.stderr)
    if args.csv_dir:
        paths = export_csv(report, args.csv_dir, anonymize=args.anonymize_aids)
        print(f"{len(paths)} CSV traces written to {args.csv_dir}", file=sys.stderr)
    if args.plot_dir:
        paths = plot_payload(report, args.plot_dir, anonymize=args.anonymize_aids)
        print(f"{len(paths)} plots written to {args.plot_dir}", file=sys.stderr)

    stats = document["stats"]
    if stats["aid_count"]:
        print(f"AIDs: {stats['aid_count']}  constant: {stats['constant_fraction']:.3f}  "
              f"matched: {stats['matched_fraction']:.3f}  unknown: {stats['unknown_fraction']:.3f}  "
              f"total match score: {stats['total_match_score']:.3f}", file=sys.stderr)
    else:
        print("No broadcast AIDs in capture", file=sys.stderr)
    return EXIT_OK


def cmd_dbc(args) -> int:
    text = emit_dbc(_read_json(args.report))
    if args.out:
        _write_text(args.out, text)
        print(f"DBC fragment written to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    config = load_synth_config(args.layout) if args.layout else default_synth_config()
    overrides = {key: value for key, value in (("seed", args.seed), ("duration", args.duration))
                 if value is not None}
    if overrides:
        try:
            config = type(config).model_validate(dict(config.model_dump(), **overrides))
        except ValueError as exc:
            raise ConfigError(str(exc))
    capture, truth = generate_capture(config)
    save_log(capture, args.out)
    _write_text(args.truth, _dump(truth))
    print(f"{capture.frame_count} frames written to {args.out}, ground truth to {args.truth}",
          file=sys.stderr)
    return EXIT_OK


def cmd_score(args) -> int:
    metrics = score_against_truth(_read_json(args.report), _read_json(args.truth))
    sys.stdout.write(_dump(metrics))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn
    from can_translation.api.main import app

    settings = load_config(args.config)
    uvicorn.run(app, host=args.host or settings["api_host"], port=args.port or settings["api_port"])
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "dbc": cmd_dbc,
    "synth": cmd_synth,
    "score": cmd_score,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    """Main CLI function."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)

    if args.command not in COMMANDS:
        parser.print_help()
        return EXIT_ERROR
    try:
        return COMMANDS[args.command](args)
    except InvariantViolation as exc:
        print(f"Internal error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except CanTranslationError as exc:
        print(f"Error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
