"""
End-to-end tests for the analysis pipeline, report, DBC fragment and trace exports.
"""

import os
import json
import time

import numpy as np
import pytest

from can_translation.analysis_pipeline import CanTranslator, analyze, round_floats, signal_name
from can_translation.config import AnalysisConfig, build_analysis_config
from can_translation.data.canio import Capture, CanFrame, save_log
from can_translation.data.synth import (AidSpec, ChannelSpec, SignalSpec, SynthConfig,
                                        generate_capture, score_against_truth)
from can_translation.data.traces import AidKey, build_aid_traces
from can_translation.dbc_writer import compose_scale, dbc_start_bit, emit_dbc
from can_translation.errors import ConfigError, NoUsableDiagnostics
from can_translation.models.matcher import Endianness, make_integers
from can_translation.models.tokenizer import TokenBoundary
from can_translation.trace_export import export_csv, plot_payload


def test_synthetic_recovery(synthetic):
    capture, truth = synthetic
    started = time.perf_counter()
    report = CanTranslator(AnalysisConfig(alpha=0.5, workers=4)).analyze_capture(capture)
    assert time.perf_counter() - started < 60.0

    document = report.to_dict()
    metrics = score_against_truth(document, truth)
    for signal in metrics["signals"]:
        if signal["kind"] == "did-linked":
            assert signal["boundary_exact"], signal
            assert signal["endianness_match"] and signal["did_match"], signal
            assert signal["r2"] >= 0.99
            assert signal["a_rel_error"] <= 0.02
            assert signal["b_range_error"] <= 0.02
        else:
            assert not signal["false_match"], signal
    assert metrics["bit_recall"] == 1.0

    for label, entry in document["aids"].items():
        linked_bits = sum(s["j_e"] - s["j_s"] + 1 for s in truth["signals"]
                          if s["aid"] == label and s["kind"] == "did-linked")
        assert entry["score"] >= 0.95 * linked_bits / 64


def test_report_statistics(synthetic_report):
    stats = synthetic_report.capture_stats()
    assert stats["aid_count"] == 3
    total = stats["constant_fraction"] + stats["matched_fraction"] + stats["unknown_fraction"]
    assert total == pytest.approx(1.0, abs=1e-9)
    scores = [analysis.payload.score for analysis in synthetic_report.aids.values()]
    assert stats["total_match_score"] == pytest.approx(sum(scores) / 3)
    assert stats["overall_match_score"] == pytest.approx(
        stats["total_match_score"] / stats["matched_fraction"])
    assert stats["matched_fraction"] == pytest.approx(84 / 192)
    assert stats["total_match_score"] >= 0.99 * 84 / 192


def test_report_document(synthetic_report):
    document = json.loads(synthetic_report.to_json())
    assert document["schema"] == 1
    assert document["config"]["alpha"] == 0.5
    assert document["config"]["diag_ranges"] == ["7E8-7EF"]
    assert sorted(document["dids"]) == ["12", "13", "17", "5", "73"]
    assert document["dids"]["12"]["unit"] == "rpm"
    entry = document["aids"]["0C5"]
    assert entry["id"] == 0x0C5 and entry["extended"] is False
    assert [(s["j_s"], s["j_e"]) for s in entry["selected"]] == [(10, 25), (28, 39)]
    assert entry["selected"][0]["name"] == "DID12_EngineRPM"
    assert entry["unmatched"] == [[60, 63]]
    assert entry["classification"]["layout"][:10] == "1010010100"
    assert entry["timing"]["mean_period"] == pytest.approx(0.02, rel=1e-3)
    assert entry["translation_efficiency"] == pytest.approx(entry["score"] / entry["used_fraction"])


def test_alpha_monotonicity(synthetic):
    capture, _ = synthetic
    previous = None
    for alpha in (0.2, 0.5, 0.8, 0.98):
        stats = CanTranslator(AnalysisConfig(alpha=alpha)).analyze_capture(capture).capture_stats()
        if previous is not None:
            assert stats["matched_fraction"] <= previous["matched_fraction"]
            assert stats["total_match_score"] <= previous["total_match_score"]
        previous = stats


def test_worker_count_does_not_change_report(synthetic):
    capture, _ = synthetic
    single = CanTranslator(AnalysisConfig(workers=1)).analyze_capture(capture).to_json()
    pooled = CanTranslator(AnalysisConfig(workers=8)).analyze_capture(capture).to_json()
    assert single == pooled


def test_indicator_bit_is_correlated_not_exact():
    config = SynthConfig(
        duration=600.0, seed=42,
        channels=[ChannelSpec(did=12, low=2400, high=24000, rate=0.15),
                  ChannelSpec(did=73, low=0, high=230, rate=0.2, driver_did=12, driver_weight=0.5)],
        aids=[AidSpec(aid="1F4", period=0.02, signals=[
            SignalSpec(j_s=0, j_e=7, kind="constant-run", value=0x5A),
            SignalSpec(j_s=13, j_e=13, kind="indicator", did=73),
            SignalSpec(j_s=32, j_e=35, kind="counter"),
        ])],
    )
    capture, truth = generate_capture(config)
    document = CanTranslator(AnalysisConfig(alpha=0.2)).analyze_capture(capture).to_dict()
    matches = [m for m in document["aids"]["1F4"]["matches"]
               if m["j_s"] == 13 and m["j_e"] == 13 and m["did"] == 73]
    assert matches
    assert all(0.3 <= m["r2"] <= 0.8 for m in matches)
    assert truth["signals"][1]["threshold"] > 0


def test_no_diagnostics_is_an_error():
    capture = Capture(frames=[CanFrame(timestamp=i * 0.1, channel="can0", aid=0x100,
                                       payload=bytes([i % 256] * 8)) for i in range(50)])
    with pytest.raises(NoUsableDiagnostics):
        CanTranslator(AnalysisConfig()).analyze_capture(capture)


def test_disjoint_diagnostics_are_an_error():
    frames = [CanFrame(timestamp=i * 0.1, channel="can0", aid=0x100, payload=bytes([i % 256] * 8))
              for i in range(50)]
    frames += [CanFrame(timestamp=100.0 + i, channel="can0", aid=0x7E8,
                        payload=bytes([0x03, 0x41, 0x0D, i, 0, 0, 0, 0])) for i in range(20)]
    with pytest.raises(NoUsableDiagnostics):
        CanTranslator(AnalysisConfig()).analyze_capture(Capture(frames=frames))


def test_extended_diagnostic_range():
    frames = [CanFrame(timestamp=i * 0.1, channel="can0", aid=0x100,
                       payload=bytes([0x11, i // 2, 0, 0, 0, 0, 0, 0])) for i in range(300)]
    frames += [CanFrame(timestamp=j * 0.5, channel="can0", aid=0x18DAF110, extended=True,
                        payload=bytes([0x03, 0x41, 0x0D, j * 5 // 2, 0, 0, 0, 0])) for j in range(60)]
    frames.sort(key=lambda f: f.timestamp)
    config = AnalysisConfig(diag_ranges=["18DAF100-18DAF1FF"])
    document = CanTranslator(config).analyze_capture(Capture(frames=frames)).to_dict()

    assert sorted(document["aids"]) == ["100"]
    assert sorted(document["dids"]) == ["13"]
    assert list(document["diagnostic_frames"]) == ["18DAF110"]
    selected = document["aids"]["100"]["selected"]
    assert any(s["did"] == 13 and s["endianness"] == "big" and s["r2"] > 0.99 for s in selected)


def test_zero_matches_still_reports(synthetic):
    capture, _ = synthetic
    report = CanTranslator(AnalysisConfig(alpha=1.0)).analyze_capture(capture)
    stats = report.capture_stats()
    assert stats["matched_fraction"] == 0.0
    assert stats["overall_match_score"] is None
    assert stats["constant_fraction"] + stats["unknown_fraction"] == pytest.approx(1.0)


def test_anonymized_report(synthetic_report):
    document = synthetic_report.to_dict(anonymize=True)
    assert sorted(document["aids"]) == ["AID1", "AID2", "AID3"]
    assert document["aids"]["AID1"]["id"] == 1
    assert "0C5" not in json.dumps(document)
    assert document["anonymized"] is True


def test_analyze_from_file(tmp_path, synthetic):
    capture, _ = synthetic
    short = Capture(frames=[f for f in capture.frames if f.timestamp < 120.0])
    path = tmp_path / "capture.log"
    save_log(short, str(path))
    report = analyze(str(path), alpha=0.5, workers=2)
    assert report.capture["source"] == "capture.log"
    assert report.capture["frame_count"] == short.frame_count
    assert report.config.workers == 2


def test_config_overrides_are_validated():
    assert build_analysis_config({"alpha": 0.3, "min_points": None}).alpha == 0.3
    with pytest.raises(ConfigError):
        build_analysis_config({"alpha": 1.5})
    with pytest.raises(ConfigError):
        build_analysis_config({"diag_ranges": ["7EF-7E8"]})


def test_round_floats():
    assert round_floats({"x": [1 / 3, 2]}) == {"x": [0.333333333, 2]}


def test_dbc_bit_mapping():
    assert [dbc_start_bit(j) for j in (0, 7, 8, 40, 55, 63)] == [7, 0, 15, 47, 48, 56]


def dbc_report(selected, unmatched=(), timing=None):
    return {"schema": 1, "aids": {"0C5": {
        "id": 0x0C5, "extended": False, "selected": selected,
        "unmatched": [list(u) for u in unmatched], "timing": timing or {}}}}


def test_dbc_rpm_signal():
    text = emit_dbc(dbc_report([{"j_s": 40, "j_e": 55, "endianness": "big", "did": 12,
                                 "r2": 0.999, "a": 1.0, "b": 0.0, "name": signal_name(12)}]))
    assert 'BO_ 197 AID_0C5: 8 Vector__XXX' in text
    assert ' SG_ DID12_EngineRPM : 47|16@0+ (0.25,0) [0|16383.75] "rpm" Vector__XXX' in text


def test_dbc_composes_scale_and_marks_unknown_runs():
    assert compose_scale(5, 0.5, 10.0) == (0.5, -30.0, "degC")
    assert compose_scale(0xA6, 2.0, 1.0) == (2.0, 1.0, "raw")
    text = emit_dbc(dbc_report([{"j_s": 3, "j_e": 3, "endianness": "little", "did": 0xA6,
                                 "r2": 0.6, "a": 1.0, "b": 0.0}],
                               unmatched=[(60, 63)], timing={"mean_period": 0.02}))
    assert ' SG_ DID166 : 4|1@1+ (1,0) [0|1] "raw" Vector__XXX' in text
    assert '// SG_ UNKNOWN_60_63 : 59|4@0+' in text
    assert 'BA_ "GenMsgCycleTime" BO_ 197 20;' in text


def dbc_bit(payload, bit):
    return (payload[bit // 8] >> (bit % 8)) & 1


def decode_sg(line, payload):
    """Raw value of an SG_ line using the standard Motorola/Intel bit walks."""
    layout = line.split(" : ")[1].split(" ")[0]
    start, rest = layout.split("|")
    length, order = rest.rstrip("+").split("@")
    bit, value = int(start), 0
    for i in range(int(length)):
        if order == "0":
            value = (value << 1) | dbc_bit(payload, bit)
            bit = bit + 15 if bit % 8 == 0 else bit - 1
        else:
            value |= dbc_bit(payload, bit) << i
            bit += 1
    return value


def test_dbc_signal_lines_decode_like_the_tokens():
    rng = np.random.default_rng(5)
    payloads = [rng.bytes(8) for _ in range(200)]
    capture = Capture(frames=[CanFrame(timestamp=i * 0.01, channel="can0", aid=0x0C5, payload=p)
                              for i, p in enumerate(payloads)])
    trace = build_aid_traces(capture, [])[AidKey(0x0C5)]
    tokens = [(10, 25, "big"), (28, 39, "big"), (5, 5, "big"), (44, 44, "little"), (0, 63, "big")]
    selected = [{"j_s": j_s, "j_e": j_e, "endianness": order, "did": 0xA6, "r2": 0.9,
                 "a": 1.0, "b": 0.0, "name": f"T{j_s}"} for j_s, j_e, order in tokens]
    lines = emit_dbc(dbc_report(selected)).splitlines()

    for j_s, j_e, order in tokens:
        line = next(text for text in lines if text.startswith(f" SG_ T{j_s} "))
        expected = make_integers(trace, TokenBoundary(j_s, j_e), Endianness(order)).values
        assert [decode_sg(line, p) for p in payloads] == [int(v) for v in expected]


def test_dbc_multibit_little_endian_is_commented():
    text = emit_dbc(dbc_report([{"j_s": 0, "j_e": 3, "endianness": "little", "did": 0xA6,
                                 "r2": 0.9, "a": 1.0, "b": 0.0}]))
    assert '// SG_ DID166 : 4|4@1+ (1,0) [0|15] "raw" Vector__XXX' in text.splitlines()
    assert not any(line.startswith(" SG_ ") for line in text.splitlines())


def test_dbc_empty_report_is_header_only():
    text = emit_dbc({"schema": 1, "aids": {}})
    assert text.startswith('VERSION ""')
    assert "BO_ " not in text and "SG_" not in text


def test_dbc_for_synthetic_report(synthetic_report):
    lines = emit_dbc(synthetic_report.to_dict()).splitlines()
    assert sum(line.startswith("BO_ ") for line in lines) == 3
    assert sum(line.startswith(" SG_ ") for line in lines) == 4
    assert sum(line.startswith("// SG_ DID") for line in lines) == 2
    assert sum(line.startswith("// SG_ UNKNOWN") for line in lines) == 3
    assert sum(line.startswith("BA_ \"GenMsgCycleTime\"") for line in lines) == 3


def test_csv_and_plot_exports(tmp_path, synthetic_report):
    paths = export_csv(synthetic_report, str(tmp_path / "csv"))
    names = {os.path.basename(p) for p in paths}
    assert "AID_0C5_10_25_DID12_EngineRPM.csv" in names
    assert "AID_0C5_UNKNOWN_60_63.csv" in names
    assert "DID13_VehicleSpeed.csv" in names
    with open(tmp_path / "csv" / "AID_0C5_UNKNOWN_60_63.csv") as f:
        header = f.readline().strip()
        first = f.readline().strip().split(",")
    assert header == "time,value"
    assert int(first[1]) == 0

    plots = plot_payload(synthetic_report, str(tmp_path / "plots"))
    assert len(plots) == 3
    assert all(os.path.getsize(p) > 0 for p in plots)
