# ============================================
# FILE: src/export_manager.py
# Report rendering for stdout (text tables or line-delimited records)
# and optional JSON + Excel report files
# ============================================

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from pydantic import BaseModel

from models import (
    Actor,
    ComparisonRow,
    EfficiencyReport,
    LeakageReport,
    OutputFormat,
    SessionResult,
    TranscriptEvent,
    ValidationReport,
)

logger = logging.getLogger(__name__)


def _flag(value: Optional[bool]) -> str:
    if value is None:
        return "-"
    return "true" if value else "false"


def _figure(value: Optional[float], digits: int = 4) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def _key_values(rows: Sequence[tuple]) -> str:
    width = max(len(key) for key, _ in rows)
    return "".join(f"{key.ljust(width)} : {value}\n" for key, value in rows)


def _table(records: List[Dict[str, Any]]) -> str:
    return pd.DataFrame(records).to_string(index=False) + "\n"


def report_lines(kind: str, payloads: Sequence[Dict[str, Any]]) -> str:
    """Structured output: one transcript-format record per payload"""
    events = [
        TranscriptEvent(step_index=i, actor=Actor.SIMULATOR, event_kind=kind, payload=payload)
        for i, payload in enumerate(payloads)
    ]
    return "".join(event.to_line() + "\n" for event in events)


# ------------------------------------------------------------------
# Sessions
# ------------------------------------------------------------------

def render_session(result: SessionResult, output_format: OutputFormat, include_transcript: bool = False) -> str:
    if output_format == OutputFormat.STRUCTURED:
        summary = result.model_dump(mode="json", exclude={"transcript"})
        text = result.transcript.to_jsonl() if include_transcript else ""
        return text + report_lines("session_result", [summary])

    rows = [
        ("protocol", result.protocol.value),
        ("n", result.n),
        ("aborted", _flag(result.aborted)),
        ("abort_reason", result.abort_reason.value if result.abort_reason else "-"),
        ("decoded_message", result.decoded_message or "-"),
        ("observed_error_rate", _figure(result.observed_error_rate)),
        ("sifted_decoys", result.sifted_decoy_count),
        ("rounds_completed", result.rounds_completed),
        ("classical_bits", result.classical_bits),
        ("decode_paths_agree", _flag(result.decode_paths_agree)),
    ]
    if result.alice_key is not None:
        rows.append(("alice_key", result.alice_key))
    if result.eve_inference is not None:
        rows.append(("eve_inference", result.eve_inference))

    text = _key_values(rows)
    if include_transcript:
        text += "\n" + result.transcript.to_jsonl()
    return text


# ------------------------------------------------------------------
# Reports
# ------------------------------------------------------------------

def render_leakage(report: LeakageReport, output_format: OutputFormat) -> str:
    if output_format == OutputFormat.STRUCTURED:
        return report_lines("leakage", [report.model_dump(mode="json", by_alias=True)])
    return _key_values([
        ("protocol", report.protocol.value),
        ("eve", report.eve_kind.value),
        ("trials", report.trials),
        ("units_per_trial", report.units_per_trial),
        ("reorder", _flag(report.reorder_enabled)),
        ("per_message_accuracy", _figure(report.per_message_accuracy)),
        ("per_bit_accuracy", _figure(report.per_bit_accuracy)),
        ("paper_formula", _figure(report.uniform_guess_estimate)),
        ("table_exact_message", _figure(report.table_exact_message_estimate)),
        ("table_exact_bit", _figure(report.table_exact_bit_estimate)),
        ("detection_probability", _figure(report.detection_probability)),
        ("sifted_decoys_mean", _figure(report.sifted_decoys_mean, 2)),
    ])


def render_efficiency(report: EfficiencyReport, output_format: OutputFormat) -> str:
    if output_format == OutputFormat.STRUCTURED:
        return report_lines("efficiency", [report.model_dump(mode="json")])
    table = _table([{
        "protocol": report.protocol,
        "n": report.n,
        "c": report.c,
        "q": report.q,
        "b": report.b,
        "eta1": str(report.eta1),
        "eta2": str(report.eta2),
        "eta1_%": f"{report.eta1_percent:.2f}%",
        "eta2_%": f"{report.eta2_percent:.2f}%",
    }])
    return table + f"note: {report.convention_note}\n"


def render_comparison(rows: Sequence[ComparisonRow], output_format: OutputFormat, footnote: str = "") -> str:
    if output_format == OutputFormat.STRUCTURED:
        return report_lines("comparison_row", [row.model_dump(mode="json") for row in rows])
    table = _table([
        {
            "Protocol": row.protocol_label,
            "eta1": f"{row.eta1_percent:.2f}%",
            "eta2": f"{row.eta2_percent:.2f}%",
            "Quantum state": row.state_label,
        }
        for row in rows
    ])
    return table + (f"note: {footnote}\n" if footnote else "")


def render_validation(report: ValidationReport, output_format: OutputFormat) -> str:
    if output_format == OutputFormat.STRUCTURED:
        payload = report.model_dump(mode="json")
        payload["valid"] = report.valid
        return report_lines("channel_validation", [payload])
    rows = [
        ("name", report.name or "-"),
        ("valid", _flag(report.valid)),
        ("orthonormal", _flag(report.orthonormal)),
        ("unitaries_valid", _flag(report.unitaries_valid)),
        ("decodable", _flag(report.decodable)),
        ("max_cross_overlap", f"{report.max_cross_overlap:.3e}"),
        ("operator_arity", report.operator_arity),
        ("register_size", report.register_size),
        ("dense_coding_capable", _flag(report.dense_coding_capable)),
        ("encoded_states", report.encoded_state_count),
        ("classification", report.classification_note),
    ]
    rows.extend(("problem", problem) for problem in report.problems)
    return _key_values(rows)


# ------------------------------------------------------------------
# File export
# ------------------------------------------------------------------

class ReportExporter:
    """Writes JSON and Excel copies of reports into REPORT_DIR"""

    def __init__(self, config):
        self.config = config
        self.logger = logging.getLogger(__name__)
        self.output_dir = Path(config.REPORT_DIR) if config.REPORT_DIR else None

    @property
    def enabled(self) -> bool:
        return self.output_dir is not None

    def export(self, prefix: str, records: Sequence[BaseModel], notes: Optional[Dict[str, Any]] = None) -> Dict[str, str]:
        """Save records as {prefix}_{timestamp}.json and .xlsx; returns the paths written"""
        if not self.enabled:
            return {}

        rows = [record.model_dump(mode="json", by_alias=True) for record in records]
        timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
        self.output_dir.mkdir(parents=True, exist_ok=True)

        paths = {}
        try:
            json_path = self.output_dir / f"{prefix}_{timestamp}.json"
            with open(json_path, 'w', encoding='utf-8') as f:
                json.dump({"generated": timestamp, "notes": notes or {}, "records": rows}, f, indent=2, ensure_ascii=False)
            paths["json"] = str(json_path)

            excel_path = self.output_dir / f"{prefix}_{timestamp}.xlsx"
            self._write_excel(excel_path, rows, notes or {})
            paths["excel"] = str(excel_path)
        except OSError as e:
            self.logger.error(f"❌ Report export failed for {prefix}: {e}")
            return paths

        self.logger.info(f"📊 Reports saved: {', '.join(paths.values())}")
        return paths

    def _write_excel(self, path: Path, rows: List[Dict[str, Any]], notes: Dict[str, Any]) -> None:
        flat = [{k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in row.items()} for row in rows]
        with pd.ExcelWriter(path, engine='openpyxl') as writer:
            pd.DataFrame(flat).to_excel(writer, sheet_name='Report', index=False)
            if notes:
                pd.DataFrame([{"Key": k, "Value": str(v)} for k, v in notes.items()]).to_excel(
                    writer, sheet_name='Notes', index=False
                )
