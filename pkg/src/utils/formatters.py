"""
Report and console formatting utilities for mmforge
"""
import csv
import io
from typing import Any, Dict, List, Optional, Sequence

from ..config import COUNT_DECIMALS, IOU_DECIMALS, MIOU_DECIMALS, VQA_DECIMALS
from ..models.dataset import SampleManifest
from ..models.evaluation import EvalReport, SegmentationReport

FORMATS = ("markdown", "csv")


class ReportFormatter:
    """Utility class for formatting report values"""

    @staticmethod
    def format_number(value: float, decimals: int = 2) -> str:
        return f"{value:.{decimals}f}"

    @staticmethod
    def format_delta(value: float, decimals: int = 2) -> str:
        """Signed value; a delta that rounds to zero prints as +0.00"""
        text = f"{value:+.{decimals}f}"
        if text.startswith("-") and float(text) == 0:
            text = "+" + text[1:]
        return text

    @staticmethod
    def counting_table(report: EvalReport) -> List[List[str]]:
        rows = [["Dataset", "Model", "MAE", "MSE"]]
        for r in report.counting:
            rows.append([
                r.dataset, r.model,
                ReportFormatter.format_number(r.mae, COUNT_DECIMALS),
                ReportFormatter.format_number(r.mse, COUNT_DECIMALS),
            ])
        return rows

    @staticmethod
    def vqa_table(report: EvalReport) -> List[List[str]]:
        rows = [["Dataset", "Model", "Clip-Score", "WUP"]]
        for r in report.vqa:
            rows.append([
                r.dataset, r.model,
                ReportFormatter.format_number(r.embed_score, VQA_DECIMALS),
                ReportFormatter.format_number(r.wup, VQA_DECIMALS),
            ])
        return rows

    @staticmethod
    def segmentation_table(seg: SegmentationReport) -> List[List[str]]:
        rows = [["Class", seg.baseline_label, seg.ours_label, "Delta"]]
        for r in seg.rows:
            rows.append([
                r.name,
                ReportFormatter.format_number(r.baseline_iou, IOU_DECIMALS),
                ReportFormatter.format_number(r.ours_iou, IOU_DECIMALS),
                ReportFormatter.format_delta(r.delta, IOU_DECIMALS),
            ])
        return rows

    @staticmethod
    def miou_row(seg: SegmentationReport) -> List[str]:
        return [
            "mIoU",
            ReportFormatter.format_number(seg.miou_baseline, MIOU_DECIMALS),
            ReportFormatter.format_number(seg.miou_ours, MIOU_DECIMALS),
            ReportFormatter.format_delta(seg.miou_delta, MIOU_DECIMALS),
        ]

    @staticmethod
    def classification_line(seg: SegmentationReport) -> str:
        return f"Improved: {seg.improved}  Degraded: {seg.degraded}  Unchanged: {seg.unchanged}"


def _markdown_table(rows: Sequence[Sequence[str]], footer: Optional[Sequence[str]] = None) -> List[str]:
    header, body = rows[0], rows[1:]
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join(["---"] + ["---:"] * (len(header) - 1)) + "|",
    ]
    lines += ["| " + " | ".join(r) + " |" for r in body]
    if footer:
        lines.append("| " + " | ".join(f"**{c}**" for c in footer) + " |")
    return lines


def _render_markdown(report: EvalReport) -> str:
    sections: List[List[str]] = []
    if report.counting:
        sections.append(["## Counting", ""] + _markdown_table(ReportFormatter.counting_table(report)))
    if report.vqa:
        sections.append(["## Video VQA", ""] + _markdown_table(ReportFormatter.vqa_table(report)))
    seg = report.segmentation
    if seg is not None:
        sections.append(
            ["## Segmentation", ""]
            + _markdown_table(ReportFormatter.segmentation_table(seg), ReportFormatter.miou_row(seg))
            + ["", ReportFormatter.classification_line(seg)]
        )
    return "\n\n".join("\n".join(s) for s in sections) + ("\n" if sections else "")


def _render_csv(report: EvalReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    blocks: List[List[List[str]]] = []
    if report.counting:
        blocks.append(ReportFormatter.counting_table(report))
    if report.vqa:
        blocks.append(ReportFormatter.vqa_table(report))
    seg = report.segmentation
    if seg is not None:
        blocks.append(
            ReportFormatter.segmentation_table(seg)
            + [ReportFormatter.miou_row(seg)]
            + [["Improved", str(seg.improved)], ["Degraded", str(seg.degraded)], ["Unchanged", str(seg.unchanged)]]
        )
    for i, block in enumerate(blocks):
        if i:
            writer.writerow([])
        writer.writerows(block)
    return buffer.getvalue()


def render_report(report: EvalReport, fmt: str = "markdown") -> str:
    """Deterministic table text; empty sections are left out"""
    report.validate()
    if fmt == "markdown":
        return _render_markdown(report)
    if fmt == "csv":
        return _render_csv(report)
    raise ValueError(f"unknown report format '{fmt}', expected one of {FORMATS}")


def format_sample(sample: SampleManifest, tracks: Optional[Dict[str, Any]] = None) -> str:
    """Human-readable view of one generated sample"""
    lines = [
        f"Sample {sample.image_id}",
        f"  source:   {sample.image_ref}",
        f"  caption:  {sample.caption.text}",
        f"  counts:   total {sample.count_label.total}"
        + "".join(f", {name} {n}" for name, n in sorted(sample.count_label.per_category.items())),
        "  vqa:",
    ]
    lines += [f"    Q: {p.question}\n    A: {p.answer}" for p in sample.vqa.pairs]
    lines.append("  counting qa:")
    lines += [f"    Q: {p.question}\n    A: {p.answer}" for p in sample.counting_qa]
    lines.append(f"  video:    {len(sample.video)} frames" + (f" ({sample.video[0]} ...)" if sample.video else ""))
    lines.append(f"  audio:    {sample.audio_ref or 'none'}")
    lines.append(f"  tracks:   {len(sample.tracks)}")

    diagnostics = {}
    for entry in (tracks or {}).get("tracks", []):
        diagnostics[entry.get("object_id")] = entry.get("diagnostics") or {}
    for track in sample.tracks:
        line = f"    #{track.object_id} {track.category}: {track.num_frames} frames"
        diag = diagnostics.get(track.object_id)
        if diag:
            line += (
                f", max area change {diag.get('max_area_change_ratio', 0.0):.2f}"
                f", empty frames {diag.get('empty_frame_indices', [])}"
            )
        lines.append(line)
    return "\n".join(lines)
