#!/usr/bin/env python3
"""
Export System - write discovery results and benchmark reports

Supports exporting:
- Discovery / oracle results (JSON, Markdown)
- Per-replication benchmark rows (CSV) and their summary (JSON, Markdown)
- Cumulant sets and pair diagnostics (JSON)
"""

import csv
import io
import json
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel

from .schemas import DiscoveryResultModel, MetricsSummaryModel

BENCH_COLUMNS = ["setting", "noise", "n", "rep", "rmse", "precision", "recall", "status"]


class Exporter:
    """Export results to various formats"""

    def __init__(self, export_dir: str = "./causal_reports"):
        self.export_dir = Path(export_dir)

    def _target(self, filename: str, suffix: str, path: Optional[Union[str, Path]]) -> Path:
        if path is not None:
            output_path = Path(path)
        else:
            output_path = self.export_dir / f"{filename}.{suffix}"
        output_path.parent.mkdir(parents=True, exist_ok=True)
        return output_path

    def write_json(self, model: BaseModel, path: Union[str, Path]) -> Path:
        """Write any schema model as indented JSON"""
        output_path = self._target("", "json", path)
        with open(output_path, "w", encoding="utf-8") as f:
            f.write(model.model_dump_json(indent=2, by_alias=True))
        return output_path

    def export_discovery_result(self, result: DiscoveryResultModel, format: str = "json",
                                path: Optional[Union[str, Path]] = None) -> Path:
        """
        Export a discovery result

        Args:
            result: Serialized discovery result
            format: Export format (json, markdown)
            path: Explicit output path; defaults to a timestamped file in export_dir

        Returns:
            Path to exported file
        """
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        filename = f"discovery_{timestamp}"
        if format == "json":
            return self.write_json(result, self._target(filename, "json", path))
        elif format == "markdown":
            output_path = self._target(filename, "md", path)
            with open(output_path, "w", encoding="utf-8") as f:
                f.write(self._generate_discovery_markdown(result))
            return output_path
        else:
            raise ValueError(f"Unsupported format: {format}")

    def export_bench(self, rows: List[Dict], summary: MetricsSummaryModel, format: str = "csv",
                     path: Optional[Union[str, Path]] = None) -> Path:
        """Per-replication rows as CSV, or the summary as JSON / Markdown"""
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        filename = f"bench_{summary.setting}_{summary.noise}_{summary.n}_{timestamp}"
        if format == "csv":
            return self.write_bench_csv(rows, self._target(filename, "csv", path))
        elif format == "json":
            return self.write_json(summary, self._target(filename, "json", path))
        elif format == "markdown":
            output_path = self._target(filename, "md", path)
            with open(output_path, "w", encoding="utf-8") as f:
                f.write(self._generate_bench_markdown(summary))
            return output_path
        else:
            raise ValueError(f"Unsupported format: {format}")

    def write_bench_csv(self, rows: List[Dict], path: Union[str, Path], header: bool = True) -> Path:
        output_path = self._target("", "csv", path)
        with open(output_path, "w", encoding="utf-8", newline="") as f:
            f.write(self.format_bench_csv(rows, header))
        return output_path

    @staticmethod
    def format_bench_csv(rows: List[Dict], header: bool = True) -> str:
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=BENCH_COLUMNS, lineterminator="\n")
        if header:
            writer.writeheader()
        for row in rows:
            writer.writerow({key: "" if row.get(key) is None else row[key] for key in BENCH_COLUMNS})
        return buffer.getvalue()

    def write_records(self, records: List[Dict], path: Union[str, Path]) -> Path:
        """Plain JSON list, used for per-pair diagnostics"""
        output_path = self._target("", "json", path)
        with open(output_path, "w", encoding="utf-8") as f:
            json.dump(records, f, indent=2)
        return output_path

    def _generate_discovery_markdown(self, result: DiscoveryResultModel) -> str:
        lines = [
            "# Causal Discovery Result",
            "",
            f"**Generated:** {datetime.now().isoformat()}",
            "",
            f"- Causal order: {' -> '.join(f'X{v}' for v in result.order)}",
            f"- Latent variables: {result.ell_hat}",
            f"- Compatible path matrices: {len(result.candidates)} ({sum(result.candidate_sparse)} keep the support)",
            "",
            "## Estimated path matrix",
            "",
        ]
        p = len(result.B_hat)
        header = [f"eps{v}" for v in range(p)] + [f"L{j}" for j in range(result.ell_hat)]
        lines.append("| | " + " | ".join(header) + " |")
        lines.append("|---" * (len(header) + 1) + "|")
        for i, row in enumerate(result.B_hat):
            lines.append(f"| X{i} | " + " | ".join(f"{v:.3f}" for v in row) + " |")
        lines.append("")

        lines.append("## Iterations")
        lines.append("")
        for report in result.per_iteration:
            ells = ", ".join(f"X{w}: {ell}" for w, ell in report.pair_ells.items())
            lines.append(f"- Iteration {report.iteration}: source X{report.source}; confounders {ells or 'none'}; "
                         f"{len(report.groups)} latent(s)")
            for flag in report.flags:
                lines.append(f"  - {flag}")
        return "\n".join(lines) + "\n"

    def _generate_bench_markdown(self, summary: MetricsSummaryModel) -> str:
        def fmt(value):
            return "n/a" if value is None else f"{value:.4f}"

        lines = [
            f"# Benchmark: setting {summary.setting}, {summary.noise} noise, n={summary.n}",
            "",
            f"**Generated:** {datetime.now().isoformat()}",
            "",
            f"Successful replications: {summary.successes}/{summary.reps}",
            "",
            "| Metric | Median | Mean |",
            "|---|---|---|",
            f"| RMSE | {fmt(summary.rmse_median)} | {fmt(summary.rmse_mean)} |",
            f"| Precision | {fmt(summary.precision_median)} | {fmt(summary.precision_mean)} |",
            f"| Recall | {fmt(summary.recall_median)} | {fmt(summary.recall_mean)} |",
            "",
        ]
        if summary.failure_counts:
            lines.append("## Failures")
            lines.append("")
            for status, count in sorted(summary.failure_counts.items()):
                lines.append(f"- {status}: {count}")
        return "\n".join(lines) + "\n"
