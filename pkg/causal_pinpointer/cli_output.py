#!/usr/bin/env python3
"""
CLI Output Formatting - colored, readable terminal output

Provides formatted output with:
- Color-coded status messages
- Path matrix and table displays
- Rank-test ratio bars
- Discovery, enumeration and benchmark summaries
"""

import sys
from typing import Dict, List, Optional, Sequence

from .schemas import DiscoveryResultModel, MetricsSummaryModel


# ANSI Color Codes
class Colors:
    """ANSI color codes for terminal output"""
    RESET = "\033[0m"
    BOLD = "\033[1m"
    DIM = "\033[2m"

    RED = "\033[31m"
    GREEN = "\033[32m"
    YELLOW = "\033[33m"
    BLUE = "\033[34m"
    CYAN = "\033[36m"
    WHITE = "\033[37m"

    BRIGHT_GREEN = "\033[92m"
    BRIGHT_YELLOW = "\033[93m"
    BRIGHT_CYAN = "\033[96m"


class Symbols:
    """Unicode symbols for output"""
    CHECK = "✓"
    CROSS = "✗"
    WARNING = "⚠️"
    INFO = "ℹ️"
    ARROW = "→"
    BULLET = "•"
    CHART = "📊"
    SEARCH = "🔍"


class OutputFormatter:
    """Formats output for CLI display"""

    def __init__(self, use_colors: bool = True, use_emoji: bool = True):
        self.use_colors = use_colors and sys.stdout.isatty()
        self.use_emoji = use_emoji

    def color(self, text: str, color: str) -> str:
        """Apply color to text if colors enabled"""
        if not self.use_colors:
            return text
        return f"{color}{text}{Colors.RESET}"

    def bold(self, text: str) -> str:
        if not self.use_colors:
            return text
        return f"{Colors.BOLD}{text}{Colors.RESET}"

    def dim(self, text: str) -> str:
        if not self.use_colors:
            return text
        return f"{Colors.DIM}{text}{Colors.RESET}"

    def success(self, text: str) -> str:
        symbol = Symbols.CHECK if self.use_emoji else "[OK]"
        return self.color(f"{symbol} {text}", Colors.GREEN)

    def error(self, text: str) -> str:
        symbol = Symbols.CROSS if self.use_emoji else "[ERROR]"
        return self.color(f"{symbol} {text}", Colors.RED)

    def warning(self, text: str) -> str:
        symbol = Symbols.WARNING if self.use_emoji else "[WARN]"
        return self.color(f"{symbol} {text}", Colors.YELLOW)

    def info(self, text: str) -> str:
        symbol = Symbols.INFO if self.use_emoji else "[INFO]"
        return self.color(f"{symbol} {text}", Colors.CYAN)

    def section_header(self, text: str, width: int = 70) -> str:
        separator = "=" * width
        return f"\n{self.bold(separator)}\n{self.bold(text)}\n{self.bold(separator)}"

    def subsection_header(self, text: str) -> str:
        return f"\n{self.bold(text)}"

    def bullet_list(self, items: List[str], indent: int = 0) -> str:
        bullet = Symbols.BULLET if self.use_emoji else "-"
        indent_str = " " * indent
        return "\n".join(f"{indent_str}{bullet} {item}" for item in items)

    def table(
        self,
        headers: List[str],
        rows: List[List[str]],
        column_widths: Optional[List[int]] = None
    ) -> str:
        """Format a simple table"""
        if not rows:
            return ""

        if column_widths is None:
            column_widths = [
                max(len(str(header)), max(len(str(row[i])) for row in rows))
                for i, header in enumerate(headers)
            ]

        separator = "─" * (sum(column_widths) + len(headers) * 3 + 1)
        header_row = "│ " + " │ ".join(
            str(h).ljust(w) for h, w in zip(headers, column_widths)
        ) + " │"
        data_rows = [
            "│ " + " │ ".join(str(cell).ljust(w) for cell, w in zip(row, column_widths)) + " │"
            for row in rows
        ]
        return "\n".join([separator, self.bold(header_row), separator, *data_rows, separator])

    def matrix_display(self, values: Sequence[Sequence[float]], ell: int, precision: int = 3) -> str:
        """Path matrix with noise and latent column labels; zeros dimmed"""
        p = len(values)
        headers = [""] + [f"eps{v}" for v in range(p)] + [f"L{j}" for j in range(ell)]
        rows = []
        for i, row in enumerate(values):
            cells = []
            for value in row:
                text = f"{value:+.{precision}f}"
                cells.append(self.dim(text) if abs(value) < 10 ** -precision else text)
            rows.append([f"X{i}"] + cells)
        width = max(len(h) for h in headers)
        return self.table(headers, rows, [max(width, precision + 3)] * len(headers))

    def ratio_bar(self, label: str, ratio: float, threshold: float, width: int = 20) -> str:
        """Rank-test ratio against its threshold; green when accepted"""
        filled = min(width, int(ratio / threshold * width / 2)) if threshold > 0 else width
        bar = "█" * filled + "░" * (width - filled)
        accepted = ratio <= threshold
        status = "rank drop" if accepted else "full rank"
        line = f"{label:14} {ratio:.2e}  {bar}  {status}"
        return self.color(line, Colors.GREEN if accepted else Colors.YELLOW)

    def discovery_summary(self, result: DiscoveryResultModel, rank_tests: Optional[Sequence[dict]] = None) -> str:
        arrow = f" {Symbols.ARROW} " if self.use_emoji else " -> "
        lines = [
            self.section_header("Causal Discovery Result"),
            f"Causal order: {self.bold(arrow.join(f'X{v}' for v in result.order))}",
            f"Latent variables: {result.ell_hat}",
            f"Compatible path matrices: {len(result.candidates)} ({sum(result.candidate_sparse)} keep the support)",
            self.subsection_header("Estimated path matrix"),
            self.matrix_display(result.B_hat, result.ell_hat),
        ]
        if result.per_iteration:
            lines.append(self.subsection_header("Iterations"))
            items = []
            for report in result.per_iteration:
                ells = ", ".join(f"X{w}:{ell}" for w, ell in report.pair_ells.items())
                items.append(f"{report.iteration}. source X{report.source} (confounders {ells or '-'}, "
                             f"{len(report.groups)} latent(s))")
            lines.append(self.bullet_list(items, indent=2))
        if rank_tests:
            lines.append(self.subsection_header("Rank tests"))
            for test in rank_tests:
                label = f"X{test['v']}->X{test['w']} l={test['ell']}"
                lines.append(self.ratio_bar(label, test["ratio"], test["threshold"]))
        if result.flags:
            lines.append(self.warning(f"Flags: {', '.join(result.flags)}"))
        return "\n".join(lines)

    def enumeration_summary(self, counts: Dict[str, int], exog: Dict[int, List[int]],
                            siblings: Dict[int, List[int]]) -> str:
        rows = [[f"X{v}", ", ".join(f"L{j}" for j in exog[v]) or "-",
                 ", ".join(f"X{w}" for w in siblings[v]) or "-"] for v in sorted(exog)]
        return "\n".join([
            self.section_header("Compatible Path Matrices"),
            f"n_G = {self.bold(str(counts['n_G']))}",
            f"n_G,sparse = {self.bold(str(counts['n_G_sparse']))}",
            "",
            self.table(["Node", "Exchangeable latents", "Siblings"], rows),
        ])

    def bench_summary(self, summary: MetricsSummaryModel) -> str:
        def fmt(value):
            return "n/a" if value is None else f"{value:.4f}"

        chart = f"{Symbols.CHART} " if self.use_emoji else ""
        lines = [
            self.section_header(f"{chart}Benchmark: setting {summary.setting}, {summary.noise}, n={summary.n}"),
            f"Successful replications: {summary.successes}/{summary.reps}",
            "",
            self.table(["Metric", "Median", "Mean"], [
                ["RMSE", fmt(summary.rmse_median), fmt(summary.rmse_mean)],
                ["Precision", fmt(summary.precision_median), fmt(summary.precision_mean)],
                ["Recall", fmt(summary.recall_median), fmt(summary.recall_mean)],
            ]),
        ]
        for status, count in sorted(summary.failure_counts.items()):
            lines.append(self.warning(f"{status}: {count}"))
        return "\n".join(lines)


# Global formatter instance
_formatter: Optional[OutputFormatter] = None


def get_formatter(use_colors: bool = True, use_emoji: bool = True) -> OutputFormatter:
    """Get or create global formatter instance"""
    global _formatter
    if _formatter is None:
        _formatter = OutputFormatter(use_colors, use_emoji)
    return _formatter


def print_success(message: str):
    print(get_formatter().success(message), file=sys.stderr)


def print_error(message: str):
    print(get_formatter().error(message), file=sys.stderr)


def print_warning(message: str):
    print(get_formatter().warning(message), file=sys.stderr)


def print_info(message: str):
    print(get_formatter().info(message), file=sys.stderr)
