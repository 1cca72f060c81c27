# plots.py
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from harness import PhaseTable  # noqa: E402
from theory import ProblemDims, threshold_report  # noqa: E402

# fixed salt + no Date metadata => identical bytes on rerun
_SVG_RC = {"svg.hashsalt": "ulab-phase", "svg.fonttype": "path"}


def plot_phase_curve(table: PhaseTable, n: int, r: int, methods: list[str], path: str) -> None:
    """Success rate vs m, one line per method, with dashed rules at the theory thresholds."""
    report = threshold_report(ProblemDims(n, r))
    rules = [("weak", report.weak, "tab:green"), ("nuclear ref", report.nuclear_ref, "tab:purple")]
    if report.strong is not None:
        rules.append(("strong", report.strong, "tab:red"))

    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        for method in methods:
            curve = table.curve(n, r, method)
            if not curve:
                continue
            ms = [m for m, _ in curve]
            rates = [rate for _, rate in curve]
            ax.plot(ms, rates, marker="o", markersize=3, label=method)
        for label, value, color in rules:
            ax.axvline(value, linestyle="--", linewidth=1, color=color, label=f"{label} = {value}")

        ax.set_ylim(-0.05, 1.05)
        ax.set_xlabel("measurements m")
        ax.set_ylabel("success rate")
        ax.set_title(f"n = {n}, r = {r}")
        ax.legend(loc="lower right", fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
