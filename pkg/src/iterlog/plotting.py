"""Deterministic SVG figures for cluster and diagnostic reports."""
from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {
    "svg.hashsalt": "iterlog",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _render(fig) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return buf.getvalue()


def membership_svg(report) -> str:
    """Membership fraction against j, with the target fraction as a guide line."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        js = sorted(report.membership_fraction)
        ax.plot(js, [report.membership_fraction[j] for j in js], "o-", color="k", lw=1)
        target = report.config.get("target_fraction", 0.9)
        ax.axhline(target, color="0.5", ls="--", lw=0.8)
        ax.set_xlabel("j")
        ax.set_ylabel("membership fraction")
        ax.set_ylim(-0.02, 1.02)
        ax.set_title(f"config {report.config_hash}", fontsize=8)
        fig.tight_layout()
        return _render(fig)


def slope_svg(report) -> str:
    """Log estimates with error bars and the fitted line per moment order."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        x = np.asarray(report.x, float)
        logx = report.kind == "holder"
        xs = np.log(x) if logx else x
        for key, est in report.estimates.items():
            est = np.asarray(est, float)
            se = np.asarray(report.stderr[key], float)
            if np.any(est <= 0):
                continue
            y = np.log(est)
            ax.errorbar(xs, y, yerr=se / est, fmt="o", ms=3, capsize=2, label=f"p={key}" if not logx else "n=4")
            b = np.mean(y - report.slope[key] * xs)
            ax.plot(xs, b + report.slope[key] * xs, lw=0.8)
        ax.set_xlabel("log lag" if logx else "log(1/eps)")
        ax.set_ylabel("log moment")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _render(fig)
