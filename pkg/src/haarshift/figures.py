"""Figures for sweep reports, one PNG per experiment.

Rendering is headless (Agg) and deliberately plain: estimates with error
bars against their reference or budget, on the axes natural to each
experiment.  Figures are a reading aid; the CSV rows are the record.
"""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .verify import SweepReport


def _numeric(rows, key):
    return [float(r[key]) for r in rows]


def render_figure(report: SweepReport, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=120)
    rows = report.rows
    exp = report.experiment
    if exp in ("lemma", "ek"):
        xs = _numeric(rows, "parameter")
        ax.errorbar(
            xs,
            _numeric(rows, "estimate"),
            yerr=[3 * s for s in _numeric(rows, "stderr")],
            fmt="o",
            label="estimate (3 s.e.)",
        )
        ax.plot(xs, _numeric(rows, "exact_or_bound"), "k--", label="exact")
        if exp == "ek":
            ax.plot(xs, _numeric(rows, "decay_bound"), "r:", label="fitted bound")
            ax.set_yscale("log")
            ax.set_xlabel("k")
        else:
            ax.set_xlabel("tau")
        ax.set_ylabel("probability")
    elif exp == "size":
        xs = _numeric(rows, "parameter")
        ax.loglog(xs, _numeric(rows, "mean_abs"), "o", label="mean |K|")
        ax.loglog(
            xs, [abs(v) for v in _numeric(rows, "estimate")], "x", label="|mean|"
        )
        ax.loglog(xs, _numeric(rows, "exact_or_bound"), "k--", label="budget")
        ax.set_xlabel("separation r")
        ax.set_ylabel("averaged kernel")
        slope = report.summary.get("fitted_exponent")
        if slope is not None and not math.isnan(slope):
            ax.set_title(f"fitted exponent {slope:.3f}")
    elif exp == "holder":
        xs = _numeric(rows, "parameter")
        ax.loglog(xs, _numeric(rows, "estimate"), "o", label="mean |increment|")
        ax.loglog(xs, _numeric(rows, "exact_or_bound"), "k--", label="envelope")
        ax.set_xlabel("|x - x'|")
        ax.set_ylabel("averaged increment")
        slope = report.summary.get("slope")
        if slope is not None and not math.isnan(slope):
            ax.set_title(
                f"slope {slope:.3f} (target >= {report.summary['slope_target']:.3f})"
            )
    elif exp == "single-shift":
        xs = _numeric(rows, "parameter")
        ax.loglog(xs, _numeric(rows, "smoothness_ratio"), "o-", label="ratio R")
        ax.set_xlabel("|x - x'|")
        ax.set_ylabel("smoothness ratio")
        ax.set_title("fixed-grid shift: R grows as the increment shrinks")
    elif exp == "norm":
        xs = range(len(rows))
        ax.plot(xs, _numeric(rows, "estimate"), "o", label="estimated norm")
        ax.axhline(1.0, color="k", linestyle="--", label="bound")
        ax.set_xlabel("case")
        ax.set_ylabel("operator norm")
    elif exp == "vanishing":
        xs = _numeric(rows, "parameter")
        ax.bar(xs, _numeric(rows, "estimate"), width=0.6, label="pass fraction")
        ax.axhline(1.0, color="k", linestyle="--")
        ax.set_xlabel("complexity m")
        ax.set_ylim(0.0, 1.05)
    else:  # fubini and anything new: estimate against reference
        ax.plot(
            _numeric(rows, "exact_or_bound"),
            _numeric(rows, "estimate"),
            "o",
            label="instances",
        )
        lims = ax.get_xlim()
        ax.plot(lims, lims, "k--", linewidth=0.8)
        ax.set_xlabel("reference")
        ax.set_ylabel("estimate")
    verdict = "PASS" if report.passed else "FAIL"
    ax.legend(loc="best", fontsize=8)
    fig.suptitle(f"{report.experiment} (seed {report.seed}): {verdict}")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
