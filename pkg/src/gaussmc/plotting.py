"""Figures written next to the benchmark and fit reports."""
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 120,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}


def plot_traces(traces, path, labels=None):
    """Log posterior per EM iteration, one line per trace."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for k, trace in enumerate(traces):
            it = [r.iteration for r in trace]
            lp = [r.log_posterior for r in trace]
            ax.plot(it, lp, marker="o", ms=3, label=labels[k] if labels else None)
        ax.set_xlabel("iteration")
        ax.set_ylabel("log posterior (unnormalized)")
        if labels:
            ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_runs(report, path, baseline=None, title=None):
    """Per-run NMAE bars with the run average, and the baseline if given."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        x = np.arange(len(report.per_run_nmae))
        seeds = report.seeds or tuple(range(len(x)))
        ax.bar(x, report.per_run_nmae, width=0.6, color="C0", label="Gaussian MAP-EM")
        ax.axhline(report.nmae, color="C0", ls="--", lw=1, label=f"mean {report.nmae:.4f}")
        if baseline is not None:
            ax.axhline(baseline.nmae, color="C3", ls=":", lw=1.2,
                       label=f"mean fill {baseline.nmae:.4f}")
        ax.set_xticks(x, [f"seed {s}" for s in seeds])
        ax.set_ylabel("NMAE")
        lo = min(report.per_run_nmae + ((baseline.nmae,) if baseline else ()))
        ax.set_ylim(max(0.0, lo - 0.05), None)
        if title:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
