"""The standard figure set.

Every renderer consumes the already-aggregated statistics and only draws; the
returned payload contains exactly the series that were plotted, which the
tests compare against golden data.
"""

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import EmptySelectionError, available_fields, read_stats, select_field

ESTIMATE_FIELDS = ("l2_sq", "grad_l2_sq", "grad_sq_l2_sq")


@dataclass
class FigureSpec:
    input: str
    kind: str
    out: str
    # field plotted by the convergence kind; the others have fixed field sets
    conv_field: str = "l2_sq"
    dpi: int = 120
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; choose from {sorted(KINDS)}")


def _series_payload(groups):
    return {
        label: {"t": g["t"].tolist(), "mean": g["mean"].tolist(), "stderr": g["stderr"].tolist()}
        for label, g in groups.items()
    }


def _errorband(ax, groups, prefix=""):
    for label, g in groups.items():
        line, = ax.plot(g["t"], g["mean"], label=f"{prefix}{label}")
        ax.fill_between(
            g["t"], g["mean"] - g["stderr"], g["mean"] + g["stderr"],
            alpha=0.25, color=line.get_color(),
        )


def _render_estimates(rows, spec):
    fig, axes = plt.subplots(1, len(ESTIMATE_FIELDS), figsize=(12, 3.5), sharex=True)
    payload = {}
    for ax, name in zip(axes, ESTIMATE_FIELDS):
        groups = select_field(rows, name)
        _errorband(ax, groups, prefix="species ")
        ax.set_title(name)
        ax.set_xlabel("t")
        ax.legend(fontsize=8)
        payload[name] = _series_payload(groups)
    axes[0].set_ylabel("ensemble mean")
    return fig, payload


def _render_entropy(rows, spec):
    entropy = select_field(rows, "entropy")["all"]
    fig, ax = plt.subplots(figsize=(6, 4))
    _errorband(ax, {"entropy": entropy})
    payload = {"entropy": _series_payload({"all": entropy})}
    # noise-input budget: initial entropy plus half the time-integral of the
    # plotted Hilbert-Schmidt trace (trapezoid on the displayed series)
    try:
        hs = select_field(rows, "hs_noise")["all"]
    except EmptySelectionError:
        hs = None
    if hs is not None and len(hs["t"]) > 1:
        budget = entropy["mean"][0] + 0.5 * np.concatenate(
            [[0.0], np.cumsum(0.5 * (hs["mean"][1:] + hs["mean"][:-1]) * np.diff(hs["t"]))]
        )
        ax.plot(hs["t"], budget, "--", label="H(0) + noise input")
        payload["budget"] = {"t": hs["t"].tolist(), "mean": budget.tolist()}
    ax.set_xlabel("t")
    ax.set_ylabel("entropy")
    ax.legend()
    return fig, payload


def _render_negativity(rows, spec):
    groups = select_field(rows, "neg_energy")
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, g in groups.items():
        positive = g["mean"] > 0
        if positive.any():
            ax.semilogy(g["t"][positive], g["mean"][positive], "o-", label=f"species {label}")
        else:
            ax.plot([], [], label=f"species {label} (identically 0)")
    ax.set_xlabel("t")
    ax.set_ylabel("negative-part energy")
    ax.legend()
    return fig, {"neg_energy": _series_payload(groups)}


def _fit_slope(x, y):
    """Least-squares slope with its standard error (0 for a two-point fit)."""
    if len(x) > 2:
        coeffs, cov = np.polyfit(x, y, 1, cov=True)
        return float(coeffs[0]), float(np.sqrt(cov[0, 0]))
    coeffs = np.polyfit(x, y, 1)
    return float(coeffs[0]), 0.0


def _render_convergence(rows, spec):
    groups = select_field(rows, spec.conv_field)
    fig, ax = plt.subplots(figsize=(6, 4))
    payload = {spec.conv_field: _series_payload(groups), "slopes": {}}
    for label, g in groups.items():
        keep = (g["t"] > 0) & (g["mean"] > 0)
        if keep.sum() < 2:
            raise EmptySelectionError(
                f"empty selection: field {spec.conv_field!r}, species {label!r} has "
                "fewer than two positive points for a log-log fit"
            )
        x, y = np.log(g["t"][keep]), np.log(g["mean"][keep])
        slope, stderr = _fit_slope(x, y)
        ax.loglog(g["t"][keep], g["mean"][keep], "o-", label=f"{label}: slope {slope:.3f} ± {stderr:.3f}")
        payload["slopes"][label] = {"slope": slope, "stderr": stderr}
    ax.set_xlabel("step / time")
    ax.set_ylabel(spec.conv_field)
    ax.legend()
    return fig, payload


KINDS = {
    "estimates": _render_estimates,
    "entropy": _render_entropy,
    "negativity": _render_negativity,
    "convergence": _render_convergence,
}


def render(spec: FigureSpec) -> dict:
    """Render one figure; returns the plotted series for golden comparison."""
    rows = read_stats(spec.input)
    fig, payload = KINDS[spec.kind](rows, spec)
    fig.suptitle(spec.kind)
    fig.tight_layout()
    fig.savefig(spec.out, dpi=spec.dpi)
    plt.close(fig)
    return {"kind": spec.kind, "fields_available": available_fields(rows), "data": payload}
