"""Per-state diagnostics and streaming ensemble statistics.

The record mirrors the quantities controlled by the a-priori energy
estimates: squared L2 norms, gradient energies (including the gradient of
the squared densities), the quadratic entropy, the Hilbert-Schmidt noise
norm, the negative-part energy and the mass.  Ensemble statistics are
accumulated with a parallel Welford merge so that any partition of the paths
yields the same result up to rounding.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams
from .noise import NoiseSpec, hs_norm_sq
from .spectral import GalerkinState, SpectralBasis, gradient, synthesize

__all__ = [
    "DiagnosticsRecord",
    "StepAudit",
    "MomentAccumulator",
    "EnsembleStats",
    "record",
    "record_arrays",
    "ito_residual",
    "stampacchia_f",
    "stampacchia_f_prime",
    "stampacchia_f_second",
    "stampacchia_psi",
    "stampacchia_F",
    "negativity_report",
    "export_csv",
    "read_stats_csv",
]

# Fixed CSV field order; entries marked scalar are reported with species "all".
TIME_FIELDS = (
    "l2_sq",
    "grad_l2_sq",
    "grad_sq_l2_sq",
    "entropy",
    "hs_noise",
    "neg_energy",
    "sq_l2",
    "mass",
)
SCALAR_FIELDS = frozenset({"entropy", "hs_noise"})

PATH_FIELDS = ("sup_l2", "sup_lp", "int_grad", "int_grad_sq", "int_cube")

_trapz = getattr(np, "trapezoid", None) or np.trapz


@dataclass
class DiagnosticsRecord:
    """Snapshot of the monitored norms at one time point.

    Per-species entries are arrays of length n; entropy and hs_noise are
    scalars.
    """

    t: float
    l2_sq: np.ndarray
    grad_l2_sq: np.ndarray
    grad_sq_l2_sq: np.ndarray
    entropy: float
    hs_noise: float
    neg_energy: np.ndarray
    sq_l2: np.ndarray
    mass: np.ndarray


@dataclass
class StepAudit:
    """Entropy-weighted inner products of one accepted step, evaluated at the
    pre-step state: the dissipation quadratic form, the projected noise
    quadratic-variation rate, and the realized martingale increment."""

    dissipation: float
    hs_projected: float
    martingale: float


def record_arrays(
    basis: SpectralBasis, p: ModelParams, spec: NoiseSpec | None, coeffs
) -> dict[str, np.ndarray]:
    """Vectorized diagnostics for coefficients of shape (..., n, N).

    Returns arrays with the same leading batch shape; per-species entries
    keep the species axis last.
    """
    c = np.asarray(coeffs, dtype=float)
    u = synthesize(basis, c)  # (..., n, *grid)
    grad = gradient(basis, c)  # (..., n, d, *grid)
    w = basis.quad_weight
    gridaxes = tuple(range(-basis.dim, 0))

    l2_sq = (c * c).sum(axis=-1)  # Parseval
    grad_l2_sq = (basis.eigenvalues * c * c).sum(axis=-1)
    usq_grad = 2.0 * np.expand_dims(u, -1 - basis.dim) * grad  # grad of u^2, (..., n, d, *grid)
    grad_sq_l2_sq = w * (usq_grad * usq_grad).sum(axis=(-1 - basis.dim,) + gridaxes)
    entropy = 0.5 * np.einsum("i,...i->...", p.pi, l2_sq)
    neg = np.minimum(u, 0.0)
    neg_energy = w * (neg * neg).sum(axis=gridaxes)
    sq_l2 = np.sqrt(w * (u**4).sum(axis=gridaxes))
    mass = w * u.sum(axis=gridaxes)
    if spec is not None and spec.scale > 0:
        hs = hs_norm_sq(spec, basis, u)
        hs = np.asarray(hs, dtype=float)
    else:
        hs = np.zeros(c.shape[:-2])
    return {
        "l2_sq": l2_sq,
        "grad_l2_sq": grad_l2_sq,
        "grad_sq_l2_sq": grad_sq_l2_sq,
        "entropy": np.asarray(entropy, dtype=float),
        "hs_noise": hs,
        "neg_energy": neg_energy,
        "sq_l2": sq_l2,
        "mass": mass,
    }


def record(
    basis: SpectralBasis, p: ModelParams, spec: NoiseSpec | None, state: GalerkinState
) -> DiagnosticsRecord:
    """Diagnostics of a single state."""
    arrays = record_arrays(basis, p, spec, state.coeffs)
    return DiagnosticsRecord(
        t=state.time,
        l2_sq=arrays["l2_sq"],
        grad_l2_sq=arrays["grad_l2_sq"],
        grad_sq_l2_sq=arrays["grad_sq_l2_sq"],
        entropy=float(arrays["entropy"]),
        hs_noise=float(arrays["hs_noise"]),
        neg_energy=arrays["neg_energy"],
        sq_l2=arrays["sq_l2"],
        mass=arrays["mass"],
    )


def ito_residual(
    rec0: DiagnosticsRecord, rec1: DiagnosticsRecord, audit: StepAudit, dt: float
) -> float:
    """Defect of the discrete energy identity over one step.

    The entropy balance of the Galerkin system reads, in integral form,
    dH = -dissipation dt + (1/2) ||projected noise||_HS^2 dt + martingale;
    the returned residual is the per-step defect, O(dt^2) plus fluctuation.
    """
    return float(
        (rec1.entropy - rec0.entropy)
        + dt * audit.dissipation
        - 0.5 * dt * audit.hs_projected
        - audit.martingale
    )


# ---------------------------------------------------------------------------
# smooth negative-part truncation


def stampacchia_f(eps: float, z):
    """Smooth approximation of the negative part z^- = max(0, -z).

    Piecewise: -z for z <= -eps, a quintic joining branch on [-eps, 0],
    zero for z >= 0.  C^2 across both joins.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    z = np.asarray(z, dtype=float)
    t = z / eps
    poly = -(3.0 * t**4 + 8.0 * t**3 + 6.0 * t**2) * z
    out = np.where(z <= -eps, -z, np.where(z >= 0, 0.0, poly))
    return float(out) if out.ndim == 0 else out


def stampacchia_f_prime(eps: float, z):
    z = np.asarray(z, dtype=float)
    t = z / eps
    poly = -(15.0 * t**4 + 32.0 * t**3 + 18.0 * t**2)
    out = np.where(z <= -eps, -1.0, np.where(z >= 0, 0.0, poly))
    return float(out) if out.ndim == 0 else out


def stampacchia_f_second(eps: float, z):
    z = np.asarray(z, dtype=float)
    t = z / eps
    poly = -(60.0 * t**3 + 96.0 * t**2 + 36.0 * t) / eps
    out = np.where(z <= -eps, 0.0, np.where(z >= 0, 0.0, poly))
    return float(out) if out.ndim == 0 else out


def stampacchia_psi(eps: float, z):
    """psi = f f'' + (f')^2, the second-derivative weight of F(v) = int f(v)^2;
    bounded and supported on z < 0."""
    return stampacchia_f(eps, z) * stampacchia_f_second(eps, z) + stampacchia_f_prime(eps, z) ** 2


def stampacchia_F(eps: float, grid_field, weights) -> float:
    """Quadrature of f_eps(v)^2 over the domain."""
    v = np.asarray(grid_field, dtype=float)
    f = stampacchia_f(eps, v)
    return float((f * f * weights).sum())


# ---------------------------------------------------------------------------
# streaming ensemble statistics


@dataclass
class MomentAccumulator:
    """Streaming mean / variance / raw p-th moment with a parallel merge."""

    count: int
    mean: np.ndarray
    m2: np.ndarray
    p_mean: np.ndarray
    p: int

    @classmethod
    def empty(cls, shape, p: int) -> "MomentAccumulator":
        z = np.zeros(shape)
        return cls(0, z.copy(), z.copy(), z.copy(), p)

    @classmethod
    def from_samples(cls, x: np.ndarray, p: int) -> "MomentAccumulator":
        """Accumulate samples along the first axis."""
        x = np.asarray(x, dtype=float)
        count = x.shape[0]
        if count == 0:
            return cls.empty(x.shape[1:], p)
        mean = x.mean(axis=0)
        m2 = ((x - mean) ** 2).sum(axis=0)
        p_mean = (x**p).mean(axis=0)
        return cls(count, mean, m2, p_mean, p)

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if self.p != other.p:
            raise ValueError("cannot merge accumulators with different moment orders")
        if self.count == 0:
            return MomentAccumulator(other.count, other.mean.copy(), other.m2.copy(), other.p_mean.copy(), other.p)
        if other.count == 0:
            return MomentAccumulator(self.count, self.mean.copy(), self.m2.copy(), self.p_mean.copy(), self.p)
        na, nb = self.count, other.count
        n = na + nb
        delta = other.mean - self.mean
        mean = self.mean + delta * (nb / n)
        m2 = self.m2 + other.m2 + delta * delta * (na * nb / n)
        p_mean = (na * self.p_mean + nb * other.p_mean) / n
        return MomentAccumulator(n, mean, m2, p_mean, self.p)

    @property
    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.m2)
        return self.m2 / (self.count - 1)

    @property
    def stderr(self) -> np.ndarray:
        if self.count < 1:
            return np.zeros_like(self.m2)
        return np.sqrt(self.variance / self.count)


@dataclass
class EnsembleStats:
    """Monte Carlo statistics of an ensemble at the save-time grid plus the
    path-level sup/time-integral estimators of the energy bounds."""

    save_times: np.ndarray
    n_species: int
    p: int
    time_stats: dict[str, MomentAccumulator] = field(default_factory=dict)
    path_stats: dict[str, MomentAccumulator] = field(default_factory=dict)
    blown: int = 0
    total_paths: int = 0

    @classmethod
    def empty(cls, save_times, n_species: int, p: int) -> "EnsembleStats":
        save_times = np.asarray(save_times, dtype=float)
        S = len(save_times)
        time_stats = {
            name: MomentAccumulator.empty((S,) if name in SCALAR_FIELDS else (S, n_species), p)
            for name in TIME_FIELDS
        }
        path_stats = {name: MomentAccumulator.empty((), p) for name in PATH_FIELDS}
        return cls(save_times, n_species, p, time_stats, path_stats)

    @classmethod
    def from_block(
        cls, save_times, n_species: int, p: int, block: dict[str, np.ndarray], blown: int = 0
    ) -> "EnsembleStats":
        """Build statistics from per-path diagnostic arrays of a block.

        block maps each time field to an array (paths, S, ...) of completed
        paths only; path functionals are derived here.
        """
        stats = cls.empty(save_times, n_species, p)
        times = stats.save_times
        npaths = next(iter(block.values())).shape[0] if block else 0
        stats.blown = blown
        stats.total_paths = npaths + blown
        if npaths == 0:
            return stats
        for name in TIME_FIELDS:
            stats.time_stats[name] = MomentAccumulator.from_samples(block[name], p)
        l2_tot = block["l2_sq"].sum(axis=-1)  # (paths, S)
        grad_tot = block["grad_l2_sq"].sum(axis=-1)
        gradsq_tot = block["grad_sq_l2_sq"].sum(axis=-1)
        cube = (block["sq_l2"] ** 2).sum(axis=-1) ** 1.5
        paths = {
            "sup_l2": l2_tot.max(axis=1),
            "sup_lp": (l2_tot.max(axis=1)) ** (p / 2.0),
            "int_grad": _trapz(grad_tot, times, axis=1),
            "int_grad_sq": _trapz(gradsq_tot, times, axis=1),
            "int_cube": _trapz(cube, times, axis=1),
        }
        for name, samples in paths.items():
            stats.path_stats[name] = MomentAccumulator.from_samples(samples, p)
        return stats

    def merge(self, other: "EnsembleStats") -> "EnsembleStats":
        if len(self.save_times) != len(other.save_times) or not np.allclose(
            self.save_times, other.save_times
        ):
            raise ValueError("cannot merge statistics over different save grids")
        if set(self.time_stats) != set(other.time_stats) or set(self.path_stats) != set(
            other.path_stats
        ):
            raise ValueError("cannot merge statistics tracking different quantities")
        merged = EnsembleStats(self.save_times, self.n_species, self.p)
        merged.time_stats = {
            k: self.time_stats[k].merge(other.time_stats[k]) for k in self.time_stats
        }
        merged.path_stats = {
            k: self.path_stats[k].merge(other.path_stats[k]) for k in self.path_stats
        }
        merged.blown = self.blown + other.blown
        merged.total_paths = self.total_paths + other.total_paths
        return merged

    def summary(self) -> dict:
        out = {
            "paths": self.total_paths,
            "blown_up": self.blown,
            "p_moment": self.p,
            "estimators": {},
        }
        for name, acc in self.path_stats.items():
            out["estimators"][name] = {
                "mean": float(acc.mean),
                "stderr": float(acc.stderr),
                "p_moment": float(acc.p_mean),
            }
        return out


def negativity_report(stats: EnsembleStats) -> dict[str, np.ndarray]:
    """Per-time ensemble mean and standard error of the negative-part energy."""
    acc = stats.time_stats["neg_energy"]
    return {"t": stats.save_times, "mean": acc.mean, "stderr": acc.stderr}


def _fmt(x: float) -> str:
    return repr(float(x))


def export_csv(stats: EnsembleStats, path) -> None:
    """Write one row per (save_time, field, species).

    Columns, in order: t, species, field, mean, var, stderr, p_moment.
    Scalar fields (entropy, hs_noise) carry species "all".
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "species", "field", "mean", "var", "stderr", "p_moment"])
        if stats.total_paths - stats.blown == 0:
            return
        for s, t in enumerate(stats.save_times):
            for name in TIME_FIELDS:
                acc = stats.time_stats[name]
                if name in SCALAR_FIELDS:
                    writer.writerow(
                        [_fmt(t), "all", name, _fmt(acc.mean[s]), _fmt(acc.variance[s]),
                         _fmt(acc.stderr[s]), _fmt(acc.p_mean[s])]
                    )
                else:
                    for i in range(stats.n_species):
                        writer.writerow(
                            [_fmt(t), str(i), name, _fmt(acc.mean[s, i]), _fmt(acc.variance[s, i]),
                             _fmt(acc.stderr[s, i]), _fmt(acc.p_mean[s, i])]
                        )


def read_stats_csv(path) -> list[dict]:
    """Parse a stats CSV back into a list of row dicts with float values."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                {
                    "t": float(row["t"]),
                    "species": row["species"],
                    "field": row["field"],
                    "mean": float(row["mean"]),
                    "var": float(row["var"]),
                    "stderr": float(row["stderr"]),
                    "p_moment": float(row["p_moment"]),
                }
            )
    return rows
