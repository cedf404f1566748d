"""Canned numerical studies shared by the command line and the test suite.

Each study returns a JSON-serializable dict with the quantities of interest
(errors, slopes, ratios, standard errors) so callers can either assert on
them or dump them to summary files.
"""
from __future__ import annotations

import numpy as np

from .diagnostics import negativity_report
from .integrator import SimConfig, _block_increments, run_ensemble, run_path
from .model import ModelParams, check_conditions
from .noise import NoiseSpec
from .spectral import SpectralBasis, project
from .diagnostics import ito_residual

__all__ = [
    "STUDIES",
    "heat_regression",
    "scalar_moment",
    "weak_order",
    "benchmark_estimates",
    "negativity_decay",
    "energy_residual",
    "run_study",
]


def heat_regression(dt: float = 1e-3, t_end: float = 1.0, modes: int = 16) -> dict:
    """Zero-noise linear-mode regression against the decaying cosine solution.

    With the nonlinear couplings switched off, the first mode obeys
    c'(t) = -a_10 c(t), so u(x, t) = e^{-t} cos x for unit diffusion.  Returns
    the relative terminal error of the default scheme and the explicit-scheme
    error ratios under step halving (expected ~2: first-order bias).
    """
    p = ModelParams(n=1, a0=[1.0], a=[[1.0]])
    basis = SpectralBasis(dim=1, lengths=(np.pi,), modes_per_axis=modes)
    x = basis.grid(0)
    u0 = project(basis, np.cos(x))[None, :]
    exact = np.exp(-t_end) * np.cos(x)

    def terminal_error(scheme: str, step: float) -> float:
        cfg = SimConfig(
            dt=step, t_end=t_end, initial=u0, scheme=scheme, linear_mode=True, max_snapshots=2
        )
        result = run_path(basis, p, None, cfg)
        from .spectral import synthesize

        u = synthesize(basis, result.states[-1].coeffs)[0]
        return float(np.linalg.norm(u - exact) / np.linalg.norm(exact))

    rel_error = terminal_error("semi-implicit-diffusion", dt)
    explicit_dts = [2e-3, 1e-3, 5e-4]
    explicit_errors = [terminal_error("euler-maruyama", s) for s in explicit_dts]
    ratios = [explicit_errors[i] / explicit_errors[i + 1] for i in range(len(explicit_errors) - 1)]
    return {
        "rel_error": rel_error,
        "explicit_dts": explicit_dts,
        "explicit_errors": explicit_errors,
        "halving_ratios": ratios,
    }


def _scalar_setup(scale: float, seed: int):
    # Single constant mode on a unit interval: every eigenvalue is zero, so
    # linear mode has no drift and the coefficient performs a discrete
    # geometric Brownian motion with volatility ``scale``.
    p = ModelParams(n=1, a0=[1.0], a=[[1.0]])
    basis = SpectralBasis(dim=1, lengths=(1.0,), modes_per_axis=1)
    spec = NoiseSpec(
        family="diagonal-multiplicative", rank=1, q=[1.0], scale=scale, master_seed=seed
    )
    return p, basis, spec


def scalar_moment(
    paths: int = 100_000,
    dt: float = 2.0**-9,
    t_end: float = 1.0,
    scale: float = 0.5,
    seed: int = 2024,
    workers: int = 1,
) -> dict:
    """Second moment of the driftless multiplicative test equation.

    du = scale * u dW has E[u(t)^2] = exp(scale^2 t); the estimate at t_end
    should sit within sampling error of the closed form.
    """
    p, basis, spec = _scalar_setup(scale, seed)
    cfg = SimConfig(
        dt=dt,
        t_end=t_end,
        initial=np.ones((1, 1)),
        scheme="euler-maruyama",
        linear_mode=True,
        paths=paths,
        max_snapshots=2,
    )
    stats = run_ensemble(basis, p, spec, cfg, workers=workers)
    acc = stats.time_stats["l2_sq"]
    mean = float(acc.mean[-1, 0])
    se = float(acc.stderr[-1, 0])
    target = float(np.exp(scale**2 * t_end))
    return {"mean": mean, "stderr": se, "target": target, "z": (mean - target) / se}


def weak_order(
    paths: int = 200_000,
    levels: tuple[int, ...] = (6, 7, 8, 9, 10),
    t_end: float = 1.0,
    scale: float = 0.5,
    seed: int = 2024,
) -> dict:
    """Weak-order slope of the explicit scheme on the scalar test equation.

    The second-moment bias of the one-mode explicit chain is known exactly,
    (1 + scale^2 dt)^{T/dt} - e^{scale^2 T} = O(dt), but it is orders of
    magnitude below the plain Monte Carlo error.  The estimator couples each
    discrete path with the exact geometric Brownian motion driven by the same
    increments (whose second moment is known) and averages antithetic pairs,
    which leaves only the fluctuation of the pathwise difference.
    """
    c = scale
    _, _, spec = _scalar_setup(scale, seed)
    rows = []
    xs, ys = [], []
    for lev in levels:
        dt = 2.0**-lev
        steps = int(round(t_end / dt))
        diffs = []
        for start in range(0, paths, 20_000):
            ids = np.arange(start, min(start + 20_000, paths))
            dW = _block_increments(spec, ids, 1, 0, steps, dt)[:, :, 0, 0]
            for sign in (1.0, -1.0):
                w = sign * dW
                u = np.prod(1.0 + c * w, axis=1)
                u_exact = np.exp(c * w.sum(axis=1) - 0.5 * c * c * t_end)
                diffs.append(u * u - u_exact * u_exact)
        d = np.concatenate(diffs)
        mean = float(d.mean())
        se = float(d.std(ddof=1) / np.sqrt(len(d)))
        predicted = float((1 + c * c * dt) ** steps - np.exp(c * c * t_end))
        rows.append({"dt": dt, "bias": mean, "stderr": se, "predicted": predicted})
        xs.append(np.log(dt))
        ys.append(np.log(abs(mean)))
    slope = float(np.polyfit(xs, ys, 1)[0])
    return {"levels": rows, "slope": slope}


def benchmark_model() -> ModelParams:
    """Two-species coefficient set used by the benchmark ensembles."""
    return ModelParams(n=2, a0=[0.05, 0.08], a=[[0.05, 0.02], [0.02, 0.05]], pi=[1.0, 1.0])


def benchmark_run(modes: int = 16, paths: int = 1000, seed: int = 42, workers: int = 1):
    """Benchmark ensemble: mild two-species coupling, smooth data, weak noise."""
    p = benchmark_model()
    report = check_conditions(p)
    basis = SpectralBasis(dim=1, lengths=(np.pi,), modes_per_axis=modes)
    x = basis.grid(0)
    u0 = np.stack(
        [project(basis, 1.0 + 0.3 * np.cos(x)), project(basis, 1.0 + 0.2 * np.cos(2 * x))]
    )
    spec = NoiseSpec(
        family="diagonal-multiplicative",
        rank=4,
        q=[1.0, 0.5, 1.0 / 3.0, 0.25],
        scale=0.3,
        master_seed=seed,
    )
    cfg = SimConfig(
        dt=1e-3,
        t_end=0.5,
        initial=u0,
        scheme="semi-implicit-diffusion",
        paths=paths,
        max_snapshots=11,
    )
    return run_ensemble(basis, p, spec, cfg, report=report, workers=workers)


def benchmark_estimates(paths: int = 1000, seed: int = 42, workers: int = 1) -> dict:
    """A-priori estimate stability: headline estimators at two resolutions.

    The retained-mode count doubles at fixed dt; since paths are keyed by
    counter the driving noise is identical, and the estimators should move
    only by the (tiny) energy in the added modes.  Mass is a martingale, so
    its mean stays within sampling error of the initial value.
    """
    out = {}
    for modes in (16, 32):
        stats = benchmark_run(modes=modes, paths=paths, seed=seed, workers=workers)
        ests = {
            k: float(stats.path_stats[k].mean.sum()) for k in ("sup_l2", "int_grad", "int_grad_sq")
        }
        mass = stats.time_stats["mass"]
        ests["mass_drift"] = (mass.mean[-1] - mass.mean[0]).tolist()
        ests["mass_3se"] = (3 * mass.stderr[-1]).tolist()
        ests["blown"] = stats.blown
        out[f"modes_{modes}"] = ests
    coarse, fine = out["modes_16"], out["modes_32"]
    out["rel_changes"] = {
        k: abs(fine[k] - coarse[k]) / abs(coarse[k]) for k in ("sup_l2", "int_grad", "int_grad_sq")
    }
    return out


def negativity_decay(
    dts: tuple[float, ...] = (8e-4, 4e-4, 2e-4, 1e-4),
    paths: int = 4000,
    seed: int = 11,
    workers: int = 1,
) -> dict:
    """Sign-violation decay of the truncated system under halving steps.

    The noise vanishes with each species, so the exact flow cannot cross
    zero; discrete crossings need a single Gaussian factor below -1, whose
    probability collapses faster than any power of dt.  The noise is strong
    enough that the coarsest steps produce measurable crossings while the
    finest produce essentially none.  Reported per dt: the negativity curve
    at the first common save time (for the decay ratios) and the terminal
    negative-energy fraction per species (for the absolute bound).
    """
    p = ModelParams(n=2, a0=[0.1, 0.1], a=[[1e-5, 5e-6], [5e-6, 1e-5]], pi=[1.0, 1.0])
    report = check_conditions(p)
    basis = SpectralBasis(dim=1, lengths=(np.pi,), modes_per_axis=16)
    x = basis.grid(0)
    u0 = np.stack([project(basis, 1.0 + np.cos(x)), project(basis, 1.0 + np.cos(2 * x))])
    spec = NoiseSpec(
        family="diagonal-multiplicative",
        rank=4,
        q=[1.0, 0.5, 1.0 / 3.0, 0.25],
        scale=30.0,
        master_seed=seed,
    )
    rows = []
    for dt in dts:
        cfg = SimConfig(
            dt=dt,
            t_end=0.0032,
            initial=u0,
            truncated_drift=True,
            scheme="semi-implicit-diffusion",
            paths=paths,
            max_snapshots=5,
            clip_negative=False,
        )
        stats = run_ensemble(basis, p, spec, cfg, report=report, workers=workers)
        curve = negativity_report(stats)
        neg = stats.time_stats["neg_energy"]
        l2 = stats.time_stats["l2_sq"]
        rows.append(
            {
                "dt": dt,
                "save_times": stats.save_times.tolist(),
                "curve": curve["mean"].sum(axis=-1).tolist(),
                "early_neg": float(neg.mean[1].sum()),
                "terminal_fraction": (neg.mean[-1] / l2.mean[-1]).tolist(),
                "blown": stats.blown,
            }
        )
    ratios = []
    for coarse, fine in zip(rows, rows[1:]):
        a, b = coarse["early_neg"], fine["early_neg"]
        ratios.append(a / b if b > 0 else float("inf"))
    return {"levels": rows, "early_ratios": ratios}


def _residual_setup():
    p = ModelParams(n=2, a0=[0.5, 0.8], a=[[1.0, 0.3], [0.3, 1.2]], pi=[1.0, 1.0])
    basis = SpectralBasis(dim=1, lengths=(np.pi,), modes_per_axis=8)
    x = basis.grid(0)
    u0 = np.stack(
        [project(basis, 1.0 + 0.3 * np.cos(x)), project(basis, 1.0 + 0.2 * np.cos(2 * x))]
    )
    return p, basis, u0


def energy_residual(
    dts: tuple[float, ...] = (4e-3, 2e-3, 1e-3, 5e-4),
    noise_dt: float = 5e-5,
    paths: int = 1000,
    seed: int = 7,
    workers: int = 1,
) -> dict:
    """Discrete energy-identity residual: deterministic order and noise balance.

    Without noise the residual is the pure one-step defect, O(dt^2), so its
    log-log slope against dt should be 2.  With noise the residual is a
    martingale increment plus the same defect; over a short horizon the
    ensemble mean of its time-sum should be statistically indistinguishable
    from zero.
    """
    p, basis, u0 = _residual_setup()
    report = check_conditions(p)
    means = []
    for dt in dts:
        cfg = SimConfig(
            dt=dt,
            t_end=0.2,
            initial=u0,
            scheme="semi-implicit-diffusion",
            audit_ito=True,
        )
        result = run_path(basis, p, None, cfg)
        res = [
            ito_residual(result.records[i], result.records[i + 1], result.audits[i], dt)
            for i in range(len(result.audits))
        ]
        means.append(float(np.mean(np.abs(res))))
    slope = float(np.polyfit(np.log(dts), np.log(means), 1)[0])

    spec = NoiseSpec(
        family="diagonal-multiplicative",
        rank=4,
        q=[1.0, 0.5, 1.0 / 3.0, 0.25],
        scale=0.6,
        master_seed=seed,
    )
    cfg = SimConfig(
        dt=noise_dt,
        t_end=0.05,
        initial=u0,
        scheme="semi-implicit-diffusion",
        audit_ito=True,
        paths=paths,
        max_snapshots=5,
    )
    stats = run_ensemble(basis, p, spec, cfg, report=report, workers=workers)
    acc = stats.path_stats["ito_sum"]
    mean = float(acc.mean)
    se = float(acc.stderr)
    return {
        "zero_noise": {"dts": list(dts), "mean_abs_residual": means, "slope": slope},
        "with_noise": {"dt": noise_dt, "mean": mean, "stderr": se, "z": mean / se},
    }


STUDIES = {
    "heat": heat_regression,
    "moment": scalar_moment,
    "weak-order": weak_order,
    "estimates": benchmark_estimates,
    "negativity": negativity_decay,
    "residual": energy_residual,
}


def run_study(name: str, **kwargs) -> dict:
    if name not in STUDIES:
        raise KeyError(f"unknown study {name!r}; available: {', '.join(sorted(STUDIES))}")
    return STUDIES[name](**kwargs)
