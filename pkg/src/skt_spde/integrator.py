"""Time stepping of the Galerkin SDE system and Monte Carlo ensembles.

One explicit Euler-Maruyama step reads

    c' = c + dt * drift(c) + project(sigma(u) dW),

with a tamed variant dividing the drift by 1 + dt ||drift|| per species and a
semi-implicit variant that treats only the stiff linear part -a_i0 lambda_k
implicitly.  Paths are independent units of work: each owns its counter-based
increment stream, blocks of paths are stepped vectorized, and ensemble
statistics merge associatively so any partition of the path range produces
identical results.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import diagnostics as diag
from .diagnostics import EnsembleStats, MomentAccumulator, StepAudit
from .model import ConditionReport, ModelParams
from .noise import (
    NoiseSpec,
    WienerIncrement,
    _advance_to_step,
    _philox,
    _raw_to_normal,
    _words_per_step,
    apply_sigma,
    hs_norm_sq_projected,
)
from .spectral import GalerkinState, SpectralBasis, drift_apply, project, synthesize

__all__ = [
    "SimConfig",
    "PathResult",
    "BlowUpError",
    "BlowUpBudgetExceeded",
    "em_step",
    "run_path",
    "run_ensemble",
]

BLOWUP_THRESHOLD = 1e12

SCHEMES = ("euler-maruyama", "tamed-euler-maruyama", "semi-implicit-diffusion")


class BlowUpError(RuntimeError):
    """A single trajectory left the finite range."""


class BlowUpBudgetExceeded(RuntimeError):
    """More than the tolerated fraction of ensemble paths blew up."""

    def __init__(self, blown: int, total: int, stats: EnsembleStats | None = None):
        super().__init__(f"{blown} of {total} paths blew up (budget 1%)")
        self.blown = blown
        self.total = total
        self.stats = stats


@dataclass(frozen=True)
class SimConfig:
    """Time grid, scheme and ensemble parameters of one simulation."""

    dt: float
    t_end: float
    initial: np.ndarray  # (n, N) spectral coefficients of the projected datum
    scheme: str = "semi-implicit-diffusion"
    truncated_drift: bool = False
    linear_mode: bool = False
    paths: int = 1
    clip_negative: bool = False
    max_snapshots: int = 200
    p_moment: int = 4
    audit_ito: bool = False
    block_size: int = 0  # 0: choose from problem size

    def __post_init__(self):
        if self.dt <= 0 or self.t_end <= 0 or self.dt > self.t_end + 1e-15:
            raise ValueError("need 0 < dt <= t_end")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.paths < 1:
            raise ValueError("need at least one path")
        object.__setattr__(self, "initial", np.asarray(self.initial, dtype=float))

    @property
    def n_steps(self) -> int:
        n = int(round(self.t_end / self.dt))
        if abs(n * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            n = math.ceil(self.t_end / self.dt - 1e-12)
        return max(n, 1)

    def save_steps(self) -> np.ndarray:
        n = self.n_steps
        stride = max(1, math.ceil(n / max(1, self.max_snapshots - 1)))
        idx = list(range(0, n + 1, stride))
        if idx[-1] != n:
            idx.append(n)
        return np.asarray(idx, dtype=int)


@dataclass
class PathResult:
    """Trajectory snapshots and diagnostics of one path."""

    path_id: int
    states: list[GalerkinState]
    records: list[diag.DiagnosticsRecord]
    exit_status: str  # "completed" or "blown_up"
    audits: list[StepAudit] = field(default_factory=list)


def _block_increments(
    spec: NoiseSpec, path_ids: np.ndarray, n_species: int, start: int, count: int, dt: float
) -> np.ndarray:
    """Increments for a block of paths and a chunk of steps, (B, count, n, K)."""
    m = n_species * spec.rank
    words = _words_per_step(n_species, spec.rank)
    raws = np.empty((len(path_ids), count * words), dtype=np.uint64)
    for row, pid in enumerate(path_ids):
        bg = _philox(spec, int(pid))
        _advance_to_step(bg, start, words)
        raws[row] = bg.random_raw(count * words)
    z = _raw_to_normal(raws.reshape(len(path_ids), count, words)[..., :m])
    return math.sqrt(dt) * z.reshape(len(path_ids), count, n_species, spec.rank)


def _step_block(
    basis: SpectralBasis,
    p: ModelParams,
    spec: NoiseSpec | None,
    cfg: SimConfig,
    coeffs: np.ndarray,
    dW: np.ndarray | None,
    collect_audit: bool = False,
):
    """Advance a block of states (B, n, N) by one step.

    Returns (new_coeffs, audit) where audit holds per-path dissipation,
    projected HS rate and martingale increment, all at the pre-step state.
    """
    dt = cfg.dt
    noisy = spec is not None and spec.scale > 0 and dW is not None
    need_fields = collect_audit or noisy or cfg.clip_negative
    if cfg.linear_mode:
        drift = drift_apply(basis, p, coeffs, linear=True)
        fields = None
    else:
        out = drift_apply(
            basis, p, coeffs, truncated=cfg.truncated_drift, return_fields=need_fields
        )
        drift, fields = out if need_fields else (out, None)

    if need_fields:
        ugrid = fields["u"] if fields is not None else synthesize(basis, coeffs)

    if noisy:
        noise_fields = apply_sigma(spec, basis, ugrid, dW)
        noise_coeffs = project(basis, noise_fields)
    else:
        noise_coeffs = 0.0

    if cfg.scheme == "euler-maruyama":
        new = coeffs + dt * drift + noise_coeffs
    elif cfg.scheme == "tamed-euler-maruyama":
        norm = np.linalg.norm(drift, axis=-1, keepdims=True)
        new = coeffs + dt * drift / (1.0 + dt * norm) + noise_coeffs
    else:  # semi-implicit-diffusion
        lin = p.a0[:, None] * basis.eigenvalues  # (n, N)
        nonlinear = drift + lin * coeffs
        new = (coeffs + dt * nonlinear + noise_coeffs) / (1.0 + dt * lin)

    if cfg.clip_negative:
        new = project(basis, np.maximum(synthesize(basis, new), 0.0))

    audit = None
    if collect_audit:
        w = basis.quad_weight
        if cfg.linear_mode:
            diss = np.einsum(
                "i,i,k,...ik,...ik->...", p.pi, p.a0, basis.eigenvalues, coeffs, coeffs
            )
        else:
            Pg = int(np.prod(basis.grid_shape))
            gfl = fields["grad"].reshape(*coeffs.shape[:-1], basis.dim, Pg)
            diss = w * np.einsum(
                "i,...pij,...idp,...jdp->...", p.pi, fields["A_points"], gfl, gfl
            )
        if noisy:
            hs_proj = hs_norm_sq_projected(spec, basis, ugrid, p.pi)
            mart = np.einsum("i,...ik,...ik->...", p.pi, coeffs, noise_coeffs)
        else:
            hs_proj = np.zeros(coeffs.shape[:-2])
            mart = np.zeros(coeffs.shape[:-2])
        audit = {
            "dissipation": np.asarray(diss, dtype=float),
            "hs_projected": np.asarray(hs_proj, dtype=float),
            "martingale": np.asarray(mart, dtype=float),
        }
    return new, audit


def em_step(
    basis: SpectralBasis,
    p: ModelParams,
    spec: NoiseSpec | None,
    cfg: SimConfig,
    state: GalerkinState,
    increment: WienerIncrement | None,
) -> GalerkinState:
    """Advance a single state by one step of the configured scheme."""
    dW = None if increment is None else increment.dW
    new, _ = _step_block(basis, p, spec, cfg, state.coeffs[None], None if dW is None else dW[None])
    new = new[0]
    if not np.all(np.isfinite(new)) or np.max(np.abs(new)) > BLOWUP_THRESHOLD:
        raise BlowUpError(f"coefficients left the finite range at t={state.time + cfg.dt}")
    return GalerkinState(new, state.time + cfg.dt)


def _integrate_block(
    basis: SpectralBasis,
    p: ModelParams,
    spec: NoiseSpec | None,
    cfg: SimConfig,
    path_ids: np.ndarray,
    step_chunk: int = 64,
):
    """Step a block of paths to t_end.

    Returns (diag arrays dict (B, S, ...), completed mask (B,), audit sums
    dict or None).  Blown paths freeze at their last finite state and are
    flagged in the mask.
    """
    B = len(path_ids)
    n_steps = cfg.n_steps
    save = cfg.save_steps()
    save_pos = {int(s): i for i, s in enumerate(save)}
    coeffs = np.broadcast_to(cfg.initial, (B, *cfg.initial.shape)).copy()
    active = np.ones(B, dtype=bool)
    noisy = spec is not None and spec.scale > 0

    blocks: dict[str, np.ndarray] = {}

    def stash(step_index: int):
        pos = save_pos.get(step_index)
        if pos is None:
            return
        arrays = diag.record_arrays(basis, p, spec, coeffs)
        for name, arr in arrays.items():
            if name not in blocks:
                blocks[name] = np.zeros((B, len(save), *arr.shape[1:]))
            blocks[name][:, pos] = arr

    audit_sums = None
    if cfg.audit_ito:
        audit_sums = {
            "ito_sum": np.zeros(B),
            "ito_abs_sum": np.zeros(B),
            "steps": n_steps,
        }

    stash(0)
    for start in range(0, n_steps, step_chunk):
        count = min(step_chunk, n_steps - start)
        dW_chunk = (
            _block_increments(spec, path_ids, p.n, start, count, cfg.dt) if noisy else None
        )
        for s in range(count):
            step = start + s
            dW = dW_chunk[:, s] if dW_chunk is not None else None
            if cfg.audit_ito:
                h_before = 0.5 * np.einsum("i,...ik,...ik->...", p.pi, coeffs, coeffs)
            new, audit = _step_block(basis, p, spec, cfg, coeffs, dW, cfg.audit_ito)
            flat = new.reshape(B, -1)
            ok = np.isfinite(flat).all(axis=1) & (np.abs(flat).max(axis=1) <= BLOWUP_THRESHOLD)
            newly_bad = active & ~ok
            if newly_bad.any():
                active &= ok
            upd = active
            coeffs[upd] = new[upd]
            if cfg.audit_ito:
                h_after = 0.5 * np.einsum("i,...ik,...ik->...", p.pi, coeffs, coeffs)
                res = (
                    (h_after - h_before)
                    + cfg.dt * audit["dissipation"]
                    - 0.5 * cfg.dt * audit["hs_projected"]
                    - audit["martingale"]
                )
                res = np.where(upd, res, 0.0)
                audit_sums["ito_sum"] += res
                audit_sums["ito_abs_sum"] += np.abs(res)
            stash(step + 1)
    return blocks, active, audit_sums, coeffs


def run_path(
    basis: SpectralBasis,
    p: ModelParams,
    spec: NoiseSpec | None,
    cfg: SimConfig,
    path_id: int = 0,
    report: ConditionReport | None = None,
) -> PathResult:
    """Integrate a single path, recording snapshots at the save grid.

    With cfg.audit_ito the per-step energy-identity terms are accumulated;
    deterministic given (noise seed, path_id).
    """
    if report is not None and not report.admissible:
        raise ValueError("coefficients are not admissible")
    one = replace(cfg, paths=1)
    save = one.save_steps()
    n_steps = one.n_steps
    noisy = spec is not None and spec.scale > 0
    coeffs = cfg.initial.copy()
    states = [GalerkinState(coeffs.copy(), 0.0)]
    records = [diag.record(basis, p, spec, GalerkinState(coeffs, 0.0))]
    audits: list[StepAudit] = []
    status = "completed"
    save_set = set(int(s) for s in save)
    for step in range(n_steps):
        if noisy:
            from .noise import sample_increment

            dW = sample_increment(spec, path_id, step, cfg.dt, p.n).dW[None]
        else:
            dW = None
        new, audit = _step_block(basis, p, spec, one, coeffs[None], dW, cfg.audit_ito)
        new = new[0]
        if cfg.audit_ito:
            audits.append(
                StepAudit(
                    dissipation=float(np.atleast_1d(audit["dissipation"])[0]),
                    hs_projected=float(np.atleast_1d(audit["hs_projected"])[0]),
                    martingale=float(np.atleast_1d(audit["martingale"])[0]),
                )
            )
        if not np.all(np.isfinite(new)) or np.max(np.abs(new)) > BLOWUP_THRESHOLD:
            status = "blown_up"
            break
        coeffs = new
        t = (step + 1) * cfg.dt
        if (step + 1) in save_set or cfg.audit_ito:
            st = GalerkinState(coeffs.copy(), t)
            states.append(st)
            records.append(diag.record(basis, p, spec, st))
    return PathResult(path_id, states, records, status, audits)


def run_ensemble(
    basis: SpectralBasis,
    p: ModelParams,
    spec: NoiseSpec | None,
    cfg: SimConfig,
    report: ConditionReport | None = None,
    workers: int = 1,
    first_path: int = 0,
) -> EnsembleStats:
    """Monte Carlo over path ids first_path .. first_path + paths - 1.

    Blocks of paths are stepped vectorized and merged in a fixed order, so
    the result is reproducible for any worker count.  Raises
    BlowUpBudgetExceeded when more than 1% of paths blow up.
    """
    if report is not None and not report.admissible:
        raise ValueError("coefficients are not admissible")
    save = cfg.save_steps()
    save_times = save * cfg.dt
    block = cfg.block_size or min(
        cfg.paths, max(256, 2_000_000 // max(1, p.n * basis.n_modes))
    )
    ids = np.arange(first_path, first_path + cfg.paths)
    chunks = [ids[i : i + block] for i in range(0, len(ids), block)]

    def work(chunk: np.ndarray) -> EnsembleStats:
        blocks, completed, audit_sums, _ = _integrate_block(basis, p, spec, cfg, chunk)
        kept = {name: arr[completed] for name, arr in blocks.items()}
        stats = EnsembleStats.from_block(
            save_times, p.n, cfg.p_moment, kept, blown=int((~completed).sum())
        )
        if audit_sums is not None:
            stats.path_stats["ito_sum"] = MomentAccumulator.from_samples(
                audit_sums["ito_sum"][completed], cfg.p_moment
            )
            stats.path_stats["ito_abs_mean"] = MomentAccumulator.from_samples(
                audit_sums["ito_abs_sum"][completed] / max(1, audit_sums["steps"]),
                cfg.p_moment,
            )
        return stats

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(c) for c in chunks]
    stats = results[0]
    for r in results[1:]:
        stats = stats.merge(r)
    if stats.blown > 0.01 * cfg.paths:
        raise BlowUpBudgetExceeded(stats.blown, cfg.paths, stats)
    return stats
