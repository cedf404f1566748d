"""Truncated cylindrical Wiener increments and concrete noise operators.

The cylindrical Wiener process is truncated to its first K directions, with
the abstract directions eta_k identified with the first K spatial basis
modes.  Three operator families are provided; the diagonal multiplicative
one vanishes with the species it drives, which is the structural condition
behind nonnegativity of the densities.

Increments are generated with a counter-based generator (Philox keyed on
(master_seed, path_id) and advanced to the step offset), so any (path, step)
increment is a pure function of the seed triple and concurrent paths never
share generator state.  Gaussians are produced by inverse-CDF from one
64-bit word each, which keeps the per-step stream consumption fixed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

from .spectral import SpectralBasis, project

__all__ = [
    "NoiseSpec",
    "WienerIncrement",
    "FAMILIES",
    "sample_increment",
    "increment_stream",
    "apply_sigma",
    "hs_norm_sq",
    "hs_norm_sq_projected",
    "growth_constant",
]

FAMILIES = ("diagonal-multiplicative", "additive-smooth", "off-diagonal-multiplicative")


@dataclass(frozen=True)
class NoiseSpec:
    """Family, rank, per-direction weights, scale and seed of the noise."""

    family: str
    rank: int
    q: np.ndarray
    scale: float
    master_seed: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")
        q = np.asarray(self.q, dtype=float)
        if q.shape != (self.rank,) or np.any(q <= 0):
            raise ValueError("need one positive weight per retained direction")
        if self.scale < 0:
            raise ValueError("scale must be nonnegative")
        object.__setattr__(self, "q", q)

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        K = int(d["rank"])
        if "q" in d and not isinstance(d["q"], dict):
            q = np.asarray(d["q"], dtype=float)
        else:
            decay = float((d.get("q") or d)["decay_exponent"])
            q = (1.0 + np.arange(K)) ** (-decay)
        return cls(
            family=d["family"],
            rank=K,
            q=q,
            scale=float(d["scale"]),
            master_seed=int(d["seed"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "NoiseSpec":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "rank": self.rank,
            "q": self.q.tolist(),
            "scale": self.scale,
            "seed": self.master_seed,
        }


@dataclass
class WienerIncrement:
    """Gaussian increments d beta_{jk} over one step, shape (n_species, rank)."""

    dW: np.ndarray
    dt: float


def _philox(spec: NoiseSpec, path_id: int):
    key = np.array([spec.master_seed % 2**64, path_id % 2**64], dtype=np.uint64)
    return Philox(key=key)


def _words_per_step(n_species: int, rank: int) -> int:
    # one 64-bit word per Gaussian, padded to whole Philox counter blocks so
    # that steps can be addressed by counter advancement
    m = n_species * rank
    return 4 * ((m + 3) // 4)


def _advance_to_step(bg, step_index: int, words: int) -> None:
    if step_index:
        bg.advance(step_index * words // 4)


def _raw_to_normal(raw: np.ndarray) -> np.ndarray:
    # top 53 bits -> uniform on (0, 1), then inverse normal CDF
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def sample_increment(
    spec: NoiseSpec, path_id: int, step_index: int, dt: float, n_species: int
) -> WienerIncrement:
    """Increment for one step: N(0, dt) entries, deterministic in
    (master_seed, path_id, step_index)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    m = n_species * spec.rank
    bg = _philox(spec, path_id)
    _advance_to_step(bg, step_index, _words_per_step(n_species, spec.rank))
    z = _raw_to_normal(bg.random_raw(m))
    return WienerIncrement(np.sqrt(dt) * z.reshape(n_species, spec.rank), dt)


def increment_stream(
    spec: NoiseSpec,
    path_id: int,
    n_species: int,
    n_steps: int,
    dt: float,
    start_step: int = 0,
) -> np.ndarray:
    """All increments of consecutive steps at once, shape (n_steps, n, rank).

    Row s equals sample_increment(spec, path_id, start_step + s, dt, n).dW.
    """
    m = n_species * spec.rank
    words = _words_per_step(n_species, spec.rank)
    bg = _philox(spec, path_id)
    _advance_to_step(bg, start_step, words)
    raw = bg.random_raw(n_steps * words).reshape(n_steps, words)[:, :m]
    z = _raw_to_normal(raw)
    return np.sqrt(dt) * z.reshape(n_steps, n_species, spec.rank)


def _direction_fields(spec: NoiseSpec, basis: SpectralBasis) -> np.ndarray:
    if spec.rank > basis.n_modes:
        raise ValueError("noise rank exceeds the number of retained basis modes")
    return basis.mode_fields(spec.rank)  # (K, *grid)


def apply_sigma(spec: NoiseSpec, basis: SpectralBasis, state_grid, increment) -> np.ndarray:
    """Grid fields sum_{j,k} sigma_ij(u) eta_k dbeta_jk for each species i.

    state_grid: (..., n, *grid); increment: WienerIncrement or raw dW array
    of shape (..., n, rank).
    """
    u = np.asarray(state_grid, dtype=float)
    dW = increment.dW if isinstance(increment, WienerIncrement) else np.asarray(increment)
    n = u.shape[-1 - basis.dim]
    psi = _direction_fields(spec, basis).reshape(spec.rank, -1)
    ufl = u.reshape(*u.shape[: -basis.dim], -1)
    c = spec.scale
    if spec.family == "diagonal-multiplicative":
        amp = np.einsum("...ik,kp->...ip", dW * spec.q, psi)
        out = c * ufl * amp
    elif spec.family == "additive-smooth":
        amp = np.einsum("...ik,kp->...ip", dW * spec.q, psi)
        out = c * amp
    else:  # off-diagonal-multiplicative: every component j drives species i
        tot = (dW * spec.q).sum(axis=-2)  # (..., K)
        amp = np.einsum("...k,kp->...p", tot, psi)
        out = (c / n) * ufl * amp[..., None, :]
    return out.reshape(u.shape)


def hs_norm_sq(spec: NoiseSpec, basis: SpectralBasis, state_grid, pi=None) -> float | np.ndarray:
    """Squared Hilbert-Schmidt norm sum_{i,j,k} ||sigma_ij(u) eta_k||^2_{L2}.

    Optional weights pi multiply the contribution of species i (used for the
    entropy-weighted norm in the energy identity).
    """
    u = np.asarray(state_grid, dtype=float)
    n = u.shape[-1 - basis.dim]
    pi = np.ones(n) if pi is None else np.asarray(pi, dtype=float)
    psi = _direction_fields(spec, basis).reshape(spec.rank, -1)
    ufl = u.reshape(*u.shape[: -basis.dim], -1)
    w = basis.quad_weight
    c2 = spec.scale**2
    if spec.family == "additive-smooth":
        # independent of the state: ||psi_k|| = 1
        total = c2 * float(np.dot(spec.q, spec.q)) * pi.sum()
        lead = u.shape[: -1 - basis.dim]
        return total if not lead else np.full(lead, total)
    # ||u_i psi_k||^2 by quadrature, per species
    upsi_sq = w * np.einsum("...ip,kp,k->...ik", ufl * ufl, psi * psi, spec.q * spec.q)
    per_species = upsi_sq.sum(axis=-1)  # (..., n)
    if spec.family == "diagonal-multiplicative":
        out = c2 * np.einsum("i,...i->...", pi, per_species)
    else:  # n entries per row, each scaled by c/n
        out = (c2 / n) * np.einsum("i,...i->...", pi, per_species)
    return float(out) if np.ndim(out) == 0 else out


def hs_norm_sq_projected(
    spec: NoiseSpec, basis: SpectralBasis, state_grid, pi=None
) -> float | np.ndarray:
    """Squared HS norm of the mode-projected operator Pi_N sigma(u).

    This is the quadratic-variation rate actually injected into the Galerkin
    system, used by the energy-identity residual.
    """
    u = np.asarray(state_grid, dtype=float)
    n = u.shape[-1 - basis.dim]
    pi = np.ones(n) if pi is None else np.asarray(pi, dtype=float)
    psi = _direction_fields(spec, basis)  # (K, *grid)
    c2 = spec.scale**2
    if spec.family == "additive-smooth":
        # psi_k are basis modes: projection is the identity on them
        total = c2 * float(np.dot(spec.q, spec.q)) * pi.sum()
        lead = u.shape[: -1 - basis.dim]
        return total if not lead else np.full(lead, total)
    expand = (Ellipsis, slice(None), None) + (slice(None),) * basis.dim
    fields = u[expand] * psi  # (..., n, K, *grid)
    coeffs = project(basis, fields)
    norms = (coeffs * coeffs).sum(axis=-1)  # (..., n, K)
    per_species = np.einsum("...ik,k->...i", norms, spec.q * spec.q)
    if spec.family == "diagonal-multiplicative":
        out = c2 * np.einsum("i,...i->...", pi, per_species)
    else:
        out = (c2 / n) * np.einsum("i,...i->...", pi, per_species)
    return float(out) if np.ndim(out) == 0 else out


def growth_constant(spec: NoiseSpec, basis: SpectralBasis, n_species: int = 1) -> float:
    """Reported constant C with hs_norm_sq(u) <= C (1 + ||u||^2) and the
    matching Lipschitz bound for the multiplicative families."""
    qq = float(np.dot(spec.q, spec.q))
    c2 = spec.scale**2
    if spec.family == "additive-smooth":
        return n_species * c2 * qq
    psi = _direction_fields(spec, basis)
    sup2 = float(np.max(psi * psi))
    return c2 * qq * sup2
