"""Coefficient algebra for the population cross-diffusion system.

The diffusion matrix couples n species through quadratic transition rates,

    A_ij(u) = delta_ij * (a_i0 + sum_k a_ik u_k^2) + 2 a_ij u_i u_j,

and the whole analysis hinges on ``diag(pi) @ A(u)`` being positive definite
for suitable entropy weights ``pi``.  This module houses the matrix, its
sign-truncated variant, the admissibility conditions on the coefficients, the
detailed-balance weight solver, and the quadratic entropy.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ModelParams",
    "ConditionReport",
    "NoReversibleMeasure",
    "solve_detailed_balance",
    "check_conditions",
    "eval_diffusion_matrix",
    "eval_truncated_matrix",
    "quadratic_form_gap",
    "entropy",
    "entropy_density",
]

# Relative tolerance separating double-precision rounding from genuine
# violation of the pair equations pi_i a_ij = pi_j a_ji.
DETAILED_BALANCE_RTOL = 1e-10


class NoReversibleMeasure(ValueError):
    """No positive weight vector satisfies the detailed-balance equations."""


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the n-species cross-diffusion system.

    a0[i] is the linear diffusion rate of species i, a[i, j] the quadratic
    interaction rate, and pi[i] the entropy weight.  All entries must be
    strictly positive; pi defaults to all ones.
    """

    n: int
    a0: np.ndarray
    a: np.ndarray
    pi: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        a0 = np.asarray(self.a0, dtype=float)
        a = np.asarray(self.a, dtype=float)
        pi = np.ones(self.n) if self.pi is None else np.asarray(self.pi, dtype=float)
        if self.n < 1:
            raise ValueError("need at least one species")
        if a0.shape != (self.n,) or a.shape != (self.n, self.n) or pi.shape != (self.n,):
            raise ValueError("coefficient shapes do not match species count")
        if not (np.all(a0 > 0) and np.all(a > 0)):
            raise ValueError("all a_i0 and a_ij must be strictly positive")
        if not np.all(pi > 0):
            raise ValueError("entropy weights must be strictly positive")
        object.__setattr__(self, "a0", a0)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "pi", pi)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(n=int(d["n"]), a0=d["a0"], a=d["a"], pi=d.get("pi"))

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "a0": self.a0.tolist(),
            "a": self.a.tolist(),
            "pi": self.pi.tolist(),
        }

    def with_balanced_pi(self) -> "ModelParams":
        """Return a copy whose weights solve the detailed-balance equations."""
        return ModelParams(n=self.n, a0=self.a0, a=self.a, pi=solve_detailed_balance(self.a))


@dataclass(frozen=True)
class ConditionReport:
    """Admissibility of a coefficient set and the effective coercivity constant.

    alpha1 is only defined when the weights satisfy detailed balance; alpha is
    the constant used in the quadratic-form lower bound downstream.
    """

    alpha1: float | None
    alpha2: float
    detailed_balance: bool
    admissible: bool
    alpha: float
    route: str  # "self-adjoint", "dominant-diagonal", or "none"

    def to_dict(self) -> dict:
        return {
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "detailed_balance": self.detailed_balance,
            "admissible": self.admissible,
            "alpha": self.alpha,
            "route": self.route,
        }


def _balance_violation(a: np.ndarray, pi: np.ndarray) -> float:
    """Max relative defect of the pair equations pi_i a_ij = pi_j a_ji."""
    lhs = pi[:, None] * a
    return float(np.max(np.abs(lhs - lhs.T) / lhs))


def solve_detailed_balance(a) -> np.ndarray:
    """Solve pi_i a_ij = pi_j a_ji for positive weights with pi_1 = 1.

    The candidate pi_j = a_1j / a_j1 solves the equations involving species 1;
    consistency of every remaining pair is exactly Kolmogorov's cycle
    criterion, checked to relative tolerance 1e-10.  Raises
    NoReversibleMeasure when no positive solution exists (the caller should
    fall back to the dominant-diagonal condition with pi = 1).
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.all(a > 0):
        raise ValueError("matrix must be strictly positive entrywise")
    pi = a[0] / a[:, 0]
    pi[0] = 1.0
    if _balance_violation(a, pi) > DETAILED_BALANCE_RTOL:
        raise NoReversibleMeasure("Kolmogorov cycle criterion fails: no reversible measure")
    return pi


def check_conditions(p: ModelParams) -> ConditionReport:
    """Evaluate the two admissibility conditions on the coefficients.

    The first route requires detailed balance of p.pi together with

        alpha1 = min_i ( a_ii - (1/3) sum_{j != i} a_ij ) > 0,

    the second only

        alpha2 = min_i ( a_ii - (1/3) sum_{j != i} (sqrt(a_ij) - sqrt(a_ji))^2 ) > 0.

    When both routes are available the detailed-balance one is preferred,
    because the quadratic-form bound with pi = 1 is only justified on the
    second route.
    """
    a = p.a
    off = ~np.eye(p.n, dtype=bool)
    detailed_balance = _balance_violation(a, p.pi) <= DETAILED_BALANCE_RTOL

    alpha1 = None
    if detailed_balance:
        alpha1 = float(np.min(np.diag(a) - np.where(off, a, 0.0).sum(axis=1) / 3.0))
    asym = (np.sqrt(a) - np.sqrt(a.T)) ** 2
    alpha2 = float(np.min(np.diag(a) - np.where(off, asym, 0.0).sum(axis=1) / 3.0))

    if detailed_balance and alpha1 is not None and alpha1 > 0:
        return ConditionReport(alpha1, alpha2, True, True, alpha1, "self-adjoint")
    if alpha2 > 0:
        return ConditionReport(alpha1, alpha2, detailed_balance, True, alpha2, "dominant-diagonal")
    return ConditionReport(alpha1, alpha2, detailed_balance, False, alpha2, "none")


def eval_diffusion_matrix(p: ModelParams, u) -> np.ndarray:
    """Diffusion matrix A(u) at a point value u.

    Accepts any leading batch shape: u of shape (..., n) yields (..., n, n).
    """
    u = np.asarray(u, dtype=float)
    A = 2.0 * p.a * (u[..., :, None] * u[..., None, :])
    diag = p.a0 + np.einsum("ik,...k->...i", p.a, u * u)
    idx = np.arange(p.n)
    A[..., idx, idx] += diag
    return A


def eval_truncated_matrix(p: ModelParams, u) -> np.ndarray:
    """Sign-truncated matrix A+(u) with u_i replaced by max(0, u_i) in the
    first cross-term factor, so row i of the cross terms vanishes wherever
    u_i <= 0.  Coincides with A(u) on the nonnegative orthant."""
    u = np.asarray(u, dtype=float)
    up = np.maximum(u, 0.0)
    A = 2.0 * p.a * (up[..., :, None] * u[..., None, :])
    diag = p.a0 + np.einsum("ik,...k->...i", p.a, u * u)
    idx = np.arange(p.n)
    A[..., idx, idx] += diag
    return A


def quadratic_form_gap(p: ModelParams, report: ConditionReport, u, z) -> float | np.ndarray:
    """Defect of the positive-definiteness bound for diag(pi) A(u).

    Returns sum_ij pi_i A_ij(u) z_i z_j minus the lower bound
    sum_i pi_i a_i0 z_i^2 + 3 alpha sum_i pi_i u_i^2 z_i^2, which is
    nonnegative for admissible coefficients.  Batched over leading axes.
    """
    if not report.admissible:
        raise ValueError("quadratic-form bound requires admissible coefficients")
    u = np.asarray(u, dtype=float)
    z = np.asarray(z, dtype=float)
    A = eval_diffusion_matrix(p, u)
    form = np.einsum("i,...ij,...i,...j->...", p.pi, A, z, z)
    bound = np.einsum("i,i,...i->...", p.pi, p.a0, z * z)
    bound = bound + 3.0 * report.alpha * np.einsum("i,...i,...i->...", p.pi, u * u, z * z)
    out = form - bound
    return float(out) if out.ndim == 0 else out


def entropy(p: ModelParams, fields, weights) -> float:
    """Quadratic entropy H(u) = (1/2) sum_i pi_i int u_i^2 dx.

    fields has shape (n, *grid); weights is either the scalar quadrature
    weight of a uniform grid or an array broadcastable to the grid.
    """
    fields = np.asarray(fields, dtype=float)
    sq = (fields * fields) * weights
    per_species = sq.reshape(p.n, -1).sum(axis=1)
    return float(0.5 * np.dot(p.pi, per_species))


def entropy_density(s: float, z: float) -> float:
    """Scalar entropy density: z(log z - 1) + 1 for s = 1, z**s / s otherwise."""
    if z < 0:
        raise ValueError("entropy density is only defined for z >= 0")
    if s == 1:
        if z == 0.0:
            return 1.0  # continuous limit of z(log z - 1) + 1
        return z * (math.log(z) - 1.0) + 1.0
    return z**s / s
