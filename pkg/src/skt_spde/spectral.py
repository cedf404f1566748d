"""Cosine spectral basis on a box and the pseudo-spectral drift operator.

The basis functions are tensor products of Neumann Laplacian eigenfunctions

    e_k(x) = prod_axis norm(k_a) * cos(k_a pi x_a / L_a),

sampled on a uniform midpoint grid, where the discrete cosine/sine
orthogonality makes the quadrature exact for all products appearing in the
cubic flux as long as the grid has at least twice as many points as modes
per axis.  The divergence of the flux is taken through a sine-series
projection, which enforces the no-flux boundary condition discretely and
makes the constant mode of the drift vanish identically.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams, eval_diffusion_matrix, eval_truncated_matrix

__all__ = [
    "SpectralBasis",
    "GalerkinState",
    "project",
    "synthesize",
    "gradient",
    "divergence_coeffs",
    "drift_apply",
]


@dataclass(frozen=True)
class SpectralBasis:
    """Truncated cosine basis on the box (0, L_1) x ... x (0, L_d).

    modes_per_axis M gives N = M**d retained modes; grid_per_axis defaults to
    2M collocation points per axis, enough to make the quadrature of the cubic
    flux against any retained mode exact.
    """

    dim: int
    lengths: tuple[float, ...]
    modes_per_axis: int
    grid_per_axis: int = 0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("only spatial dimensions 1 and 2 are supported")
        lengths = tuple(float(L) for L in np.atleast_1d(np.asarray(self.lengths, dtype=float)))
        if len(lengths) != self.dim or any(L <= 0 for L in lengths):
            raise ValueError("need one positive edge length per axis")
        M = int(self.modes_per_axis)
        if M < 1:
            raise ValueError("need at least one mode per axis")
        G = int(self.grid_per_axis) or 2 * M
        if G < 2 * M:
            raise ValueError("grid_per_axis must be at least twice modes_per_axis")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "modes_per_axis", M)
        object.__setattr__(self, "grid_per_axis", G)

        ks = np.arange(M)
        cos_mats, sin_mats, deriv = [], [], []
        for L in lengths:
            x = (np.arange(G) + 0.5) * (L / G)
            norm = np.where(ks == 0, np.sqrt(1.0 / L), np.sqrt(2.0 / L))
            theta = np.outer(x, ks * np.pi / L)
            cos_mats.append(np.cos(theta) * norm)
            sin_mats.append(np.sin(theta) * np.sqrt(2.0 / L))
            deriv.append(ks * np.pi / L)
        if self.dim == 1:
            mode_indices = ks[:, None]
        else:
            kx, ky = np.meshgrid(ks, ks, indexing="ij")
            mode_indices = np.stack([kx.ravel(), ky.ravel()], axis=1)
        lam = np.zeros(len(mode_indices))
        for ax, L in enumerate(lengths):
            lam += (mode_indices[:, ax] * np.pi / L) ** 2

        object.__setattr__(self, "_cos", cos_mats)
        object.__setattr__(self, "_sin", sin_mats)
        object.__setattr__(self, "_deriv", deriv)
        object.__setattr__(self, "mode_indices", mode_indices)
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def n_modes(self) -> int:
        return self.modes_per_axis**self.dim

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return (self.grid_per_axis,) * self.dim

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def quad_weight(self) -> float:
        """Weight of the midpoint quadrature, identical at every node."""
        return self.volume / self.grid_per_axis**self.dim

    def grid(self, axis: int) -> np.ndarray:
        L = self.lengths[axis]
        return (np.arange(self.grid_per_axis) + 0.5) * (L / self.grid_per_axis)

    def mode_fields(self, count: int | None = None) -> np.ndarray:
        """Grid samples of the first ``count`` basis functions, shape (count, *grid)."""
        count = self.n_modes if count is None else int(count)
        if count > self.n_modes:
            raise ValueError("cannot request more mode fields than retained modes")
        eye = np.eye(count, self.n_modes)
        return synthesize(self, eye)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "lengths": list(self.lengths),
            "modes_per_axis": self.modes_per_axis,
            "grid_per_axis": self.grid_per_axis,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralBasis":
        return cls(
            dim=int(d["dim"]),
            lengths=tuple(d["lengths"]),
            modes_per_axis=int(d["modes_per_axis"]),
            grid_per_axis=int(d.get("grid_per_axis", 0)),
        )


@dataclass
class GalerkinState:
    """Spectral coefficients of the approximate process, one row per species."""

    coeffs: np.ndarray  # (n, N)
    time: float = 0.0

    def copy(self) -> "GalerkinState":
        return GalerkinState(self.coeffs.copy(), self.time)


def _check_grid(basis: SpectralBasis, field: np.ndarray):
    if field.shape[-basis.dim :] != basis.grid_shape:
        raise ValueError(
            f"grid field shape {field.shape} does not end in {basis.grid_shape}"
        )


def project(basis: SpectralBasis, grid_field) -> np.ndarray:
    """Coefficients (v, e_k) of a grid-sampled field, k < N, by quadrature."""
    f = np.asarray(grid_field, dtype=float)
    _check_grid(basis, f)
    w = basis.quad_weight
    if basis.dim == 1:
        return w * np.einsum("...g,gk->...k", f, basis._cos[0])
    c = w * np.einsum("...xy,xk,yl->...kl", f, basis._cos[0], basis._cos[1])
    return c.reshape(*f.shape[:-2], basis.n_modes)


def synthesize(basis: SpectralBasis, coeffs) -> np.ndarray:
    """Grid samples of the field with the given spectral coefficients."""
    c = np.asarray(coeffs, dtype=float)
    if c.shape[-1] != basis.n_modes:
        raise ValueError(f"expected {basis.n_modes} coefficients, got {c.shape[-1]}")
    if basis.dim == 1:
        return np.einsum("...k,gk->...g", c, basis._cos[0])
    M = basis.modes_per_axis
    c2 = c.reshape(*c.shape[:-1], M, M)
    return np.einsum("...kl,xk,yl->...xy", c2, basis._cos[0], basis._cos[1])


def gradient(basis: SpectralBasis, coeffs) -> np.ndarray:
    """Per-axis spatial derivatives on the grid, shape (..., d, *grid).

    The cosine series differentiates into a sine series which is then
    sampled; the constant mode contributes nothing.
    """
    c = np.asarray(coeffs, dtype=float)
    if c.shape[-1] != basis.n_modes:
        raise ValueError(f"expected {basis.n_modes} coefficients, got {c.shape[-1]}")
    if basis.dim == 1:
        s = -c * basis._deriv[0]
        out = np.einsum("...k,gk->...g", s, basis._sin[0])
        return out[..., None, :]
    M = basis.modes_per_axis
    c2 = c.reshape(*c.shape[:-1], M, M)
    dx = np.einsum("...kl,xk,yl->...xy", -c2 * basis._deriv[0][:, None], basis._sin[0], basis._cos[1])
    dy = np.einsum("...kl,xk,yl->...xy", -c2 * basis._deriv[1][None, :], basis._cos[0], basis._sin[1])
    return np.stack([dx, dy], axis=-3)


def divergence_coeffs(basis: SpectralBasis, flux) -> np.ndarray:
    """Spectral coefficients of div F from per-axis flux grid fields.

    Each flux component is projected on the sine series of its own axis
    before differentiation, so the result carries no constant-mode component:
    the discrete counterpart of the no-flux boundary condition.
    """
    F = np.asarray(flux, dtype=float)
    _check_grid(basis, F)
    w = basis.quad_weight
    if basis.dim == 1:
        b = w * np.einsum("...g,gk->...k", F[..., 0, :], basis._sin[0])
        return b * basis._deriv[0]
    bx = w * np.einsum("...xy,xk,yl->...kl", F[..., 0, :, :], basis._sin[0], basis._cos[1])
    by = w * np.einsum("...xy,xk,yl->...kl", F[..., 1, :, :], basis._cos[0], basis._sin[1])
    out = bx * basis._deriv[0][:, None] + by * basis._deriv[1][None, :]
    return out.reshape(*out.shape[:-2], basis.n_modes)


def drift_apply(
    basis: SpectralBasis,
    p: ModelParams,
    coeffs,
    truncated: bool = False,
    linear: bool = False,
    return_fields: bool = False,
):
    """Projected divergence of the cross-diffusion flux, per species.

    coeffs has shape (..., n, N).  With ``linear=True`` the nonlinear
    couplings are switched off and the operator reduces to -a_i0 * lambda_k
    per mode (the pure Laplacian part, used by the regression studies).
    With ``return_fields=True`` also returns the grid values, gradients and
    pointwise diffusion matrix for reuse by diagnostics.
    """
    c = np.asarray(coeffs, dtype=float)
    if c.shape[-2] != p.n or c.shape[-1] != basis.n_modes:
        raise ValueError("coefficient array must have shape (..., n_species, n_modes)")
    if linear:
        out = -p.a0[:, None] * basis.eigenvalues * c
        if not return_fields:
            return out
        return out, None
    u = synthesize(basis, c)  # (..., n, *grid)
    grad = gradient(basis, c)  # (..., n, d, *grid)
    P = int(np.prod(basis.grid_shape))
    ufl = u.reshape(*c.shape[:-1], P)
    gfl = grad.reshape(*c.shape[:-1], basis.dim, P)
    upts = np.moveaxis(ufl, -2, -1)  # (..., P, n)
    if truncated:
        Apts = eval_truncated_matrix(p, upts)
    else:
        Apts = eval_diffusion_matrix(p, upts)  # (..., P, n, n)
    flux = np.einsum("...pij,...jdp->...idp", Apts, gfl)
    flux = flux.reshape(*c.shape[:-1], basis.dim, *basis.grid_shape)
    out = divergence_coeffs(basis, flux)
    if not return_fields:
        return out
    return out, {"u": u, "grad": grad, "A_points": Apts, "flux": flux}
