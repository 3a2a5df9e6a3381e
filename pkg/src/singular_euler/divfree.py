"""Divergence completion: f3 as the zero-mean x3-antiderivative of -(f1,1 + f2,2)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import FieldError, GridSpec, ScalarField, VectorField3, norm, partial


class CompatibilityError(FieldError):
    """The x3-mean of the integrand is nonzero, so no periodic antiderivative exists."""

    def __init__(self, residual: float, tol: float):
        super().__init__(
            f"completion rejected: x3-mean compatibility residual {residual:.3e} exceeds {tol:.3e}"
        )
        self.residual = residual
        self.tol = tol


@dataclass(frozen=True)
class CompletionResult:
    f3: ScalarField
    compatibility_residual: float

    def __post_init__(self):
        if not self.compatibility_residual >= 0:
            raise ValueError("compatibility_residual must be nonnegative")


def _incompatible_mask(grid: GridSpec) -> np.ndarray:
    # modes d/dx3 cannot reach: alpha3 = 0 and the x3 Nyquist plane
    k3 = grid.derivative_wavenumbers()[2]
    return np.broadcast_to(k3 == 0, (grid.n,) * 3)


def x3_antiderivative_modes(rhs_hat: np.ndarray, grid: GridSpec):
    """Zero-mean x3-antiderivative in mode space (fftn normalization, any leading axes).

    Returns (antiderivative modes, L2 norm of the discarded alpha3 = 0 content).
    """
    k3 = grid.derivative_wavenumbers()[2]
    bad = np.broadcast_to(k3 == 0, rhs_hat.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        anti = np.where(bad, 0.0, rhs_hat / (1j * np.where(k3 == 0, 1.0, k3)))
    n3 = grid.n**3
    axes = tuple(range(rhs_hat.ndim - 3, rhs_hat.ndim))
    resid = np.sqrt(grid.period**3 * np.sum(np.abs(np.where(bad, rhs_hat, 0.0) / n3) ** 2, axis=axes))
    return anti, resid


def _l2_modes(ah: np.ndarray, grid: GridSpec) -> float:
    return float(np.sqrt(grid.period**3 * np.sum(np.abs(ah / grid.n**3) ** 2)))


def _checked_antiderivative(f1: ScalarField, f2: ScalarField, tol: float):
    """Antiderivative modes of -(f1,1 + f2,2) and the compatibility residual, or rejection.

    The limit is tol * |f1,1 + f2,2|_L2, raised to a roundoff level
    1e-12 * (|f1,1| + |f2,2|) so that pairs whose terms cancel are not
    rejected for rounding noise.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if f1.grid != f2.grid:
        raise FieldError("f1 and f2 live on different grids")
    grid = f1.grid
    kd = grid.derivative_wavenumbers()
    a = 1j * kd[0] * np.fft.fftn(f1.values)
    b = 1j * kd[1] * np.fft.fftn(f2.values)
    rhs = -(a + b)
    anti, resid = x3_antiderivative_modes(rhs, grid)
    resid = float(resid)
    limit = max(tol * _l2_modes(rhs, grid), 1e-12 * (_l2_modes(a, grid) + _l2_modes(b, grid)),
                1e-14 * grid.size * tol)
    if resid > limit:
        raise CompatibilityError(resid, limit)
    return anti, resid


def complete_f3(f1: ScalarField, f2: ScalarField, tol: float = 1e-10) -> CompletionResult:
    """f3 with d3 f3 = -(f1,1 + f2,2); rejects pairs whose x3-mean is not small.

    ``tol`` is relative to the L2 norm of f1,1 + f2,2.
    """
    anti, resid = _checked_antiderivative(f1, f2, tol)
    return CompletionResult(ScalarField(f1.grid, np.fft.ifftn(anti).real), resid)


def i3_partial(f1: ScalarField, f2: ScalarField, i: int, tol: float = 1e-10) -> ScalarField:
    """d_i of the completed f3, taken inside the x3-integral (mode space)."""
    if i not in (1, 2):
        raise ValueError(f"i must be 1 or 2, got {i!r}")
    anti, _ = _checked_antiderivative(f1, f2, tol)
    grid = f1.grid
    k = grid.derivative_wavenumbers()[i - 1]
    return ScalarField(grid, np.fft.ifftn(1j * k * anti).real)


def divergence(v: VectorField3) -> ScalarField:
    return partial(v[1], 1) + partial(v[2], 2) + partial(v[3], 3)


def divergence_residual(v: VectorField3) -> float:
    """|div v|_L2 / |v|_H1 with a small floor."""
    d = norm(divergence(v), "L2")
    scale = np.sqrt(sum(norm(c, "H1") ** 2 for c in v))
    return float(d / max(scale, 1e-14 * v.grid.size))
