"""The quadratic density g, the sources G_i = K,i * g, and the mode relation."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .divfree import divergence_residual
from .grid import FieldError, GridSpec, ScalarField, VectorField3, partial
from .kernels import poisson_grad_convolve


class LerayError(FieldError):
    pass


def grad_table(f: VectorField3) -> dict[tuple[int, int], ScalarField]:
    """{(i, j): f_i,j} for i, j in 1..3."""
    return {(i, j): partial(f[i], j) for i in (1, 2, 3) for j in (1, 2, 3)}


def assemble_g(f: VectorField3, div_tol: float = 1e-8) -> ScalarField:
    """f11^2 + f22^2 + (f11 + f22)^2 + f12 f21 + f13 f31 + f23 f32.

    The third square is f33^2 rewritten through incompressibility, so the
    input must be divergence-free to ``div_tol`` (relative).
    """
    r = divergence_residual(f)
    if r > div_tol:
        raise LerayError(f"assemble_g needs a divergence-free field; residual {r:.3e} > {div_tol:.1e}")
    d = grad_table(f)
    s = d[1, 1] + d[2, 2]
    return (d[1, 1] ** 2 + d[2, 2] ** 2 + s**2
            + d[1, 2] * d[2, 1] + d[1, 3] * d[3, 1] + d[2, 3] * d[3, 2])


def contracted_density(f: VectorField3) -> ScalarField:
    """sum_{j,k} f_k,j f_j,k, the divergence of (f . grad) f for divergence-free f."""
    d = grad_table(f)
    out = ScalarField.zeros(f.grid)
    for j in (1, 2, 3):
        for k in (1, 2, 3):
            out = out + d[k, j] * d[j, k]
    return out


def source_G(g: ScalarField, i: int, convention: str = "laplace", return_mean: bool = False):
    """G_i = K,i * g on the torus; the mean of g is projected out."""
    return poisson_grad_convolve(g, i, convention=convention, return_mean=return_mean)


# -- mode sets ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Fourier coefficients on the cube |alpha|_inf <= K, stored at index alpha + K."""

    K: int
    period: float
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.shape != (2 * self.K + 1,) * 3:
            raise ValueError(f"coefficient cube must be {(2 * self.K + 1,) * 3}, got {c.shape}")
        object.__setattr__(self, "coefficients", c)

    def __getitem__(self, alpha) -> complex:
        a1, a2, a3 = alpha
        if max(abs(a1), abs(a2), abs(a3)) > self.K:
            return 0j
        return complex(self.coefficients[a1 + self.K, a2 + self.K, a3 + self.K])

    @classmethod
    def zeros(cls, K: int, period: float = 1.0) -> "ModeSet":
        return cls(K, period, np.zeros((2 * K + 1,) * 3, dtype=complex))

    @classmethod
    def from_field(cls, f: ScalarField, K: int) -> "ModeSet":
        n = f.grid.n
        if 2 * K >= n:
            raise ValueError(f"K={K} needs more than {n} points per axis")
        m = f.modes()
        idx = np.arange(-K, K + 1) % n
        return cls(K, f.grid.period, m[np.ix_(idx, idx, idx)])

    def to_field(self, grid: GridSpec) -> ScalarField:
        if 2 * self.K >= grid.n:
            raise ValueError("grid too coarse for this mode set")
        m = np.zeros((grid.n,) * 3, dtype=complex)
        idx = np.arange(-self.K, self.K + 1) % grid.n
        m[np.ix_(idx, idx, idx)] = self.coefficients
        return ScalarField.from_modes(grid, m)

    def hermitian_defect(self) -> float:
        c = self.coefficients
        return float(np.max(np.abs(c - np.conj(c[::-1, ::-1, ::-1])), initial=0.0))

    def save(self, path) -> None:
        lines = [f"K = {self.K}", f"period = {self.period!r}"]
        r = range(-self.K, self.K + 1)
        for a1 in r:
            for a2 in r:
                for a3 in r:
                    v = self[a1, a2, a3]
                    lines.append(f"{a1} {a2} {a3} {v.real!r} {v.imag!r}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "ModeSet":
        text = Path(path).read_text().splitlines()
        head = {}
        for line in text[:2]:
            key, _, val = line.partition("=")
            head[key.strip()] = val.strip()
        K = int(head["K"])
        ms = cls.zeros(K, float(head["period"]))
        for line in text[2:]:
            if not line.strip():
                continue
            a1, a2, a3, re, im = line.split()
            ms.coefficients[int(a1) + K, int(a2) + K, int(a3) + K] = complex(float(re), float(im))
        return ms


def mode_relation_residual(fmodes, convention: str = "integer", alpha_range: str = "full") -> float:
    """l2 norm over (i, alpha) of the mode relation, by direct double summation.

    ``integer``:  r_ia = f_ia + sum_j sum_b f_j(a-b) b_j f_ib
    ``physical``: r_ia = -f_ia + sum_j sum_b f_j(a-b) (2 pi i b_j / L) f_ib,
    the modes of -f_i + sum_j f_j f_i,j.

    ``alpha_range="full"`` sweeps |a|_inf <= 2K (every mode a product can
    reach); ``"truncated"`` sweeps |a|_inf <= K.  No transforms are used.
    """
    fmodes = list(fmodes)
    if len(fmodes) != 3:
        raise ValueError("need three mode sets")
    K = fmodes[0].K
    L = fmodes[0].period
    if any(m.K != K for m in fmodes):
        raise ValueError("mode sets disagree on the truncation K")
    if convention == "integer":
        self_sign, factor = 1.0, 1.0
    elif convention == "physical":
        self_sign, factor = -1.0, 2j * np.pi / L
    else:
        raise ValueError(f"unknown convention {convention!r}")
    A = 2 * K if alpha_range == "full" else K
    if alpha_range not in ("full", "truncated"):
        raise ValueError(f"unknown alpha_range {alpha_range!r}")

    cubes = [m.coefficients for m in fmodes]
    rng = np.arange(-K, K + 1)
    B1, B2, B3 = np.meshgrid(rng, rng, rng, indexing="ij")
    beta = (B1.ravel(), B2.ravel(), B3.ravel())
    fb = [c.ravel() for c in cubes]
    total = 0.0
    for a1 in range(-A, A + 1):
        for a2 in range(-A, A + 1):
            for a3 in range(-A, A + 1):
                d1, d2, d3 = a1 - beta[0], a2 - beta[1], a3 - beta[2]
                ok = (np.abs(d1) <= K) & (np.abs(d2) <= K) & (np.abs(d3) <= K)
                if not ok.any():
                    continue
                idx = (d1[ok] + K, d2[ok] + K, d3[ok] + K)
                for i in range(3):
                    acc = 0j
                    for j in range(3):
                        acc += np.sum(cubes[j][idx] * (factor * beta[j][ok]) * fb[i][ok])
                    own = fmodes[i][a1, a2, a3]
                    total += abs(self_sign * own + acc) ** 2
    return float(np.sqrt(total))
