"""Heat-kernel and Poisson-gradient convolutions on the periodic grid.

Two routes are provided for each kernel.  The production route multiplies
Fourier modes.  The oracle route evaluates the convolution integral in real
space after splitting the kernel with a smooth cutoff ``phi``:

    kernel = phi * kernel  (near field, integrated in spherical coordinates)
           + (1 - phi) * kernel  (far field, lattice trapezoid sum)

The Poisson kernel is fixed by Laplace(K) = delta, K(x) = -1/(4 pi |x|), so
the multiplier of ``K,i * g`` is ``-i xi_i / |xi|^2``.  ``convention="newtonian"``
flips that global sign (the gradient of the Newtonian potential, K = +1/(4 pi |x|)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import erfc

from .grid import FieldError, GridSpec, ScalarField, Trajectory

CONVENTIONS = ("laplace", "newtonian")


@dataclass(frozen=True)
class HeatParams:
    epsilon: float
    tau: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon!r}")
        if not self.tau >= 0:
            raise ValueError(f"tau must be nonnegative, got {self.tau!r}")


@dataclass(frozen=True)
class CutoffConfig:
    """Smooth radial cutoff: phi = 1 for r <= radius_full, 0 for r >= radius_support."""

    radius_full: float = 0.5
    radius_support: float = 1.0
    profile: str = "exp-ratio"

    def __post_init__(self):
        if not 0 < self.radius_full < self.radius_support:
            raise ValueError("need 0 < radius_full < radius_support")
        if self.profile != "exp-ratio":
            raise ValueError(f"unknown cutoff profile {self.profile!r}")

    def check_grid(self, grid: GridSpec) -> None:
        if self.radius_support > grid.period / 2:
            raise ValueError(
                f"radius_support {self.radius_support} exceeds half the period {grid.period / 2}"
            )

    def phi(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        s = (r - self.radius_full) / (self.radius_support - self.radius_full)
        s = np.clip(s, 0.0, 1.0)
        return _psi(1.0 - s) / (_psi(1.0 - s) + _psi(s))

    def dphi(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        w = self.radius_support - self.radius_full
        s = np.clip((r - self.radius_full) / w, 0.0, 1.0)
        a, b = _psi(1.0 - s), _psi(s)
        da, db = -_dpsi(1.0 - s), _dpsi(s)
        with np.errstate(invalid="ignore", divide="ignore"):
            d = (da * (a + b) - a * (da + db)) / (a + b) ** 2
        return np.where((s > 0) & (s < 1), d / w, 0.0)


def _psi(t):
    t = np.asarray(t, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)


def _dpsi(t):
    t = np.asarray(t, dtype=np.float64)
    safe = np.where(t > 0, t, 1.0)
    return np.where(t > 0, np.exp(-1.0 / safe) / safe**2, 0.0)


# -- spectral route -----------------------------------------------------------


def heat_multiplier(grid: GridSpec, epsilon: float, tau: float) -> np.ndarray:
    return np.exp(-epsilon * tau * grid.xi2())


def heat_convolve(f: ScalarField, p: HeatParams) -> ScalarField:
    """Convolve with the heat kernel G_eps(tau); tau = 0 is the identity."""
    if p.tau == 0:
        return f
    m = heat_multiplier(f.grid, p.epsilon, p.tau)
    return ScalarField(f.grid, np.fft.ifftn(m * np.fft.fftn(f.values)).real)


def poisson_grad_multiplier(grid: GridSpec, i: int, convention: str = "laplace") -> np.ndarray:
    """Multiplier of g -> K,i * g; zero on the mean mode.

    The inverse Laplacian is built from the same (Nyquist-free) derivative
    wavenumbers as ``partial`` so that sum_i d_i (K,i * g) = g - mean(g)
    holds mode by mode; pure-Nyquist modes map to zero.
    """
    if i not in (1, 2, 3):
        raise ValueError(f"component must be 1, 2 or 3, got {i!r}")
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown sign convention {convention!r}")
    kd = grid.derivative_wavenumbers()
    k2 = kd[0] ** 2 + kd[1] ** 2 + kd[2] ** 2
    sign = -1.0 if convention == "laplace" else 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(k2 > 0, sign * 1j * kd[i - 1] / np.where(k2 > 0, k2, 1.0), 0.0)
    return np.broadcast_to(m, (grid.n,) * 3)


def poisson_grad_convolve(g: ScalarField, i: int, convention: str = "laplace",
                          return_mean: bool = False):
    """Gradient of the Poisson potential, ``int K,i(x - y) g(y) dy`` on the torus.

    The mean of ``g`` has no periodic solution and is projected out; with
    ``return_mean=True`` the projected mean is returned alongside the field.
    """
    m = poisson_grad_multiplier(g.grid, i, convention)
    out = ScalarField(g.grid, np.fft.ifftn(m * np.fft.fftn(g.values)).real)
    if return_mean:
        return out, g.mean()
    return out


# -- real-space oracle --------------------------------------------------------


@dataclass(frozen=True)
class HeatKernel:
    params: HeatParams


@dataclass(frozen=True)
class PoissonGradKernel:
    i: int
    convention: str = "laplace"

    def __post_init__(self):
        if self.i not in (1, 2, 3):
            raise ValueError(f"component must be 1, 2 or 3, got {self.i!r}")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown sign convention {self.convention!r}")

    @property
    def sign(self) -> float:
        return 1.0 if self.convention == "laplace" else -1.0


Kernel = Union[HeatKernel, PoissonGradKernel]

ORACLE_MAX_N = 24


class OracleGuardError(ValueError):
    """The O(n^6) oracle refuses grids above its size guard."""


def _check_guard(grid: GridSpec, max_n: int) -> None:
    if grid.n > max_n:
        raise OracleGuardError(
            f"direct_convolve_oracle guard: n_per_axis={grid.n} exceeds max_n={max_n}"
        )


def _gauss_panels(breaks, nodes_per_panel: int = 16):
    x, w = np.polynomial.legendre.leggauss(nodes_per_panel)
    rs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        rs.append(0.5 * (b - a) * x + 0.5 * (b + a))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(rs), np.concatenate(ws)


def _sphere_rule(n_mu: int):
    mu, wmu = np.polynomial.legendre.leggauss(n_mu)
    n_phi = 2 * n_mu
    ph = 2 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1.0 - mu**2)
    dirs = np.stack(
        [np.outer(st, np.cos(ph)), np.outer(st, np.sin(ph)), np.outer(mu, np.ones(n_phi))], axis=-1
    ).reshape(-1, 3)
    wts = np.outer(wmu, np.full(n_phi, 2 * np.pi / n_phi)).ravel()
    return dirs, wts


def _heat_density(r, eps_tau):
    return (4 * np.pi * eps_tau) ** -1.5 * np.exp(-(r**2) / (4 * eps_tau))


def _near_nodes(kernel: Kernel, cut: CutoffConfig, xi_max: float):
    """Quadrature nodes z_q and weights W_q with W_q ~ phi * kernel * dV."""
    rf, rs = cut.radius_full, cut.radius_support
    tail = list(np.linspace(rf, rs, 5))
    if isinstance(kernel, HeatKernel):
        et = kernel.params.epsilon * kernel.params.tau
        s = math.sqrt(4 * et)
        inner = sorted({0.0, *[c * s for c in (0.25, 0.5, 1, 1.5, 2, 3, 4, 6, 8) if c * s < rf]})
        breaks = inner + tail
    else:
        breaks = [0.0, rf / 2] + tail
    r, wr = _gauss_panels(np.array(breaks))
    n_mu = int(max(12, math.ceil(xi_max * rs / 2 + 12)))
    dirs, wo = _sphere_rule(n_mu)
    phi = cut.phi(r)
    if isinstance(kernel, HeatKernel):
        radial = phi * _heat_density(r, et) * r**2
        W = np.outer(wr * radial, wo)
    else:
        # K,i(z) r^2 = sign * z_i / (4 pi r): the r^2 Jacobian cancels the singularity
        radial = phi / (4 * np.pi)
        W = kernel.sign * np.outer(wr * radial, wo) * dirs[None, :, kernel.i - 1]
    Z = r[:, None, None] * dirs[None, :, :]
    return Z.reshape(-1, 3), W.ravel()


def _near_spherical(g: ScalarField, kernel: Kernel, cut: CutoffConfig) -> ScalarField:
    """sum_q W_q g(x - z_q), with g read off its trigonometric interpolant.

    The sum is accumulated mode by mode: each active Fourier mode of g picks
    up sum_q W_q exp(-i xi . z_q).  Modes below round-off are skipped.
    """
    grid = g.grid
    gh = np.fft.fftn(g.values)
    amp = np.abs(gh)
    active = np.argwhere(amp > 1e-14 * max(amp.max(), 1e-300))
    k = 2.0 * np.pi * np.fft.fftfreq(grid.n, d=grid.spacing)
    xi = np.stack([k[active[:, 0]], k[active[:, 1]], k[active[:, 2]]], axis=1)
    xi_max = float(np.max(np.linalg.norm(xi, axis=1))) if len(xi) else 0.0
    Z, W = _near_nodes(kernel, cut, xi_max)
    acc = np.zeros(len(xi), dtype=complex)
    for start in range(0, len(Z), 4096):
        zq = Z[start:start + 4096]
        acc += np.exp(-1j * (xi @ zq.T)) @ W[start:start + 4096]
    out = np.zeros_like(gh)
    out[tuple(active.T)] = gh[tuple(active.T)] * acc
    return ScalarField(grid, np.fft.ifftn(out).real)


def _pad_matrix(n: int, nf: int) -> np.ndarray:
    """Coarse-to-fine coefficient map; the Nyquist coefficient is split evenly."""
    P = np.zeros((nf, n))
    for j, a in enumerate(np.rint(np.fft.fftfreq(n) * n).astype(int)):
        if abs(a) == n // 2:
            P[a % nf, j] += 0.5
            P[-a % nf, j] += 0.5
        else:
            P[a % nf, j] = 1.0
    return P


def _upsample(g: ScalarField, r: int) -> np.ndarray:
    """Trigonometric interpolation of g onto a grid r times finer."""
    if r == 1:
        return g.values.copy()
    n, nf = g.grid.n, g.grid.n * r
    P = _pad_matrix(n, nf)
    big = np.einsum("ia,jb,kc,abc->ijk", P, P, P, np.fft.fftn(g.values) / n**3, optimize=True)
    return np.fft.ifftn(big).real * nf**3


def _lattice_offsets(grid: GridSpec, r: int):
    nf = grid.n * r
    hf = grid.spacing / r
    j = np.rint(np.fft.fftfreq(nf) * nf)
    z = j * hf  # minimum-image offsets in [-L/2, L/2)
    return nf, hf, np.meshgrid(z, z, z, indexing="ij")


def _far_kernel_heat(grid, r, params: HeatParams, cut: CutoffConfig) -> np.ndarray:
    nf, hf, (z1, z2, z3) = _lattice_offsets(grid, r)
    L = grid.period
    et = params.epsilon * params.tau
    F = np.zeros((nf,) * 3)
    for m1 in (-1, 0, 1):
        for m2 in (-1, 0, 1):
            for m3 in (-1, 0, 1):
                rr = np.sqrt((z1 + m1 * L) ** 2 + (z2 + m2 * L) ** 2 + (z3 + m3 * L) ** 2)
                F += (1.0 - cut.phi(rr)) * _heat_density(rr, et)
    return F


def _far_kernel_poisson(grid, r, kernel: PoissonGradKernel, cut: CutoffConfig) -> np.ndarray:
    """Ewald-summed periodic K,i minus the near piece phi * K,i (min image)."""
    nf, hf, (z1, z2, z3) = _lattice_offsets(grid, r)
    L = grid.period
    V = L**3
    a = 4.0 / L
    zs = (z1, z2, z3)
    i = kernel.i - 1
    F = np.zeros((nf,) * 3)
    for m1 in (-1, 0, 1):
        for m2 in (-1, 0, 1):
            for m3 in (-1, 0, 1):
                w = (z1 + m1 * L, z2 + m2 * L, z3 + m3 * L)
                rr = np.sqrt(w[0] ** 2 + w[1] ** 2 + w[2] ** 2)
                safe = np.where(rr > 0, rr, 1.0)
                bracket = erfc(a * safe) + 2 * a * safe / math.sqrt(math.pi) * np.exp(-((a * safe) ** 2))
                if (m1, m2, m3) == (0, 0, 0):
                    bracket = bracket - cut.phi(safe)
                F += np.where(rr > 0, w[i] / (4 * np.pi * safe**3) * bracket, 0.0)
    # reciprocal part: -(1/V) sum_{k != 0} i k_i exp(-k^2 / 4a^2) / k^2 exp(i k . z)
    mmax = 8
    ms = np.arange(-mmax, mmax + 1)
    kv = 2 * np.pi * ms / L
    K1, K2, K3 = np.meshgrid(kv, kv, kv, indexing="ij")
    k2 = K1**2 + K2**2 + K3**2
    kk = (K1, K2, K3)[i]
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(k2 > 0, -1j * kk * np.exp(-k2 / (4 * a * a)) / np.where(k2 > 0, k2, 1.0), 0.0) / V
    zax = np.rint(np.fft.fftfreq(nf) * nf) * hf
    E = np.exp(1j * np.outer(kv, zax))
    F += np.einsum("abc,ai,bj,ck->ijk", coef, E, E, E, optimize=True).real
    return kernel.sign * F


def _default_refine(grid: GridSpec, cut: CutoffConfig, kernel: Kernel) -> int:
    target = min((cut.radius_support - cut.radius_full) / 12, grid.period / 48)
    if isinstance(kernel, HeatKernel):
        et = kernel.params.epsilon * kernel.params.tau
        target = min(target, max(math.sqrt(2 * et), 1e-300) / 1.5)
    return max(1, min(int(math.ceil(grid.spacing / target - 1e-9)), 8))


def _lattice_sum(g_fine: np.ndarray, F: np.ndarray, grid: GridSpec, r: int, hf: float) -> np.ndarray:
    """Literal double sum: out(x_t) = hf^3 sum_j F(x_t - y_j) g(y_j)."""
    n, nf = grid.n, grid.n * r
    base = np.arange(nf)
    out = np.empty((n,) * 3)
    g_flat = g_fine.ravel()
    for t1 in range(n):
        i1 = (t1 * r - base) % nf
        F1 = F[i1]
        for t2 in range(n):
            i2 = (t2 * r - base) % nf
            F12 = F1[:, i2]
            for t3 in range(n):
                i3 = (t3 * r - base) % nf
                out[t1, t2, t3] = np.dot(F12[:, :, i3].ravel(), g_flat)
    return out * hf**3


def oracle_pieces(g: ScalarField, kernel: Kernel, cut: CutoffConfig, *, refine: int | None = None,
                  near_rule: str = "spherical", max_n: int = ORACLE_MAX_N):
    """Near-field and far-field pieces of the real-space convolution.

    ``near_rule="lattice"`` integrates the near piece with the same lattice
    rule as the far piece (heat kernel only); then near + far equals the
    unsplit lattice quadrature exactly.
    """
    grid = g.grid
    _check_guard(grid, max_n)
    cut.check_grid(grid)
    if isinstance(kernel, HeatKernel) and kernel.params.tau == 0:
        return g, ScalarField.zeros(grid)
    r = refine or _default_refine(grid, cut, kernel)
    nf, hf, (z1, z2, z3) = _lattice_offsets(grid, r)
    g_fine = _upsample(g, r)
    if isinstance(kernel, HeatKernel):
        F = _far_kernel_heat(grid, r, kernel.params, cut)
    else:
        F = _far_kernel_poisson(grid, r, kernel, cut)
    far = ScalarField(grid, _lattice_sum(g_fine, F, grid, r, hf))
    if near_rule == "spherical":
        near = _near_spherical(g, kernel, cut)
    elif near_rule == "lattice":
        if not isinstance(kernel, HeatKernel):
            raise ValueError("lattice near rule needs a nonsingular kernel")
        rr = np.sqrt(z1**2 + z2**2 + z3**2)
        Fn = cut.phi(rr) * _heat_density(rr, kernel.params.epsilon * kernel.params.tau)
        near = ScalarField(grid, _lattice_sum(g_fine, Fn, grid, r, hf))
    else:
        raise ValueError(f"unknown near-field rule {near_rule!r}")
    return near, far


def unsplit_lattice_quadrature(g: ScalarField, kernel: HeatKernel, *, refine: int,
                               max_n: int = ORACLE_MAX_N) -> ScalarField:
    """Heat convolution by one lattice rule over the 3^3 periodic images, no split."""
    grid = g.grid
    _check_guard(grid, max_n)
    nf, hf, (z1, z2, z3) = _lattice_offsets(grid, refine)
    L = grid.period
    et = kernel.params.epsilon * kernel.params.tau
    F = np.zeros((nf,) * 3)
    for m1 in (-1, 0, 1):
        for m2 in (-1, 0, 1):
            for m3 in (-1, 0, 1):
                rr = np.sqrt((z1 + m1 * L) ** 2 + (z2 + m2 * L) ** 2 + (z3 + m3 * L) ** 2)
                F += _heat_density(rr, et)
    return ScalarField(grid, _lattice_sum(_upsample(g, refine), F, grid, refine, hf))


def direct_convolve_oracle(g: ScalarField, kernel: Kernel, cut: CutoffConfig, *,
                           refine: int | None = None, max_n: int = ORACLE_MAX_N) -> ScalarField:
    """Real-space quadrature of the convolution; O(n^6), refuses n > max_n."""
    near, far = oracle_pieces(g, kernel, cut, refine=refine, max_n=max_n)
    return near + far


# -- kernel norms used by the contraction constant ----------------------------


def heat_kernel_l1(grid: GridSpec, epsilon: float, tau: float, axis: int | None = None) -> float:
    """L1 norm of the discrete heat kernel (or its d/dx_axis) at elapsed time tau."""
    m = heat_multiplier(grid, epsilon, tau).astype(complex)
    if axis is not None:
        m = 1j * grid.derivative_wavenumbers()[axis - 1] * m
    kappa = np.fft.ifftn(m).real
    return float(np.sum(np.abs(kappa)))


def cutoff_kernel_norms(cut: CutoffConfig, n_dirs: int = 2000) -> tuple[float, float]:
    """(|phi K,i|_L1, |(1-phi)K,i|_L2 + |.|_Linf + sum_j |d_j .|_Linf) on R^3."""
    rf, rs = cut.radius_full, cut.radius_support
    r, w = _gauss_panels(np.linspace(0.0, rs, 9), 24)
    # |phi K,i|_L1 = (int phi dr) / (4 pi) * int |z_i| dOmega = (1/2) int phi dr
    c2 = 0.5 * float(np.sum(w * cut.phi(r)))
    r2, w2 = _gauss_panels(np.linspace(rf, rs, 9), 24)
    l2sq = (float(np.sum(w2 * (1 - cut.phi(r2)) ** 2 / r2**2)) + 1.0 / rs) / (12 * np.pi)
    rad = np.concatenate([np.linspace(rf, rs, 400), np.geomspace(rs, 20 * rs, 200)])
    linf = float(np.max((1 - cut.phi(rad)) / (4 * np.pi * rad**2)))
    # Fibonacci directions for the derivative sup
    k = np.arange(n_dirs) + 0.5
    th = np.arccos(1 - 2 * k / n_dirs)
    ph = np.pi * (1 + 5**0.5) * k
    dirs = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=1)
    dsum = 0.0
    for j in range(3):
        best = 0.0
        for rr in rad:
            z = rr * dirs
            psi, dpsi = 1 - cut.phi(rr), -cut.dphi(rr)
            zi, zj = z[:, 0], z[:, j]
            dK = ((1.0 if j == 0 else 0.0) * rr**2 - 3 * zi * zj) / (4 * np.pi * rr**5)
            val = psi * dK + dpsi * (zj / rr) * zi / (4 * np.pi * rr**3)
            best = max(best, float(np.max(np.abs(val))))
        dsum += best
    return c2, math.sqrt(l2sq) + linf + dsum


def far_field_profile(cut: CutoffConfig, radii, i: int = 1) -> np.ndarray:
    """Values of (1 - phi) K,i along the +x_i axis (free space)."""
    radii = np.asarray(radii, dtype=np.float64)
    return (1 - cut.phi(radii)) / (4 * np.pi * radii**2)


# -- Duhamel time integration -------------------------------------------------

RULES = ("product", "trapezoid")


def _product_weights(z: np.ndarray):
    """a(z) = int_0^1 r e^{-zr} dr, b(z) = int_0^1 (1-r) e^{-zr} dr."""
    z = np.asarray(z, dtype=np.float64)
    small = z < 0.5
    zs = np.where(small, z, 0.0)
    a_s = np.zeros_like(z)
    b_s = np.zeros_like(z)
    term = np.ones_like(z)
    for k in range(24):
        a_s += term / (k + 2)
        b_s += term / ((k + 1) * (k + 2))
        term = term * (-zs) / (k + 1)
    zl = np.where(small, 1.0, z)
    em = np.exp(-zl)
    a_l = (1 - em * (1 + zl)) / zl**2
    b_l = (zl - 1 + em) / zl**2
    return np.where(small, a_s, a_l), np.where(small, b_s, b_l)


def duhamel_step(u_hat, s0_hat, s1_hat, lam, h, rule="product"):
    """One interval of u' = -lam u + S with S linear across the interval."""
    z = lam * h
    decay = np.exp(-z)
    if rule == "product":
        a, b = _product_weights(z)
        return decay * u_hat + h * (a * s0_hat + b * s1_hat)
    if rule == "trapezoid":
        return decay * u_hat + 0.5 * h * (decay * s0_hat + s1_hat)
    raise ValueError(f"unknown quadrature rule {rule!r}")


def duhamel_modes(src_hat: np.ndarray, times: np.ndarray, lam: np.ndarray, rule: str = "product"):
    """Mode-space u(t_n) = int_0^{t_n} exp(-lam (t_n - s)) S(s) ds at every stored time."""
    out = np.empty_like(src_hat, dtype=complex)
    out[0] = 0.0
    for n in range(len(times) - 1):
        out[n + 1] = duhamel_step(out[n], src_hat[n], src_hat[n + 1], lam, times[n + 1] - times[n], rule)
    return out


def duhamel_integral(sources: Trajectory, eps: float, t: float, rule: str = "product") -> ScalarField:
    """u(t) = int_0^t G_eps(t - s) * S(s) ds by quadrature over the stored times.

    ``rule="trapezoid"`` applies the trapezoid rule to s -> heat_convolve(S(s), t - s);
    ``rule="product"`` integrates the exponential weight exactly against the
    piecewise-linear interpolant of S (exact for constant sources).
    """
    if not eps > 0:
        raise ValueError(f"epsilon must be positive, got {eps!r}")
    times = sources.times
    if t < 0 or t > times[-1] * (1 + 1e-12):
        raise ValueError(f"t={t} outside the source span [0, {times[-1]}]")
    grid = sources.grid
    lam = eps * grid.xi2()
    u = np.zeros((grid.n,) * 3, dtype=complex)
    prev = np.fft.fftn(sources[0].values)
    for n in range(len(times) - 1):
        if times[n] >= t:
            break
        nxt = np.fft.fftn(sources[n + 1].values)
        t1 = min(times[n + 1], t)
        if t1 < times[n + 1]:
            theta = (t1 - times[n]) / (times[n + 1] - times[n])
            nxt = (1 - theta) * prev + theta * nxt
        u = duhamel_step(u, prev, nxt, lam, t1 - times[n], rule)
        prev = nxt
    return ScalarField(grid, np.fft.ifftn(u).real)
