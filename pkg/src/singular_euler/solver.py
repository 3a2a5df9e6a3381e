"""The epsilon-regularized fixed-point construction of f2 from f1.

For viscosity eps and a parameter trajectory w (standing in for f3), the
iterate v^{k+1} is the Duhamel integral, against the heat kernel, of

    S(v, w) = sigma * T(v) + A1 v,3 - A2 f1,3
    T(v)    = (-f1 + f1 f1,1 + v f1,2) v,3 + (v - f1 v,1 - v v,2) f1,3
    A_i     = K,i * (f1,1^2 + v,2^2 + (f1,1 + v,2)^2 + f1,2 v,1 + f1,3 w,1 + v,3 w,2)

with v(0) = 0.  ``sigma = -1`` moves the transport block to the right-hand
side of v_t - eps Lap v + T = A1 v,3 - A2 f1,3.  An outer loop refreshes w
from incompressibility, w,3 = -(f1,1 + v,2), and the viscosity is stepped
down a schedule; the final steady state is f2.

Everything runs in mode space on whole trajectories at once.  After every
step two torus projections are applied to v (for t > 0): the mean is removed
(the zero mode is undamped here, whereas on R^3 it disperses) and the
alpha3 = 0 modes are set so that f1,1 + v,2 has zero x3-mean, which is what
makes the completion of f3 possible.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .divfree import complete_f3, divergence_residual, x3_antiderivative_modes
from .grid import GridSpec, ScalarField, Trajectory, VectorField3, norm_from_modes, partial
from .kernels import (
    CONVENTIONS,
    RULES,
    CutoffConfig,
    HeatKernel,
    HeatParams,
    PoissonGradKernel,
    cutoff_kernel_norms,
    direct_convolve_oracle,
    duhamel_modes,
    heat_kernel_l1,
    poisson_grad_multiplier,
)

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class PicardDivergence(SolverError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    eps_schedule: tuple = (0.5, 0.25, 0.125)
    t_max: Union[float, None] = None  # None: horizon_factor / eps per stage
    dt: Union[float, None] = None  # None: t_max / n_steps
    n_steps: int = 128
    horizon_factor: float = 8.0
    contraction_tol: float = 1e-9
    w_tol: float = 1e-8
    max_picard: int = 200
    max_w_iters: int = 100
    c_scale: Union[float, str] = "auto"
    c_margin: float = 0.5
    theta: float = 0.5
    transport_sign: float = -1.0
    rule: str = "product"
    convention: str = "laplace"
    steady_tol: float = 1e-8
    max_horizon_doublings: int = 3

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_schedule)
        object.__setattr__(self, "eps_schedule", eps)
        if not eps or any(e <= 0 for e in eps):
            raise ValueError("eps_schedule must be a nonempty list of positive reals")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps_schedule must be strictly decreasing")
        if self.t_max is not None and not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.dt is not None:
            if not self.dt > 0:
                raise ValueError("dt must be positive")
            if self.t_max is not None and not self.dt < self.t_max:
                raise ValueError("dt must be smaller than t_max")
        for name in ("contraction_tol", "w_tol", "steady_tol", "horizon_factor", "c_margin"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_picard < 1 or self.max_w_iters < 1 or self.n_steps < 2:
            raise ValueError("iteration and step counts must be positive")
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if self.c_scale != "auto" and not (isinstance(self.c_scale, (int, float)) and self.c_scale > 0):
            raise ValueError("c_scale must be a positive real or 'auto'")
        if self.rule not in RULES:
            raise ValueError(f"rule must be one of {RULES}")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}")
        if self.transport_sign not in (-1.0, 1.0):
            raise ValueError("transport_sign must be +1 or -1")

    def times_for(self, eps: float) -> np.ndarray:
        t_max = self.t_max if self.t_max is not None else self.horizon_factor / eps
        n = self.n_steps if self.dt is None else max(2, int(round(t_max / self.dt)))
        return np.linspace(0.0, t_max, n + 1)


# -- contraction constant -----------------------------------------------------


def contraction_constant(C0: float, C1: float, C2: float, C3: float, C4: float, n: int = 3) -> float:
    vals = (C0, C1, C2, C3, C4)
    if not all(math.isfinite(v) and v >= 0 for v in vals):
        raise ValueError("constants must be finite and nonnegative")
    m = 2 * n + 1
    a = 4 * (2 + m * 6 * C0) ** 2 * C1
    b = 4 * (m * (C2 + m * C3) * (5 * C0**2 + 2 * C0 * C4) + 2 * (C2 + m * C3) * m * C0 * 8 * m * C0)
    return float(a + b)


@dataclass(frozen=True)
class ContractionConstants:
    C0: float
    C1: float
    C2: float
    C3: float
    C4: float
    C: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "C", contraction_constant(self.C0, self.C1, self.C2, self.C3, self.C4))


# -- spectral trajectory helpers ----------------------------------------------


class _Ops:
    """Per-grid multipliers, shared across calls."""

    def __init__(self, grid: GridSpec, convention: str):
        self.grid = grid
        self.kd = grid.derivative_wavenumbers()
        self.xi2 = grid.xi2()
        self.kgrad = {i: poisson_grad_multiplier(grid, i, convention) for i in (1, 2)}
        k1, k2, k3 = self.kd
        n = grid.n
        plane = np.broadcast_to(k3 == 0, (n, n, n))
        self.alpha3_zero = plane
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(k2 != 0, -k1 / np.where(k2 != 0, k2, 1.0), 0.0)
        self.compat_ratio = np.broadcast_to(ratio, (n, n, n)) * plane

    def fft(self, a):
        return np.fft.fftn(a, axes=(-3, -2, -1))

    def ifft(self, a):
        return np.fft.ifftn(a, axes=(-3, -2, -1)).real

    def d(self, ah, axis):
        return self.ifft(1j * self.kd[axis - 1] * ah)

    def project(self, vh: np.ndarray, f1h: np.ndarray) -> np.ndarray:
        """Zero mean and x3-mean compatibility of f1,1 + v,2, for t > 0."""
        out = vh.copy()
        tail = out[1:]
        tail[:, 0, 0, 0] = 0.0
        tail[:] = np.where(self.alpha3_zero, self.compat_ratio * f1h, tail)
        return out


def _check_finite(arr: np.ndarray, stage: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise SolverError(stage, "non-finite intermediate values")


@dataclass
class _F1Data:
    f: np.ndarray
    fh: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray


def _f1_data(f1: ScalarField, ops: _Ops) -> _F1Data:
    fh = np.fft.fftn(f1.values)
    return _F1Data(f1.values, fh, ops.d(fh, 1), ops.d(fh, 2), ops.d(fh, 3))


def _source_terms(F: _F1Data, V: np.ndarray, W: np.ndarray, ops: _Ops, sigma: float,
                  kgrad=None):
    """S(v, w) at every stored time; returns (S, T, A1, A2, gw) as real arrays."""
    Vh, Wh = ops.fft(V), ops.fft(W)
    v1, v2, v3 = ops.d(Vh, 1), ops.d(Vh, 2), ops.d(Vh, 3)
    w1, w2 = ops.d(Wh, 1), ops.d(Wh, 2)
    T = (-F.f + F.f * F.d1 + V * F.d2) * v3 + (V - F.f * v1 - V * v2) * F.d3
    gw = F.d1**2 + v2**2 + (F.d1 + v2) ** 2 + F.d2 * v1 + F.d3 * w1 + v3 * w2
    if kgrad is None:
        gh = ops.fft(gw)
        A1, A2 = ops.ifft(ops.kgrad[1] * gh), ops.ifft(ops.kgrad[2] * gh)
    else:
        A1, A2 = kgrad(gw, 1), kgrad(gw, 2)
    S = sigma * T + A1 * v3 - A2 * F.d3
    return S, T, A1, A2, gw


def _stack(tr: Trajectory) -> np.ndarray:
    return tr.stack()


def _h2_norms(Ah: np.ndarray, grid: GridSpec) -> np.ndarray:
    w = (1.0 + grid.xi2()) ** 2
    return np.sqrt(grid.period**3 * np.sum(w * np.abs(Ah / grid.n**3) ** 2, axis=(-3, -2, -1)))


def _exp_norm(times: np.ndarray, h2: np.ndarray, C: float) -> float:
    with np.errstate(under="ignore"):
        return float(np.max(np.exp(-C * times) * h2))


def _validate_inputs(f1: ScalarField, w: Trajectory, vk: Trajectory | None = None) -> None:
    if w.grid != f1.grid or (vk is not None and vk.grid != f1.grid):
        raise SolverError("inputs", "f1, w and v must share one grid")
    if vk is not None and not np.array_equal(w.times, vk.times):
        raise SolverError("inputs", "w and v must be stored at the same times")


def iterate_v(f1: ScalarField, w: Trajectory, vk: Trajectory, eps: float, cfg: SolverConfig,
              engine: str = "spectral", cut: CutoffConfig | None = None) -> Trajectory:
    """One Picard step v^k -> v^{k+1} at every stored time.

    ``engine="oracle"`` evaluates every convolution with the real-space
    quadrature oracle and the time integral with the literal trapezoid rule
    (small grids and short trajectories only).  The torus projections are
    applied in both engines.
    """
    _validate_inputs(f1, w, vk)
    if not eps > 0:
        raise ValueError("eps must be positive")
    grid = f1.grid
    ops = _Ops(grid, cfg.convention)
    F = _f1_data(f1, ops)
    times = vk.times
    if engine == "spectral":
        S = _source_terms(F, _stack(vk), _stack(w), ops, cfg.transport_sign)[0]
        _check_finite(S, "source")
        Uh = duhamel_modes(ops.fft(S), times, eps * ops.xi2, cfg.rule)
    elif engine == "oracle":
        cut = cut or CutoffConfig(0.2 * grid.period, 0.45 * grid.period)

        def kgrad(gw, i):
            return np.stack([
                direct_convolve_oracle(ScalarField(grid, g), PoissonGradKernel(i, cfg.convention), cut).values
                for g in gw
            ])

        S = _source_terms(F, _stack(vk), _stack(w), ops, cfg.transport_sign, kgrad=kgrad)[0]
        U = np.zeros_like(S)
        for n in range(1, len(times)):
            acc = np.zeros(S.shape[1:])
            for m in range(n + 1):
                h = 0.5 * (times[min(m + 1, n)] - times[max(m - 1, 0)])
                tau = times[n] - times[m]
                g = ScalarField(grid, S[m])
                piece = g if tau == 0 else direct_convolve_oracle(g, HeatKernel(HeatParams(eps, tau)), cut)
                acc += h * piece.values
            U[n] = acc
        Uh = ops.fft(U)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    Uh = ops.project(Uh, F.fh)
    out = ops.ifft(Uh)
    out[0] = 0.0
    _check_finite(out, "duhamel")
    return Trajectory.from_array(grid, times, out)


# -- measured constants -------------------------------------------------------


def _sup_c2(A: np.ndarray, ops: _Ops) -> np.ndarray:
    """Per-snapshot sup|u| + sum_i sup|u,i| + sum_ij sup|u,ij|."""
    Ah = ops.fft(A)
    ax = (-3, -2, -1)
    tot = np.max(np.abs(A), axis=ax)
    for i in (1, 2, 3):
        tot = tot + np.max(np.abs(ops.d(Ah, i)), axis=ax)
        for j in (1, 2, 3):
            tot = tot + np.max(np.abs(ops.ifft(-ops.kd[i - 1] * ops.kd[j - 1] * Ah)), axis=ax)
    return tot


_KERNEL_NORMS: dict = {}


def measure_constants(f1: ScalarField, iterates: list[np.ndarray], W: np.ndarray, eps: float,
                      times: np.ndarray, ops: _Ops) -> ContractionConstants:
    """C0..C4 from the current iterates; the kernel norms come from the grid and the cutoff."""
    grid = f1.grid
    c0 = float(np.max(_sup_c2(f1.values, ops)))
    for A in iterates + [W]:
        c0 = max(c0, float(np.max(_sup_c2(A, ops))), float(np.max(_h2_norms(ops.fft(A), grid))))
    dt = float(np.min(np.diff(times)))
    c1 = max(heat_kernel_l1(grid, eps, dt, axis) for axis in (None, 1, 2, 3))
    if "cut" not in _KERNEL_NORMS:
        _KERNEL_NORMS["cut"] = cutoff_kernel_norms(CutoffConfig())
    c2, c3 = _KERNEL_NORMS["cut"]
    c4 = float(np.max(2 * _sup_c2(W, ops)))
    return ContractionConstants(c0, c1, c2, c3, c4)


# -- Picard loop --------------------------------------------------------------


@dataclass
class PicardResult:
    trajectory: Trajectory
    iterations: int
    ratios: list
    increments: list
    constants: ContractionConstants
    converged: bool


def solve_parameterized_detailed(f1: ScalarField, w: Trajectory, eps: float, cfg: SolverConfig,
                                 v0: Trajectory | None = None) -> PicardResult:
    """Picard iteration to the fixed point for a frozen parameter w.

    Convergence needs both the exp-C weighted and the plain sup-in-time H2
    norms of the increment below ``contraction_tol`` times the sup-in-time H2
    size of the new iterate (the fixed point is much smaller than f1).
    """
    _validate_inputs(f1, w, v0)
    grid = f1.grid
    ops = _Ops(grid, cfg.convention)
    F = _f1_data(f1, ops)
    times = w.times
    lam = eps * ops.xi2
    W = _stack(w)
    if not np.any(F.f):
        zero = Trajectory.from_array(grid, times, np.zeros((len(times),) + (grid.n,) * 3))
        return PicardResult(zero, 1, [], [0.0], ContractionConstants(0, 0, 0, 0, 0), True)
    V = _stack(v0) if v0 is not None else np.broadcast_to(-F.f, (len(times),) + F.f.shape).copy()
    prev_inc = prev_sup = None
    ratios, incs = [], []
    consts = None
    bad = 0
    for k in range(1, cfg.max_picard + 1):
        S = _source_terms(F, V, W, ops, cfg.transport_sign)[0]
        _check_finite(S, f"picard step {k}: source")
        Uh = ops.project(duhamel_modes(ops.fft(S), times, lam, cfg.rule), F.fh)
        Uh[0] = 0.0
        Vn = ops.ifft(Uh)
        _check_finite(Vn, f"picard step {k}: duhamel")
        if consts is None or k % 5 == 1:
            consts = measure_constants(f1, [V, Vn], W, eps, times, ops)
        with np.errstate(over="ignore", invalid="ignore"):
            dh2 = _h2_norms(ops.fft(Vn - V), grid)
            inc = _exp_norm(times, dh2, consts.C)
        scale = float(np.max(_h2_norms(Uh, grid)))
        sup_inc = float(np.max(dh2))
        incs.append(inc)
        grew = not math.isfinite(sup_inc)
        if prev_inc is not None and prev_inc > 0:
            ratios.append(inc / prev_inc)
            grew = grew or ratios[-1] >= 1
        # e^{-Ct} can underflow for every stored t > 0 when C is large, so
        # growth of the plain sup-in-time increment counts as well
        if prev_sup is not None and prev_sup > 0:
            grew = grew or sup_inc >= prev_sup
        bad = bad + 1 if grew else 0
        if bad >= 3:
            raise PicardDivergence(
                "picard", f"increments grew for 3 consecutive steps at eps={eps} "
                f"(sup H2 increment {sup_inc:.3g}); data outside the small-amplitude regime, "
                "try a larger c_scale")
        prev_inc, prev_sup = inc, sup_inc
        V = Vn
        log.debug("picard eps=%g k=%d inc=%.3e sup=%.3e", eps, k, inc, sup_inc)
        if inc <= cfg.contraction_tol * scale and sup_inc <= cfg.contraction_tol * scale:
            return PicardResult(Trajectory.from_array(grid, times, V), k, ratios, incs, consts, True)
    raise SolverError("picard", f"no convergence in {cfg.max_picard} steps at eps={eps}")


def solve_parameterized(f1: ScalarField, w: Trajectory, eps: float, cfg: SolverConfig) -> Trajectory:
    return solve_parameterized_detailed(f1, w, eps, cfg).trajectory


# -- w update -----------------------------------------------------------------


@dataclass
class WUpdate:
    w: Trajectory
    raw_residual: float
    residual: float


def update_w_detailed(f1: ScalarField, v: Trajectory, eps: float, cfg: SolverConfig,
                      w: Trajectory | None = None) -> WUpdate:
    """-w,3 = f1,1 + d2 of the Duhamel integral of S(v, w), antidifferentiated in x3.

    The raw x3-mean residual of the right-hand side is reported; the
    compatibility projection used by the Picard loop is then applied and the
    residual that remains is checked against ``w_tol``.
    """
    grid = f1.grid
    if w is None:
        w = Trajectory.from_array(grid, v.times, np.zeros((len(v.times),) + (grid.n,) * 3))
    _validate_inputs(f1, w, v)
    ops = _Ops(grid, cfg.convention)
    F = _f1_data(f1, ops)
    S = _source_terms(F, _stack(v), _stack(w), ops, cfg.transport_sign)[0]
    Uh = duhamel_modes(ops.fft(S), v.times, eps * ops.xi2, cfg.rule)
    k2 = ops.kd[1]
    rhs_raw = 1j * (ops.kd[0] * F.fh)[None] + 1j * k2 * Uh
    _, raw = x3_antiderivative_modes(rhs_raw, grid)
    Uh = ops.project(Uh, F.fh)
    Uh[0] = 0.0
    rhs = 1j * (ops.kd[0] * F.fh)[None] + 1j * k2 * Uh
    anti, resid = x3_antiderivative_modes(rhs, grid)
    ref = max(norm_from_modes(1j * ops.kd[0] * F.fh / grid.n**3, grid, "L2"), 1e-14 * grid.size)
    worst = float(np.max(resid)) / ref
    if worst > cfg.w_tol:
        raise SolverError("update_w", f"compatibility residual {worst:.3e} exceeds w_tol {cfg.w_tol:.1e}")
    Wn = ops.ifft(-anti)
    _check_finite(Wn, "update_w")
    return WUpdate(Trajectory.from_array(grid, v.times, Wn), float(np.max(raw)) / ref, worst)


def update_w(f1: ScalarField, v: Trajectory, eps: float, cfg: SolverConfig,
             w: Trajectory | None = None) -> Trajectory:
    return update_w_detailed(f1, v, eps, cfg, w).w


# -- steady state and the full construction -----------------------------------


def elliptic_residual(f1: ScalarField, v: ScalarField, w: ScalarField, eps: float,
                      cfg: SolverConfig) -> tuple[float, float]:
    """Relative |eps Lap v + S(v, w)|_L2 at one time, and |S|_L2.

    Only the modes left free by the torus projections enter the residual.
    """
    grid = f1.grid
    ops = _Ops(grid, cfg.convention)
    F = _f1_data(f1, ops)
    S = _source_terms(F, v.values[None], w.values[None], ops, cfg.transport_sign)[0][0]
    Sh = np.fft.fftn(S)
    LVh = -eps * ops.xi2 * np.fft.fftn(v.values)
    free = ~ops.alpha3_zero
    r = norm_from_modes(np.where(free, LVh + Sh, 0.0) / grid.n**3, grid, "L2")
    s = norm_from_modes(np.where(free, Sh, 0.0) / grid.n**3, grid, "L2")
    lap = norm_from_modes(LVh / grid.n**3, grid, "L2")
    return r / max(s, lap, 1e-14 * grid.size), s


@dataclass
class DataSolution:
    f1: ScalarField
    f2: ScalarField
    f3: ScalarField
    c_scale: float
    diagnostics: dict
    v_final: ScalarField | None = None
    w_final: ScalarField | None = None

    @property
    def field(self) -> VectorField3:
        return VectorField3.of(self.f1, self.f2, self.f3)


def auto_c(f1: ScalarField, f2: ScalarField | None = None) -> float:
    s = partial(f1, 1)
    if f2 is not None:
        s = s + partial(f2, 2)
    return 2.0 * float(np.max(np.abs(s.values))) + 1.0


def _eps_stage(f1t: ScalarField, eps: float, cfg: SolverConfig, v_warm, w_warm, stage: dict):
    grid = f1t.grid
    times = cfg.times_for(eps)
    for doubling in range(cfg.max_horizon_doublings + 1):
        nt = len(times)
        shape = (nt,) + (grid.n,) * 3
        W = np.zeros(shape) if w_warm is None else np.broadcast_to(w_warm.values, shape).copy()
        w = Trajectory.from_array(grid, times, W)
        v = None if v_warm is None else Trajectory.from_array(
            grid, times, np.broadcast_to(v_warm.values, shape).copy())
        picard_iters, ratios, w_incs, raw_res, post_res = [], [], [], [], []
        consts = None
        for it in range(1, cfg.max_w_iters + 1):
            res = solve_parameterized_detailed(f1t, w, eps, cfg, v0=v)
            v = res.trajectory
            picard_iters.append(res.iterations)
            ratios.extend(res.ratios)
            consts = res.constants
            upd = update_w_detailed(f1t, v, eps, cfg, w)
            raw_res.append(upd.raw_residual)
            post_res.append(upd.residual)
            Wnew = _stack(upd.w)
            Wold = _stack(w)
            dw = float(np.max(_h2_norms(np.fft.fftn(Wnew - Wold, axes=(-3, -2, -1)), grid)))
            w_incs.append(dw)
            scale = float(np.max(_h2_norms(np.fft.fftn(Wnew, axes=(-3, -2, -1)), grid)))
            w = Trajectory.from_array(grid, times, (1 - cfg.theta) * Wold + cfg.theta * Wnew)
            if dw <= cfg.w_tol * scale:
                break
        else:
            raise SolverError("w-loop", f"w did not settle in {cfg.max_w_iters} updates at eps={eps}")
        res = solve_parameterized_detailed(f1t, w, eps, cfg, v0=v)
        v = res.trajectory
        ell, smag = elliptic_residual(f1t, v.final, w.final, eps, cfg)
        stage.update(
            eps=eps, t_max=float(times[-1]), n_steps=len(times) - 1, horizon_doublings=doubling,
            w_iterations=len(w_incs), picard_iterations=picard_iters, picard_ratios=ratios,
            max_picard_ratio=max(ratios) if ratios else 0.0, w_increments=w_incs,
            w_raw_compat_residual=max(raw_res), w_compat_residual=max(post_res),
            elliptic_residual=ell, source_L2=smag, constants=consts.__dict__.copy(),
            v_inf_H2=norm_from_modes(v.final.modes(), grid, "H2"),
        )
        if ell <= cfg.steady_tol:
            return v, w
        log.info("eps=%g: not steady at t=%g (residual %.2e); doubling the horizon", eps, times[-1], ell)
        times = np.linspace(0.0, 2 * times[-1], 2 * (len(times) - 1) + 1)
    raise SolverError("steady-state", f"eps={eps}: elliptic residual {ell:.3e} above {cfg.steady_tol:.1e}")


def solve_data(f1: ScalarField, cfg: SolverConfig) -> DataSolution:
    """Construct (f1, f2, f3) and the blow-up rate c from the data f1."""
    grid = f1.grid
    zero = ScalarField.zeros(grid)
    if not np.any(f1.values):
        return DataSolution(f1, zero, zero, 1.0, {"stages": [], "c_scale": 1.0, "trivial": True}, zero, zero)
    fixed_c = cfg.c_scale != "auto"
    c = float(cfg.c_scale) if fixed_c else auto_c(f1)
    diagnostics: dict = {"c_attempts": []}
    for _attempt in range(3):
        f1t = f1 / c
        stages = []
        v_warm = w_warm = None
        prev = None
        for eps in cfg.eps_schedule:
            stage: dict = {}
            v, w = _eps_stage(f1t, eps, cfg, v_warm, w_warm, stage)
            v_warm, w_warm = v.final, w.final
            if prev is not None:
                d = v_warm - prev
                stage["continuation_H2_distance"] = norm_from_modes(d.modes(), grid, "H2") * c
                stage["continuation_cauchy"] = bool(
                    stage["continuation_H2_distance"] <= 10 * cfg.contraction_tol * max(
                        norm_from_modes(v_warm.modes(), grid, "H2") * c, 1e-300))
            prev = v_warm
            stages.append(stage)
        f2 = v_warm * c
        margin = c + float(np.min(auto_c_field(f1, f2)))
        diagnostics["c_attempts"].append({"c": c, "margin": margin})
        if margin >= cfg.c_margin:
            break
        if fixed_c:
            raise SolverError("c-scale", f"c + f1,1 + f2,2 reaches {margin:.3g} < margin {cfg.c_margin}")
        c = auto_c(f1, f2)
    else:
        raise SolverError("c-scale", "could not satisfy the denominator margin")
    comp = complete_f3(f1, f2)
    f3 = comp.f3
    diagnostics.update(
        stages=stages, c_scale=c, compatibility_residual=comp.compatibility_residual,
        divergence_residual=divergence_residual(VectorField3.of(f1, f2, f3)),
        v_inf_H2_by_eps=[s["v_inf_H2"] * c for s in stages],
        decay_exponent_f2=shell_decay_exponent(f2),
    )
    return DataSolution(f1, f2, f3, c, diagnostics, v_warm * c, w_warm * c)


def auto_c_field(f1: ScalarField, f2: ScalarField) -> np.ndarray:
    return (partial(f1, 1) + partial(f2, 2)).values


# -- seeds and diagnostics ----------------------------------------------------

SEEDS = ("zero", "random", "gaussian")


def make_seed(kind: str, grid: GridSpec, amplitude: float = 1e-2, seed: int = 0,
              band: int = 2) -> ScalarField:
    """Named f1 presets.

    ``random``: real band-limited field with 1 <= |alpha|_inf <= band and
    alpha3 != 0, scaled to the given H2 norm.  ``gaussian``: d3 of a centred
    Gaussian bump (width L/10), scaled the same way; it stands in for
    decaying data on R^3.
    """
    if kind == "zero":
        return ScalarField.zeros(grid)
    if kind == "random":
        if band >= grid.n // 2:
            raise ValueError("grid too coarse for the requested band")
        rng = np.random.default_rng(seed)
        a = np.rint(np.fft.fftfreq(grid.n) * grid.n)
        A1, A2, A3 = np.meshgrid(a, a, a, indexing="ij")
        linf = np.maximum(np.maximum(np.abs(A1), np.abs(A2)), np.abs(A3))
        mask = (linf >= 1) & (linf <= band) & (A3 != 0)
        coef = (rng.standard_normal(mask.shape) + 1j * rng.standard_normal(mask.shape)) * mask
        f = ScalarField(grid, np.fft.ifftn(coef).real)
    elif kind == "gaussian":
        L = grid.period
        x1, x2, x3 = grid.coords()
        s = L / 10
        r2 = (x1 - L / 2) ** 2 + (x2 - L / 2) ** 2 + (x3 - L / 2) ** 2
        bump = np.exp(-r2 / (2 * s * s))
        k3 = grid.derivative_wavenumbers()[2]
        f = ScalarField(grid, np.fft.ifftn(1j * k3 * np.fft.fftn(bump)).real)
    else:
        raise ValueError(f"unknown seed {kind!r}; choose from {SEEDS}")
    h2 = norm_from_modes(f.modes(), grid, "H2")
    return f * (amplitude / h2)


def shell_decay_exponent(f: ScalarField, n_shells: int = 6) -> float:
    """Fitted exponent p in sup_{shell r} (|f| + |Df| + |D2f|) ~ r^-p about the box centre."""
    grid = f.grid
    ops = _Ops(grid, "laplace")
    L = grid.period
    x1, x2, x3 = grid.coords()
    r = np.sqrt((x1 - L / 2) ** 2 + (x2 - L / 2) ** 2 + (x3 - L / 2) ** 2)
    fh = np.fft.fftn(f.values)
    mag = np.abs(f.values)
    for i in (1, 2, 3):
        mag = np.maximum(mag, np.abs(ops.d(fh, i)))
        for j in (1, 2, 3):
            mag = np.maximum(mag, np.abs(ops.ifft(-ops.kd[i - 1] * ops.kd[j - 1] * fh)))
    edges = np.linspace(0.15 * L, 0.5 * L, n_shells + 1)
    rs, sups = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (r >= a) & (r < b)
        if sel.any():
            rs.append(0.5 * (a + b))
            sups.append(max(float(mag[sel].max()), 1e-300))
    slope = np.polyfit(np.log(rs), np.log(sups), 1)[0]
    return float(-slope)
