"""Residual checks for the constructed fields and the 2-D rigidity chain.

All residuals are relative: |residual|_L2 over the largest L2 norm among the
terms that make it up, floored at 1e-14 * (number of grid points).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .divfree import i3_partial
from .grid import Field2D, ScalarField, VectorField3, norm, partial
from .kernels import poisson_grad_convolve
from .leray import assemble_g, contracted_density, grad_table, source_G

# the condition each check instantiates, named in every failed verdict
CONDITIONS = {
    "burgers": "scaled Burgers condition -c f_i + f.grad f_i = G_i",
    "divergence": "incompressibility div f = 0",
    "leray": "Leray density g = sum of gradient products",
    "dataeq": "integro-differential data equation for (f1, f2)",
    "singular_euler": "Euler equations for v = f / (ct - 1)",
    "blowup": "blow-up rate |v(t)| = |f| / (1 - ct)",
}


@dataclass
class CheckEntry:
    name: str
    condition: str
    residual: float
    residual_sup: float
    tolerance: float
    time: float | None = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tolerance)

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else f"FAIL ({CONDITIONS[self.condition]})"


@dataclass
class VerificationReport:
    entries: list = field(default_factory=list)
    header: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)

    def add(self, entry) -> None:
        if isinstance(entry, CheckEntry):
            entry = [entry]
        for e in entry:
            key = (e.name, e.time)
            if any((x.name, x.time) == key for x in self.entries):
                raise ValueError(f"check {key} already present")
            self.entries.append(e)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_text(self) -> str:
        out = []
        for k in sorted(self.header):
            out.append(f"# {k} = {self.header[k]}")
        for e in self.entries:
            out.append(f"[check {e.name}]")
            if e.time is not None:
                out.append(f"time = {e.time:.12g}")
            out.append(f"residual_L2_rel = {e.residual:.6e}")
            out.append(f"residual_sup_rel = {e.residual_sup:.6e}")
            out.append(f"tolerance = {e.tolerance:.1e}")
            for k in sorted(e.details):
                v = e.details[k]
                out.append(f"{k} = {v:.6e}" if isinstance(v, float) else f"{k} = {v}")
            out.append(f"verdict = {e.verdict}")
            out.append("")
        for name, curve in self.curves.items():
            out.append(f"[curve {name}]")
            for k in sorted(curve):
                vals = curve[k]
                if isinstance(vals, (list, tuple, np.ndarray)):
                    out.append(f"{k} = " + ", ".join(f"{x:.12e}" for x in vals))
                else:
                    out.append(f"{k} = {vals:.12e}")
            out.append("")
        out.append(f"overall = {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(out) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check", "time", "residual"])
        for e in self.entries:
            w.writerow([e.name, "" if e.time is None else f"{e.time:.12g}", f"{e.residual:.6e}"])
        return buf.getvalue()


def _floor(grid) -> float:
    return 1e-14 * grid.size


def _rel(res: ScalarField, *terms: ScalarField) -> tuple[float, float]:
    g = res.grid
    den2 = max([norm(t, "L2") for t in terms] + [_floor(g)])
    dens = max([norm(t, "SUP") for t in terms] + [_floor(g)])
    return norm(res, "L2") / den2, norm(res, "SUP") / dens


def _transport(f: VectorField3, d, i: int) -> ScalarField:
    return f[1] * d[i, 1] + f[2] * d[i, 2] + f[3] * d[i, 3]


def burgers_residuals(f: VectorField3, G, c: float) -> list[tuple[ScalarField, tuple]]:
    d = grad_table(f)
    out = []
    for i in (1, 2, 3):
        lin, tr = f[i] * (-c), _transport(f, d, i)
        out.append((lin + tr - G[i - 1], (lin, tr, G[i - 1])))
    return out


def check_burgers_condition(f: VectorField3, G, c: float = 1.0, tol: float = 1e-4) -> CheckEntry:
    """-c f_i + sum_j f_j f_i,j - G_i for each component; reports the worst."""
    if not c > 0:
        raise ValueError("c must be positive")
    rels = [_rel(r, *terms) for r, terms in burgers_residuals(f, G, c)]
    details = {f"component_{i + 1}": rels[i][0] for i in range(3)}
    return CheckEntry("burgers", "burgers", max(r[0] for r in rels), max(r[1] for r in rels), tol,
                      details=details)


def leray_terms(f: VectorField3) -> list[ScalarField]:
    d = grad_table(f)
    return [d[1, 1] ** 2, d[2, 2] ** 2, d[3, 3] ** 2, d[1, 2] * d[2, 1], d[1, 3] * d[3, 1], d[2, 3] * d[3, 2]]


def check_leray_condition(f: VectorField3, g: ScalarField, tol: float = 1e-4) -> CheckEntry:
    """g against the six-term density built with f3,3 itself (not substituted)."""
    terms = leray_terms(f)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    res = total - g
    den = max(norm(g, "L2"), _floor(g.grid))
    d = grad_table(f)
    sub = d[3, 3] + d[1, 1] + d[2, 2]
    sub_rel = _rel(sub, d[3, 3], d[1, 1] + d[2, 2])[0]
    return CheckEntry("leray", "leray", norm(res, "L2") / den,
                      norm(res, "SUP") / max(norm(g, "SUP"), _floor(g.grid)), tol,
                      details={"substitution_residual": sub_rel})


def dataeq_sides(f1: ScalarField, f2: ScalarField, c: float = 1.0, convention: str = "laplace"):
    """(LHS, RHS) of the data equation with I3-derivatives from the completion."""
    f11, f12, f13 = partial(f1, 1), partial(f1, 2), partial(f1, 3)
    f21, f22, f23 = partial(f2, 1), partial(f2, 2), partial(f2, 3)
    i31, i32 = i3_partial(f1, f2, 1), i3_partial(f1, f2, 2)
    g = f11**2 + f22**2 + (f11 + f22) ** 2 + f12 * f21 + f13 * i31 + f23 * i32
    G1 = poisson_grad_convolve(g, 1, convention)
    G2 = poisson_grad_convolve(g, 2, convention)
    lhs = (f1 * (-c) + f1 * f11 + f2 * f12 - G1) * f23
    rhs = (f2 * (-c) + f1 * f21 + f2 * f22 - G2) * f13
    return lhs, rhs


def check_dataeq(f1: ScalarField, f2: ScalarField, c: float = 1.0, convention: str = "laplace",
                 tol: float = 1e-4) -> CheckEntry:
    lhs, rhs = dataeq_sides(f1, f2, c, convention)
    r2, rs = _rel(lhs - rhs, lhs, rhs)
    return CheckEntry("dataeq", "dataeq", r2, rs, tol,
                      details={"lhs_L2": norm(lhs, "L2"), "rhs_L2": norm(rhs, "L2")})


def check_divergence(f: VectorField3, tol: float = 1e-8) -> CheckEntry:
    d = grad_table(f)
    div = d[1, 1] + d[2, 2] + d[3, 3]
    r2, rs = _rel(div, d[1, 1], d[2, 2], d[3, 3])
    return CheckEntry("divergence", "divergence", r2, rs, tol)


def leray_sources(f: VectorField3, convention: str = "laplace") -> list[ScalarField]:
    """K,i * sum_{j,k} f_k,j f_j,k for i = 1..3."""
    dens = contracted_density(f)
    return [poisson_grad_convolve(dens, i, convention) for i in (1, 2, 3)]


def singular_euler_fields(f: VectorField3, c: float, t: float, G=None,
                          convention: str = "laplace") -> list[tuple[ScalarField, tuple]]:
    """Per component: (d_t v_i + v . grad v_i - K,i * sum v_k,j v_j,k, its terms) at time t.

    ``G`` may carry the precomputed sources of f itself; they scale by 1/(ct - 1)^2.
    """
    if G is None:
        G = leray_sources(f, convention)
    s = c * t - 1.0
    v = f.scaled(1.0 / s)
    d = grad_table(v)
    out = []
    for i in (1, 2, 3):
        dt_v = f[i] * (-c / s**2)
        tr = _transport(v, d, i)
        Gv = G[i - 1] * (1.0 / s**2)
        out.append((dt_v + tr - Gv, (dt_v, tr, Gv)))
    return out


def check_singular_euler(f: VectorField3, c: float, times, tol: float = 1e-4,
                         convention: str = "laplace") -> list[CheckEntry]:
    """Euler residual of v = f / (ct - 1) at each time, raw and collapsed by (ct - 1)^2.

    The verdict uses the collapsed residual, which the ansatz makes time independent.
    """
    if not c > 0:
        raise ValueError("c must be positive")
    times = [float(t) for t in times]
    if any(t >= 1.0 / c for t in times):
        raise ValueError(f"times must lie below the blow-up time 1/c = {1.0 / c}")
    G = leray_sources(f, convention)
    entries = []
    for t in times:
        s2 = (c * t - 1.0) ** 2
        comps = singular_euler_fields(f, c, t, G, convention)
        raw = [_rel(r, *terms) for r, terms in comps]
        collapsed = [(r * s2, _rel(r * s2, *(x * s2 for x in terms))) for r, terms in comps]
        col_abs = math.sqrt(sum(norm(x[0], "L2") ** 2 for x in collapsed))
        entries.append(CheckEntry(
            "singular_euler", "singular_euler", max(x[1][0] for x in collapsed),
            max(x[1][1] for x in collapsed), tol, time=t,
            details={"raw_residual": max(x[0] for x in raw), "collapsed_abs_L2": col_abs}))
    return entries


@dataclass
class BlowupCurves:
    times: np.ndarray
    c: float
    norms: dict  # (component, kind) -> array over times
    predicted: dict
    slopes: dict

    def max_relative_deviation(self) -> float:
        dev = 0.0
        for key, vals in self.norms.items():
            pred = self.predicted[key]
            with np.errstate(invalid="ignore", divide="ignore"):
                rel = np.abs(vals - pred) / np.maximum(np.abs(pred), 1e-300)
            dev = max(dev, float(np.max(np.where(pred == 0, np.abs(vals), rel))))
        return dev

    def max_slope_error(self) -> float:
        return max((abs(s + 1.0) for s in self.slopes.values() if s is not None), default=0.0)


def blowup_diagnostics(f: VectorField3, c: float, times) -> BlowupCurves:
    """Norms of v(t) = f / (ct - 1) and the log-log slope against (1 - ct)."""
    times = np.asarray(times, dtype=np.float64)
    if np.any(times >= 1.0 / c):
        raise ValueError("times must lie below 1/c")
    norms, predicted, slopes = {}, {}, {}
    for i in (1, 2, 3):
        for kind in ("L2", "H1", "H2", "SUP"):
            base = norm(f[i], kind)
            vals = np.array([norm(f[i] * (1.0 / (c * t - 1.0)), kind) for t in times])
            norms[i, kind] = vals
            predicted[i, kind] = base / (1.0 - c * times)
            if base > 0 and len(times) >= 2:
                slopes[i, kind] = float(np.polyfit(np.log(1.0 - c * times), np.log(vals), 1)[0])
            else:
                slopes[i, kind] = None
    return BlowupCurves(times, c, norms, predicted, slopes)


# -- 2-D rigidity chain --------------------------------------------------------

CHAIN = ("div", "quadratic relation", "determinant", "linear dependence", "lambda = -1",
         "burgers relation", "f1 + f2 = 0", "final sup")


@dataclass
class RigidityReport:
    residuals: dict
    lam: float
    sup: float
    verdict: str
    tol: float
    sup_tol: float

    @property
    def is_zero(self) -> bool:
        return self.verdict == "ZERO"

    def to_text(self) -> str:
        lines = ["[rigidity2d]"]
        for step in CHAIN[:-1]:
            lines.append(f"{step} = {self.residuals[step]:.6e}")
        lines.append(f"lambda = {self.lam:.12g}")
        lines.append(f"sup|f| = {self.sup:.6e}")
        lines.append(f"tolerance = {self.tol:.1e}")
        lines.append(f"sup_tolerance = {self.sup_tol:.1e}")
        lines.append(f"verdict = {self.verdict}")
        return "\n".join(lines) + "\n"


def _rel2(res: np.ndarray, floor: float, *terms: np.ndarray) -> float:
    den = max([float(np.sqrt(np.mean(t**2))) for t in terms] + [floor])
    return float(np.sqrt(np.mean(res**2))) / den


def rigidity_2d(f1: Field2D, f2: Field2D, tol: float = 1e-8, sup_tol: float = 1e-6) -> RigidityReport:
    """Evaluate each relation of the 2-D uniqueness argument in order.

    Steps: divergence, quadratic relation f11^2 + 2 f12 f21 + f22^2,
    determinant f11 f22 - f12 f21, linear dependence (f11, f12) = lambda
    (f21, f22) with lambda fitted by least squares, lambda = -1, the Burgers
    relation -f_i + f_j f_i,j, f1 + f2 = 0, and finally sup|f|.
    """
    if f1.n != f2.n or f1.period != f2.period:
        raise ValueError("f1 and f2 must share one 2-D grid")
    floor = 1e-14 * f1.n**2
    a, b = f1.values, f2.values
    f11, f12 = f1.partial(1), f1.partial(2)
    f21, f22 = f2.partial(1), f2.partial(2)
    r = {}
    r["div"] = _rel2(f11 + f22, floor, f11, f22)
    r["quadratic relation"] = _rel2(f11**2 + 2 * f12 * f21 + f22**2, floor, f11**2, 2 * f12 * f21, f22**2)
    r["determinant"] = _rel2(f11 * f22 - f12 * f21, floor, f11 * f22, f12 * f21)
    ga = np.concatenate([f11.ravel(), f12.ravel()])
    gb = np.concatenate([f21.ravel(), f22.ravel()])
    na, nb = float(ga @ ga), float(gb @ gb)
    scale_floor = floor**2 * ga.size
    if nb <= scale_floor:
        lam = -1.0 if na <= scale_floor else math.nan
        r["linear dependence"] = 0.0 if na <= scale_floor else 1.0
    else:
        lam = float(ga @ gb) / nb
        r["linear dependence"] = _rel2(ga - lam * gb, floor, ga, lam * gb)
    r["lambda = -1"] = abs(lam + 1.0) if math.isfinite(lam) else math.inf
    b1 = -a + a * f11 + b * f12
    b2 = -b + a * f21 + b * f22
    r["burgers relation"] = max(_rel2(b1, floor, a, a * f11 + b * f12), _rel2(b2, floor, b, a * f21 + b * f22))
    r["f1 + f2 = 0"] = _rel2(a + b, floor, a, b)
    sup = float(max(np.max(np.abs(a)), np.max(np.abs(b))))
    verdict = "ZERO"
    for step in CHAIN[:-1]:
        if not r[step] <= tol:
            verdict = f"VIOLATES({step})"
            break
    else:
        if not sup <= sup_tol:
            verdict = "VIOLATES(final sup)"
    return RigidityReport(r, lam, sup, verdict, tol, sup_tol)


def verify_solution(f: VectorField3, c: float, times, convention: str = "laplace",
                    tol: float = 1e-4, include_dataeq: bool = True) -> VerificationReport:
    """Run every check on a triple: conditions, data equation, Euler residual, blow-up curves.

    The Burgers condition uses G_i = K,i * g with the six-term density g; the
    Euler check uses the full contraction sum_{j,k} f_k,j f_j,k.
    """
    rep = VerificationReport(header={"c": f"{c:.12g}", "poisson_convention": convention,
                                     "grid": f"{f.grid.n}^3 period {f.grid.period!r}"})
    rep.add(check_divergence(f))
    g = assemble_g(f, div_tol=math.inf)
    G = [source_G(g, i, convention) for i in (1, 2, 3)]
    rep.add(check_leray_condition(f, g, tol))
    rep.add(check_burgers_condition(f, G, c, tol))
    if include_dataeq:
        rep.add(check_dataeq(f[1], f[2], c, convention, tol))
    rep.add(check_singular_euler(f, c, times, tol, convention))
    curves = blowup_diagnostics(f, c, times)
    rep.curves["blowup"] = {
        "times": list(curves.times),
        "max_relative_deviation": curves.max_relative_deviation(),
        "max_slope_error": curves.max_slope_error(),
    }
    return rep

