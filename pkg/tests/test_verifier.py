import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from singular_euler.divfree import complete_f3
from singular_euler.grid import Field2D, GridSpec, ScalarField, VectorField3, norm, partial
from singular_euler.leray import assemble_g, grad_table, source_G
from singular_euler.verifier import (
    CHAIN,
    CheckEntry,
    VerificationReport,
    blowup_diagnostics,
    burgers_residuals,
    check_burgers_condition,
    check_dataeq,
    check_divergence,
    check_leray_condition,
    check_singular_euler,
    dataeq_sides,
    rigidity_2d,
    singular_euler_fields,
    verify_solution,
)

from conftest import bandlimited, divfree_field

TWO_PI = 2 * np.pi
G16 = GridSpec(16)


def _zero3(grid=G16):
    z = ScalarField.zeros(grid)
    return VectorField3.of(z, z, z)


def _triple(seed, grid=G16, amp=1.0):
    f1 = bandlimited(grid, 2 * seed, amplitude=amp, alpha3_nonzero=True)
    f2 = bandlimited(grid, 2 * seed + 1, amplitude=amp, alpha3_nonzero=True)
    return VectorField3.of(f1, f2, complete_f3(f1, f2).f3)


# -- Burgers condition ------------------------------------------------------------


def test_burgers_zero():
    z = ScalarField.zeros(G16)
    e = check_burgers_condition(_zero3(), [z, z, z])
    assert e.residual == 0.0 and e.passed


@pytest.mark.parametrize("c", [1.0, 2.5])
def test_burgers_constructed_identity(c):
    f = _triple(3)
    d = grad_table(f)
    G = [sum((f[j] * d[i, j] for j in (1, 2, 3)), f[i] * (-c)) for i in (1, 2, 3)]
    e = check_burgers_condition(f, G, c)
    assert e.residual <= 1e-12
    with pytest.raises(ValueError):
        check_burgers_condition(f, G, 0.0)


@given(st.integers(0, 10_000), st.floats(0.5, 4.0))
def test_burgers_energy_identity(seed, c):
    # for divergence-free f and gradient G: <f, -c f + f.grad f - G> = -c |f|^2
    f = divfree_field(G16, seed, band=2)
    g = assemble_g(f)
    G = [source_G(g, i) for i in (1, 2, 3)]
    res = burgers_residuals(f, G, c)
    h3 = G16.spacing**3
    inner = sum(float(np.sum(f[i].values * res[i - 1][0].values)) * h3 for i in (1, 2, 3))
    f2 = sum(norm(f[i], "L2") ** 2 for i in (1, 2, 3))
    assert inner == pytest.approx(-c * f2, rel=1e-10)


# -- Leray density ------------------------------------------------------------------


def test_leray_zero_and_definitional():
    z = ScalarField.zeros(G16)
    assert check_leray_condition(_zero3(), z).residual == 0.0
    f = _triple(1)
    e = check_leray_condition(f, assemble_g(f))
    assert e.residual <= 1e-12
    assert e.details["substitution_residual"] <= 1e-12


@pytest.mark.parametrize("delta", [1e-6, 1e-3])
def test_leray_injected_error(delta):
    f = _triple(2)
    g = assemble_g(f)
    bump = ScalarField(G16, np.sin(TWO_PI * G16.coords()[0]))
    e = check_leray_condition(f, g + bump * delta)
    want = delta * norm(bump, "L2") / norm(g + bump * delta, "L2")
    assert e.residual == pytest.approx(want, rel=1e-8)


# -- data equation -----------------------------------------------------------------


def test_dataeq_zero():
    z = ScalarField.zeros(G16)
    assert check_dataeq(z, z).residual == 0.0


def test_dataeq_structural_zero():
    # x3-independent stream-function pair: both sides carry an x3-derivative factor
    x1, x2, _ = G16.coords()
    psi = ScalarField(G16, np.sin(TWO_PI * x1) * np.cos(TWO_PI * 2 * x2))
    f1, f2 = partial(psi, 2), partial(psi, 1) * -1.0
    lhs, rhs = dataeq_sides(f1, f2)
    assert not np.any(lhs.values) and not np.any(rhs.values)


@given(st.integers(0, 10_000), st.floats(0.5, 3.0))
def test_dataeq_swap_symmetry(seed, c):
    f = _triple(seed, amp=0.3)
    sw = lambda s: ScalarField(G16, np.swapaxes(s.values, 0, 1))
    a = check_dataeq(f[1], f[2], c)
    b = check_dataeq(sw(f[2]), sw(f[1]), c)
    assert b.residual == pytest.approx(a.residual, rel=1e-10)


# -- singular Euler residual and blow-up --------------------------------------------


def test_singular_euler_zero():
    for e in check_singular_euler(_zero3(), 1.0, [0.0, 0.5]):
        assert e.residual == 0.0


@given(st.integers(0, 10_000), st.floats(0.5, 3.0))
def test_singular_euler_collapsed_is_time_independent(seed, c):
    f = _triple(seed)
    a, b = check_singular_euler(f, c, [0.2 / c, 0.8 / c])
    assert b.residual == pytest.approx(a.residual, rel=1e-10)
    assert b.details["collapsed_abs_L2"] == pytest.approx(a.details["collapsed_abs_L2"], rel=1e-10)


def test_singular_euler_rejects_late_times():
    with pytest.raises(ValueError):
        check_singular_euler(_triple(0), 2.0, [0.0, 0.5])


@given(st.integers(0, 10_000), st.floats(0.0, 0.95))
def test_residual_linkage(seed, s):
    c = 1.7
    t = s / c
    f = _triple(seed)
    g = assemble_g(f)
    G = [source_G(g, i) for i in (1, 2, 3)]
    euler = singular_euler_fields(f, c, t, G)
    burg = burgers_residuals(f, G, c)
    scale = (c * t - 1.0) ** 2
    for (re, _), (rb, _) in zip(euler, burg):
        want = rb.values / scale
        assert np.max(np.abs(re.values - want)) <= 1e-10 * np.max(np.abs(want))


def test_blowup_exact_scaling():
    f = _triple(4)
    c = 2.0
    curves = blowup_diagnostics(f, c, [0.0, 0.25, 0.45])
    assert curves.max_relative_deviation() <= 1e-12
    steep = blowup_diagnostics(f, c, np.array([0.5, 0.9, 0.99]) / c)
    assert steep.max_slope_error() <= 1e-6
    for i in (1, 2, 3):
        np.testing.assert_allclose(steep.norms[i, "SUP"], norm(f[i], "SUP") / (1 - np.array([0.5, 0.9, 0.99])),
                                   rtol=1e-13)
    with pytest.raises(ValueError):
        blowup_diagnostics(f, c, [0.6])


def test_divergence_check():
    assert check_divergence(_triple(5)).residual <= 1e-10
    f = _triple(5)
    bad = VectorField3.of(f[1], f[2], f[3] * 2.0)
    assert not check_divergence(bad).passed


# -- 2-D rigidity ---------------------------------------------------------------------


def test_rigidity_zero():
    z = Field2D(np.zeros((32, 32)), 1.0)
    rep = rigidity_2d(z, z)
    assert rep.verdict == "ZERO" and rep.is_zero
    assert all(rep.residuals[s] == 0.0 for s in CHAIN[:-1])


def test_rigidity_streamfunction_pair():
    f1 = Field2D.sample(32, 1.0, lambda x, y: TWO_PI * np.sin(TWO_PI * x) * np.cos(TWO_PI * y))
    f2 = Field2D.sample(32, 1.0, lambda x, y: -TWO_PI * np.cos(TWO_PI * x) * np.sin(TWO_PI * y))
    rep = rigidity_2d(f1, f2)
    assert rep.residuals["div"] <= 1e-12
    assert rep.verdict == "VIOLATES(quadratic relation)"


def test_rigidity_shear_needs_burgers_step():
    # (phi, -phi)(x1 + x2) satisfies every algebraic relation
    phi = lambda x, y: np.sin(TWO_PI * (x + y))
    f1 = Field2D.sample(32, 1.0, phi)
    f2 = Field2D.sample(32, 1.0, lambda x, y: -phi(x, y))
    rep = rigidity_2d(f1, f2)
    assert rep.lam == pytest.approx(-1.0)
    assert rep.verdict == "VIOLATES(burgers relation)"


def _stream_pair(seed, n=32, band=3, amp=1.0):
    rng = np.random.default_rng(seed)
    a = np.rint(np.fft.fftfreq(n) * n)
    A1, A2 = np.meshgrid(a, a, indexing="ij")
    mask = (np.maximum(np.abs(A1), np.abs(A2)) <= band) & ((A1 != 0) | (A2 != 0))
    psi = np.fft.ifft2((rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * mask).real
    psi = Field2D(psi * amp / max(np.max(np.abs(psi)), 1e-300), 1.0)
    return Field2D(psi.partial(2), 1.0), Field2D(-psi.partial(1), 1.0)


@given(st.integers(0, 100_000), st.floats(1e-6, 1e3))
def test_rigidity_random_pairs_violate(seed, amp):
    f1, f2 = _stream_pair(seed, amp=amp)
    rep = rigidity_2d(f1, f2)
    assert rep.verdict.startswith("VIOLATES")
    assert rep.residuals["div"] <= 1e-10


@given(st.floats(-10, 10).filter(lambda a: abs(a) > 1e-3), st.floats(-10, 10))
def test_rigidity_constants_and_shears(a, b):
    const = Field2D(np.full((16, 16), a), 1.0)
    assert rigidity_2d(const, Field2D(np.full((16, 16), b), 1.0)).verdict.startswith("VIOLATES")
    shear = Field2D.sample(16, 1.0, lambda x, y: a * np.cos(TWO_PI * (x + y)))
    neg = Field2D(-shear.values, 1.0)
    assert rigidity_2d(shear, neg).verdict.startswith("VIOLATES")


def test_rigidity_grid_mismatch():
    with pytest.raises(ValueError):
        rigidity_2d(Field2D(np.zeros((8, 8)), 1.0), Field2D(np.zeros((16, 16)), 1.0))


# -- reports --------------------------------------------------------------------------


def test_report_text_and_csv():
    f = _triple(6, amp=0.1)
    rep = verify_solution(f, 1.0, [0.0, 0.5])
    names = [e.name for e in rep.entries]
    assert names[:4] == ["divergence", "leray", "burgers", "dataeq"]
    text = rep.to_text()
    assert text == verify_solution(f, 1.0, [0.0, 0.5]).to_text()
    assert text.count("verdict = ") == len(rep.entries)
    assert "FAIL (scaled Burgers condition" in text
    assert text.rstrip().endswith("overall = FAIL")
    rows = rep.to_csv().splitlines()
    assert rows[0] == "check,time,residual" and len(rows) == len(rep.entries) + 1
    with pytest.raises(ValueError):
        rep.add(rep.entries[0])


def test_check_entry_verdict():
    e = CheckEntry("x", "blowup", 1e-5, 1e-5, 1e-4)
    assert e.passed and e.verdict == "PASS"
    e = CheckEntry("x", "blowup", math.nan, math.nan, 1e-4)
    assert not e.passed and e.verdict.startswith("FAIL (blow-up rate")
    assert VerificationReport().passed
