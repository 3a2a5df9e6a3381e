import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from singular_euler.divfree import complete_f3
from singular_euler.grid import GridSpec, ScalarField, VectorField3, make_field, norm, partial
from singular_euler.leray import (
    LerayError,
    ModeSet,
    assemble_g,
    contracted_density,
    mode_relation_residual,
    source_G,
)

from conftest import bandlimited, divfree_field

TWO_PI = 2 * np.pi
G16 = GridSpec(16)


def _triple(seed, grid=G16):
    f1 = bandlimited(grid, 2 * seed, alpha3_nonzero=True)
    f2 = bandlimited(grid, 2 * seed + 1, alpha3_nonzero=True)
    return VectorField3.of(f1, f2, complete_f3(f1, f2).f3)


def test_g_of_zero():
    z = ScalarField.zeros(G16)
    assert not np.any(assemble_g(VectorField3.of(z, z, z)).values)


def test_g_hand_example():
    f1 = make_field(G16, lambda x, y, z: np.sin(TWO_PI * y))
    f2 = make_field(G16, lambda x, y, z: np.sin(TWO_PI * x))
    g = assemble_g(VectorField3.of(f1, f2, ScalarField.zeros(G16)))
    x1, x2, _ = G16.coords()
    np.testing.assert_allclose(g.values, 4 * np.pi**2 * np.cos(TWO_PI * x1) * np.cos(TWO_PI * x2), atol=1e-10)


def test_g_rejects_divergent_field():
    f1 = make_field(G16, lambda x, y, z: np.sin(TWO_PI * x))
    z = ScalarField.zeros(G16)
    with pytest.raises(LerayError):
        assemble_g(VectorField3.of(f1, z, z))


@given(st.integers(0, 10_000))
def test_g_term_by_term(seed):
    f = _triple(seed)
    # independent spectral derivatives, Nyquist kept (the band never reaches it)
    k = 2 * np.pi * np.fft.fftfreq(16, d=1 / 16)
    kk = [k[:, None, None], k[None, :, None], k[None, None, :]]

    def der(a, j):
        return np.fft.ifftn(1j * kk[j - 1] * np.fft.fftn(a)).real

    D = {(i, j): der(f[i].values, j) for i in (1, 2, 3) for j in (1, 2, 3)}
    want = (D[1, 1] ** 2 + D[2, 2] ** 2 + (D[1, 1] + D[2, 2]) ** 2
            + D[1, 2] * D[2, 1] + D[1, 3] * D[3, 1] + D[2, 3] * D[3, 2])
    got = assemble_g(f).values
    assert np.max(np.abs(got - want)) <= 1e-12 * np.max(np.abs(want))


@given(st.integers(0, 10_000))
def test_g_lower_bound(seed):
    f = _triple(seed)
    d = {(i, j): partial(f[i], j).values for i in (1, 2, 3) for j in (1, 2, 3)}
    lower = (d[1, 1] ** 2 + d[2, 2] ** 2 + (d[1, 1] + d[2, 2]) ** 2
             - np.abs(d[1, 2] * d[2, 1]) - np.abs(d[1, 3] * d[3, 1]) - np.abs(d[2, 3] * d[3, 2]))
    g = assemble_g(f).values
    assert np.all(g >= lower - 1e-12 * np.max(np.abs(g)))


def test_source_examples():
    z = ScalarField.zeros(G16)
    assert not np.any(source_G(z, 1).values)
    cos1 = make_field(G16, lambda x, y, z: np.cos(TWO_PI * x))
    assert np.max(np.abs(source_G(cos1, 2).values)) < 1e-15
    g = make_field(G16, lambda x, y, z: 4 * np.pi**2 * np.cos(TWO_PI * x) * np.cos(TWO_PI * y))
    x1, x2, _ = G16.coords()
    # modes (+-1, +-1, 0), |xi|^2 = 8 pi^2: d1 Lap^-1 g = pi sin(2 pi x1) cos(2 pi x2)
    np.testing.assert_allclose(source_G(g, 1).values, np.pi * np.sin(TWO_PI * x1) * np.cos(TWO_PI * x2), atol=1e-13)


@given(st.integers(0, 10_000))
def test_sources_divergence_and_linearity(seed):
    f = _triple(seed)
    g = assemble_g(f)
    total = sum(partial(source_G(g, i), i) for i in (1, 2, 3))
    assert norm(total - (g - g.mean()), "L2") <= 1e-10 * norm(g - g.mean(), "L2")
    h = bandlimited(G16, seed + 99)
    lhs = source_G(g * 2.0 + h * 3.0, 1)
    rhs = source_G(g, 1) * 2.0 + source_G(h, 1) * 3.0
    assert np.max(np.abs(lhs.values - rhs.values)) <= 1e-13 * np.max(np.abs(rhs.values))


@given(st.integers(0, 10_000))
def test_contraction_is_divergence_of_transport(seed):
    f = divfree_field(GridSpec(16), seed)
    tr = [sum(f[j] * partial(f[i], j) for j in (1, 2, 3)) for i in (1, 2, 3)]
    div = sum(partial(tr[i - 1], i) for i in (1, 2, 3))
    dens = contracted_density(f)
    assert norm(div - dens, "L2") <= 1e-10 * norm(dens, "L2")


# -- mode relation -----------------------------------------------------------


def test_mode_residual_zero():
    ms = [ModeSet.zeros(2) for _ in range(3)]
    assert mode_relation_residual(ms) == 0.0


def test_mode_residual_single_mode():
    a = 0.3 + 0.4j
    m1 = ModeSet.zeros(2)
    m1.coefficients[1 + 2, 0 + 2, 0 + 2] = a
    ms = [m1, ModeSet.zeros(2), ModeSet.zeros(2)]
    # alpha = k gives |a|^2; alpha = 2k gives |a * 1 * a|^2
    assert mode_relation_residual(ms) == pytest.approx(math.sqrt(abs(a) ** 2 + abs(a * a) ** 2), rel=1e-14)
    # alpha = 2k lies outside |alpha| <= K only when K = 1
    m1b = ModeSet.zeros(1)
    m1b.coefficients[2, 1, 1] = a
    trunc = mode_relation_residual([m1b, ModeSet.zeros(1), ModeSet.zeros(1)], alpha_range="truncated")
    assert trunc == pytest.approx(abs(a), rel=1e-14)


@pytest.mark.parametrize("seed", [0, 1])
def test_mode_residual_parseval(seed):
    K, L = 2, 1.5
    grid = GridSpec(12, L)
    f = divfree_field(grid, seed, band=1)
    f = VectorField3(tuple(c * 0.3 for c in f))
    res = [-f[i] + sum(f[j] * partial(f[i], j) for j in (1, 2, 3)) for i in (1, 2, 3)]
    grid_norm = math.sqrt(sum(norm(r, "L2") ** 2 for r in res)) / L**1.5
    ms = [ModeSet.from_field(c, K) for c in f]
    assert mode_relation_residual(ms, convention="physical") == pytest.approx(grid_norm, rel=1e-8)


def test_modeset_roundtrip(tmp_path):
    g = GridSpec(8, 2.0)
    f = bandlimited(g, 3)
    ms = ModeSet.from_field(f, 2)
    assert ms.hermitian_defect() < 1e-15
    ms.save(tmp_path / "m.txt")
    back = ModeSet.load(tmp_path / "m.txt")
    assert back.K == 2 and back.period == 2.0
    np.testing.assert_array_equal(back.coefficients, ms.coefficients)
    np.testing.assert_allclose(back.to_field(g).values, f.values, atol=1e-14)
