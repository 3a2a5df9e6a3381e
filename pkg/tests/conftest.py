import numpy as np
from hypothesis import HealthCheck, settings

from singular_euler.grid import GridSpec, ScalarField, VectorField3

settings.register_profile(
    "default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def bandlimited(grid: GridSpec, seed: int, band: int = 2, amplitude: float = 1.0,
                alpha3_nonzero: bool = False) -> ScalarField:
    """Real random field with modes 1 <= |alpha|_inf <= band."""
    rng = np.random.default_rng(seed)
    a = np.rint(np.fft.fftfreq(grid.n) * grid.n)
    A1, A2, A3 = np.meshgrid(a, a, a, indexing="ij")
    linf = np.maximum(np.maximum(np.abs(A1), np.abs(A2)), np.abs(A3))
    mask = (linf >= 1) & (linf <= band)
    if alpha3_nonzero:
        mask &= A3 != 0
    coef = (rng.standard_normal(mask.shape) + 1j * rng.standard_normal(mask.shape)) * mask
    vals = np.fft.ifftn(coef).real
    return ScalarField(grid, amplitude * vals / np.max(np.abs(vals)))


def divfree_field(grid: GridSpec, seed: int, band: int = 2) -> VectorField3:
    """curl of a random band-limited vector potential."""
    from singular_euler.grid import partial

    a = [bandlimited(grid, seed * 3 + k, band) for k in range(3)]
    return VectorField3.of(
        partial(a[2], 2) - partial(a[1], 3),
        partial(a[0], 3) - partial(a[2], 1),
        partial(a[1], 1) - partial(a[0], 2),
    )


def rel_err(a, b) -> float:
    a = np.asarray(getattr(a, "values", a))
    b = np.asarray(getattr(b, "values", b))
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
