"""Periodic 3-D grids, sampled fields, spectral derivatives and norms.

Fields live on the torus [0, L)^3 sampled at ``n`` points per axis.  Arrays are
indexed ``values[i, j, k]`` with ``i`` along x1; the flat/on-disk ordering is
x-fastest (Fortran order of that array).

Fourier coefficients use the convention ``u(x) = sum_a u_a exp(i xi_a . x)``
with ``xi_a = 2 pi a / L``, so ``u_a = fftn(values) / n**3``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

import numpy as np


class FieldError(ValueError):
    """Invalid field construction or incompatible grids."""


@dataclass(frozen=True)
class GridSpec:
    n: int
    period: float = 1.0

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 4 or self.n % 2:
            raise FieldError(f"n_per_axis must be an even integer >= 4, got {self.n!r}")
        if not (self.period > 0 and math.isfinite(self.period)):
            raise FieldError(f"period must be positive and finite, got {self.period!r}")

    @property
    def spacing(self) -> float:
        return self.period / self.n

    @property
    def size(self) -> int:
        return self.n**3

    def axis(self) -> np.ndarray:
        return np.arange(self.n) * self.spacing

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = self.axis()
        return tuple(np.meshgrid(x, x, x, indexing="ij"))

    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Angular wavenumbers, broadcastable to (n, n, n). Nyquist kept."""
        return _wavenumbers(self.n, self.period, False)

    def derivative_wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Wavenumbers used for first derivatives: Nyquist entry set to 0."""
        return _wavenumbers(self.n, self.period, True)

    def xi2(self) -> np.ndarray:
        """|xi|^2 on the full (n, n, n) mode array, Nyquist included."""
        k1, k2, k3 = self.wavenumbers()
        return k1**2 + k2**2 + k3**2

    def mode_indices(self) -> np.ndarray:
        """Integer mode numbers per axis in FFT order."""
        return np.rint(np.fft.fftfreq(self.n) * self.n).astype(int)


@functools.lru_cache(maxsize=32)
def _wavenumbers(n: int, period: float, zero_nyquist: bool):
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=period / n)
    if zero_nyquist:
        k = k.copy()
        k[n // 2] = 0.0
    k.setflags(write=False)
    return (k[:, None, None], k[None, :, None], k[None, None, :])


def _as_array(values, grid: GridSpec) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape == (grid.size,):
        arr = arr.reshape((grid.n,) * 3, order="F")
    if arr.shape != (grid.n,) * 3:
        raise FieldError(f"expected {grid.n**3} values, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real field sampled on a periodic grid; immutable after construction."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        arr = _as_array(self.values, self.grid)
        if not np.all(np.isfinite(arr)):
            bad = tuple(int(i) for i in np.argwhere(~np.isfinite(arr))[0])
            raise FieldError(f"non-finite value at grid index {bad}")
        arr = np.array(arr, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    # construction helpers
    @classmethod
    def zeros(cls, grid: GridSpec) -> "ScalarField":
        return cls(grid, np.zeros((grid.n,) * 3))

    @classmethod
    def from_modes(cls, grid: GridSpec, modes: np.ndarray) -> "ScalarField":
        return cls(grid, np.fft.ifftn(np.asarray(modes) * grid.size).real)

    def modes(self) -> np.ndarray:
        return np.fft.fftn(self.values) / self.grid.size

    @property
    def flat(self) -> np.ndarray:
        """Values in x-fastest order."""
        return self.values.ravel(order="F")

    def mean(self) -> float:
        return float(self.values.mean())

    # arithmetic, mostly for readable solver/verifier code
    def _coerce(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise FieldError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.grid, self.values / self._coerce(other))

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def __pow__(self, p):
        return ScalarField(self.grid, self.values**p)


@dataclass(frozen=True, eq=False)
class VectorField3:
    components: tuple[ScalarField, ScalarField, ScalarField]

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) != 3:
            raise FieldError("a VectorField3 needs exactly three components")
        if any(c.grid != comps[0].grid for c in comps):
            raise FieldError("vector components must share one grid")
        object.__setattr__(self, "components", comps)

    @classmethod
    def of(cls, f1: ScalarField, f2: ScalarField, f3: ScalarField) -> "VectorField3":
        return cls((f1, f2, f3))

    @property
    def grid(self) -> GridSpec:
        return self.components[0].grid

    def __getitem__(self, i: int) -> ScalarField:
        """Component i in 1..3 (f[1] is f1)."""
        if i not in (1, 2, 3):
            raise FieldError(f"component index must be 1, 2 or 3, got {i!r}")
        return self.components[i - 1]

    def __iter__(self) -> Iterator[ScalarField]:
        return iter(self.components)

    def scaled(self, a: float) -> "VectorField3":
        return VectorField3(tuple(c * a for c in self.components))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-stamped snapshots of one scalar field, starting at t = 0."""

    times: np.ndarray
    snapshots: tuple[ScalarField, ...]

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        snaps = tuple(self.snapshots)
        if times.ndim != 1 or len(times) == 0:
            raise FieldError("a trajectory needs at least one time")
        if len(times) != len(snaps):
            raise FieldError(f"{len(times)} times but {len(snaps)} snapshots")
        if times[0] != 0.0:
            raise FieldError("trajectory must start at t = 0")
        if np.any(np.diff(times) <= 0):
            raise FieldError("trajectory times must be strictly increasing")
        if any(s.grid != snaps[0].grid for s in snaps):
            raise FieldError("trajectory snapshots must share one grid")
        times = times.copy()
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "snapshots", snaps)

    @classmethod
    def from_array(cls, grid: GridSpec, times, values: np.ndarray) -> "Trajectory":
        return cls(times, tuple(ScalarField(grid, v) for v in values))

    @classmethod
    def constant(cls, field_: ScalarField, times) -> "Trajectory":
        return cls(times, tuple(field_ for _ in range(len(times))))

    @property
    def grid(self) -> GridSpec:
        return self.snapshots[0].grid

    def stack(self) -> np.ndarray:
        return np.stack([s.values for s in self.snapshots])

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, i: int) -> ScalarField:
        return self.snapshots[i]

    @property
    def final(self) -> ScalarField:
        return self.snapshots[-1]


def make_field(grid: GridSpec, sampler: Callable) -> ScalarField:
    """Sample ``sampler(x1, x2, x3)`` at the grid nodes (vectorised call)."""
    x1, x2, x3 = grid.coords()
    vals = np.broadcast_to(np.asarray(sampler(x1, x2, x3), dtype=np.float64), x1.shape)
    return ScalarField(grid, vals)


def spectral_derivative(values: np.ndarray, grid: GridSpec, axis: int) -> np.ndarray:
    k = grid.derivative_wavenumbers()[axis - 1]
    return np.fft.ifftn(1j * k * np.fft.fftn(values)).real


def partial(f: ScalarField, axis: int) -> ScalarField:
    """Spectral d/dx_axis (axis in 1..3); the Nyquist mode's derivative is zero."""
    if axis not in (1, 2, 3):
        raise FieldError(f"axis must be 1, 2 or 3, got {axis!r}")
    return ScalarField(f.grid, spectral_derivative(f.values, f.grid, axis))


def laplacian(f: ScalarField) -> ScalarField:
    """Spectral Laplacian with the full |xi|^2 (Nyquist included)."""
    return ScalarField(f.grid, np.fft.ifftn(-f.grid.xi2() * np.fft.fftn(f.values)).real)


NORM_KINDS = ("L2", "H1", "H2", "SUP")


def norm_from_modes(modes: np.ndarray, grid: GridSpec, kind: str = "H2") -> float:
    if kind == "L2":
        weight = 1.0
    elif kind in ("H1", "H2"):
        s = 1 if kind == "H1" else 2
        weight = (1.0 + grid.xi2()) ** s
    else:
        raise FieldError(f"norm kind {kind!r} not available from modes")
    return math.sqrt(grid.period**3 * float(np.sum(weight * np.abs(modes) ** 2)))


def norm(f: ScalarField, kind: str = "L2") -> float:
    """Discrete L2 / Sobolev H1, H2 (weights (1+|xi|^2)^s) or grid sup norm."""
    if kind == "SUP":
        return float(np.max(np.abs(f.values)))
    if kind not in NORM_KINDS:
        raise FieldError(f"unknown norm kind {kind!r}")
    return norm_from_modes(f.modes(), f.grid, kind)


def exp_weighted_norm(tr: Trajectory, C: float, kind: str = "H2") -> float:
    """max_i exp(-C t_i) |u(t_i)|, the discrete sup over the stored times."""
    if not C > 0:
        raise ValueError(f"weight constant C must be positive, got {C!r}")
    return max(math.exp(-C * t) * norm(s, kind) for t, s in zip(tr.times, tr.snapshots))


# -- 2-D helpers (rigidity chain only) ---------------------------------------


@dataclass(frozen=True, eq=False)
class Field2D:
    values: np.ndarray
    period: float = 1.0

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] % 2:
            raise FieldError(f"expected an even square 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise FieldError("non-finite value in 2-D field")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @classmethod
    def sample(cls, n: int, period: float, sampler: Callable) -> "Field2D":
        x = np.arange(n) * (period / n)
        x1, x2 = np.meshgrid(x, x, indexing="ij")
        return cls(np.broadcast_to(sampler(x1, x2), (n, n)), period)

    def partial(self, axis: int) -> np.ndarray:
        k = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.period / self.n)
        k[self.n // 2] = 0.0
        k = k[:, None] if axis == 1 else k[None, :]
        return np.fft.ifft2(1j * k * np.fft.fft2(self.values)).real


# -- field file format --------------------------------------------------------

_MAGIC = "# singular-euler field file v1"


def save_fields(path, fields: dict[str, ScalarField]) -> None:
    """Write named fields: text header, then little-endian float64, x-fastest."""
    if not fields:
        raise FieldError("nothing to save")
    grids = {f.grid for f in fields.values()}
    if len(grids) != 1:
        raise FieldError("all saved fields must share one grid")
    (grid,) = grids
    names = list(fields)
    if any("," in n or not n.strip() for n in names):
        raise FieldError("component names must be non-empty and comma-free")
    header = (
        f"{_MAGIC}\n"
        f"n_per_axis = {grid.n}\n"
        f"period = {grid.period!r}\n"
        f"components = {','.join(names)}\n"
        f"count = {len(names)}\n"
        "end_header\n"
    )
    body = b"".join(fields[n].flat.astype("<f8").tobytes() for n in names)
    Path(path).write_bytes(header.encode("ascii") + body)


def load_fields(path) -> dict[str, ScalarField]:
    raw = Path(path).read_bytes()
    marker = b"end_header\n"
    cut = raw.find(marker)
    if cut < 0:
        raise FieldError(f"{path}: missing end_header line")
    meta = {}
    for line in raw[:cut].decode("ascii").splitlines():
        if line.startswith("#") or not line.strip():
            continue
        key, _, val = line.partition("=")
        meta[key.strip()] = val.strip()
    try:
        grid = GridSpec(int(meta["n_per_axis"]), float(meta["period"]))
        names = meta["components"].split(",")
        count = int(meta["count"])
    except KeyError as exc:
        raise FieldError(f"{path}: header lacks {exc}") from None
    if count != len(names):
        raise FieldError(f"{path}: count {count} disagrees with {len(names)} names")
    data = np.frombuffer(raw[cut + len(marker):], dtype="<f8")
    if data.size != count * grid.size:
        raise FieldError(f"{path}: expected {count * grid.size} floats, found {data.size}")
    data = data.reshape(count, grid.size)
    return {n: ScalarField(grid, data[i]) for i, n in enumerate(names)}
