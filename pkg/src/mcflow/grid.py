"""Periodic uniform-grid fields and second-order discrete operators.

All other modules are built on the three field operations defined here:
central-difference gradient, the standard (2d+1)-point Laplacian, and a
deterministic quadrature ``integrate``.  The box is cubic with ``n`` cells
per axis and periodic wraparound in every axis; cell centers sit at
``(i + 1/2) h``.

Reductions use numpy's pairwise summation on a fixed memory layout, so
repeated calls on identical input are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class GridSpec:
    """Cubic periodic grid: ``dim`` in {1,2,3}, side length ``extent``, ``n`` cells per axis."""

    dim: int
    extent: float
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ConfigurationError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 8:
            raise ConfigurationError(f"need at least 8 cells per axis, got n={self.n}")
        if not (self.extent > 0):
            raise ConfigurationError(f"extent must be positive, got {self.extent}")

    @property
    def h(self) -> float:
        return self.extent / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def axis_coords(self) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        return (np.arange(self.n) + 0.5) * self.h

    def meshgrid(self) -> tuple:
        """Cell-center coordinate arrays, one per axis, each of shape ``self.shape``."""
        x = self.axis_coords()
        return np.meshgrid(*([x] * self.dim), indexing="ij")


@dataclass
class ScalarField:
    """One real value per cell; ``data`` has shape ``spec.shape``."""

    spec: GridSpec
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != self.spec.shape:
            raise ConfigurationError(
                f"scalar data shape {self.data.shape} != grid shape {self.spec.shape}"
            )

    @classmethod
    def full(cls, spec: GridSpec, value: float) -> "ScalarField":
        return cls(spec, np.full(spec.shape, float(value)))

    def copy(self) -> "ScalarField":
        return ScalarField(self.spec, self.data.copy())

    def check_finite(self):
        if not np.all(np.isfinite(self.data)):
            raise ConfigurationError("scalar field contains non-finite entries")


@dataclass
class VectorField:
    """One d-vector per cell; ``data`` has shape ``spec.shape + (dim,)``, components last."""

    spec: GridSpec
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != self.spec.shape + (self.spec.dim,):
            raise ConfigurationError(
                f"vector data shape {self.data.shape} != {self.spec.shape + (self.spec.dim,)}"
            )

    def component(self, axis: int) -> np.ndarray:
        return self.data[..., axis]

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.data**2, axis=-1))


# -- array-level kernels (shared by the hot loops in other modules) ----------


def grad_axis(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Central difference (a[i+1]-a[i-1])/(2h) along ``axis`` with periodic wrap."""
    return _central_diff_fast(a, h, axis)


def grad_components(a: np.ndarray, h: float) -> list:
    return [grad_axis(a, h, ax) for ax in range(a.ndim)]


def grad_norm2(a: np.ndarray, h: float) -> np.ndarray:
    """|grad a|^2 via central differences, with minimal temporaries."""
    out = None
    for ax in range(a.ndim):
        g = _central_diff_fast(a, h, ax)
        np.square(g, out=g)
        if out is None:
            out = g
        else:
            np.add(out, g, out=out)
    return out


def _central_diff_fast(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Central difference via slicing (one fused interior pass + wrap rows)."""
    g = np.empty_like(a)
    am = np.moveaxis(a, axis, 0)
    gm = np.moveaxis(g, axis, 0)
    np.subtract(am[2:], am[:-2], out=gm[1:-1])
    np.subtract(am[1:2], am[-1:], out=gm[0:1])
    np.subtract(am[0:1], am[-2:-1], out=gm[-1:])
    g /= 2.0 * h
    return g


def laplacian_array(a: np.ndarray, h: float) -> np.ndarray:
    """Standard (2d+1)-point stencil, periodic."""
    out = -2.0 * a.ndim * a
    for ax in range(a.ndim):
        out += np.roll(a, -1, ax) + np.roll(a, 1, ax)
    return out / (h * h)


def forward_diff(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    """One-sided difference (a[i+1]-a[i])/h; the matched pair for summation by parts."""
    return (np.roll(a, -1, axis) - a) / h


# -- field-level operations ---------------------------------------------------


def gradient(f: ScalarField) -> VectorField:
    """Componentwise central-difference gradient; second-order on smooth data."""
    h = f.spec.h
    return VectorField(f.spec, np.stack(grad_components(f.data, h), axis=-1))


def laplacian(f: ScalarField) -> ScalarField:
    return ScalarField(f.spec, laplacian_array(f.data, f.spec.h))


def divergence(v: VectorField) -> ScalarField:
    h = v.spec.h
    out = np.zeros(v.spec.shape)
    for ax in range(v.spec.dim):
        out += grad_axis(v.data[..., ax], h, ax)
    return ScalarField(v.spec, out)


def jacobian(v: VectorField) -> np.ndarray:
    """J[..., i, j] = d_i v_j (gradient index first)."""
    h = v.spec.h
    d = v.spec.dim
    out = np.empty(v.spec.shape + (d, d))
    for j in range(d):
        for i in range(d):
            out[..., i, j] = grad_axis(v.data[..., j], h, i)
    return out


def integrate(f) -> float:
    """h^dim times the pairwise-tree sum of all cells.

    Accepts a ScalarField or a raw ndarray paired with a spec via
    ``integrate_array``.  numpy's pairwise summation on a fixed-layout
    array gives a deterministic, resolution-robust reduction.
    """
    return float(f.spec.cell_volume * np.sum(f.data))


def integrate_array(a: np.ndarray, spec: GridSpec) -> float:
    return float(spec.cell_volume * np.sum(a))
