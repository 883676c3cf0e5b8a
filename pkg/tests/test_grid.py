import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcflow.errors import ConfigurationError
from mcflow.grid import (
    GridSpec,
    ScalarField,
    VectorField,
    forward_diff,
    grad_axis,
    gradient,
    integrate,
    laplacian,
    laplacian_array,
)


def spec1d(n, L=1.0):
    return GridSpec(1, L, n)


def sin_field(spec):
    x = spec.axis_coords()
    return ScalarField(spec, np.sin(2 * np.pi * x / spec.extent))


class TestGridSpec:
    def test_spacing(self):
        spec = GridSpec(2, 2.0, 16)
        assert spec.h == pytest.approx(0.125)
        assert spec.shape == (16, 16)
        assert spec.cell_volume == pytest.approx(0.125**2)

    @pytest.mark.parametrize("bad", [dict(dim=4), dict(n=4), dict(extent=-1.0)])
    def test_rejects_bad_spec(self, bad):
        kw = dict(dim=2, extent=1.0, n=16)
        kw.update(bad)
        with pytest.raises(ConfigurationError):
            GridSpec(**kw)

    def test_field_shape_mismatch(self):
        spec = GridSpec(2, 1.0, 8)
        with pytest.raises(ConfigurationError):
            ScalarField(spec, np.zeros((8, 9)))
        with pytest.raises(ConfigurationError):
            VectorField(spec, np.zeros((8, 8, 3)))


class TestGradient:
    def test_constant_is_zero(self):
        spec = GridSpec(2, 1.0, 32)
        g = gradient(ScalarField.full(spec, 3.7))
        assert np.all(g.data == 0.0)

    def test_sine_converges_second_order(self):
        errs = []
        for n in (64, 128):
            spec = spec1d(n)
            f = sin_field(spec)
            exact = (2 * np.pi) * np.cos(2 * np.pi * spec.axis_coords())
            errs.append(np.max(np.abs(gradient(f).data[:, 0] - exact)))
        ratio = errs[0] / errs[1]
        assert 3.7 < ratio < 4.3

    def test_sawtooth_interior_slope(self):
        spec = spec1d(64)
        f = ScalarField(spec, spec.axis_coords().copy())
        g = gradient(f).data[:, 0]
        # away from the wrap seam the slope is exactly 1
        assert np.allclose(g[2:-2], 1.0, atol=1e-12)

    def test_periodic_shift_equivariance(self):
        rng = np.random.default_rng(7)
        spec = GridSpec(2, 1.0, 16)
        a = rng.standard_normal(spec.shape)
        g0 = gradient(ScalarField(spec, a)).data
        g1 = gradient(ScalarField(spec, np.roll(a, 3, axis=0))).data
        assert np.array_equal(np.roll(g0, 3, axis=0), g1)


class TestLaplacian:
    def test_constant_is_zero(self):
        spec = GridSpec(3, 1.0, 8)
        assert np.all(laplacian(ScalarField.full(spec, -2.0)).data == 0.0)

    def test_sine_1d(self):
        errs = []
        for n in (64, 128):
            spec = spec1d(n)
            f = sin_field(spec)
            exact = -((2 * np.pi) ** 2) * f.data
            errs.append(np.max(np.abs(laplacian(f).data - exact)))
        assert 3.7 < errs[0] / errs[1] < 4.3

    def test_product_sine_2d(self):
        spec = GridSpec(2, 1.0, 128)
        x, y = spec.meshgrid()
        f = ScalarField(spec, np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y))
        exact = -2 * (2 * np.pi) ** 2 * f.data
        assert np.max(np.abs(laplacian(f).data - exact)) < 0.05 * (2 * np.pi) ** 2

    @given(
        a=st.floats(-5, 5),
        b=st.floats(-5, 5),
        seed=st.integers(0, 2**31 - 1),
    )
    @settings(max_examples=25, deadline=None)
    def test_linearity(self, a, b, seed):
        rng = np.random.default_rng(seed)
        spec = GridSpec(1, 1.0, 32)
        f = rng.standard_normal(spec.shape)
        g = rng.standard_normal(spec.shape)
        lhs = laplacian_array(a * f + b * g, spec.h)
        rhs = a * laplacian_array(f, spec.h) + b * laplacian_array(g, spec.h)
        assert np.allclose(lhs, rhs, atol=1e-9 * (1 + abs(a) + abs(b)))


class TestIntegrate:
    def test_constant(self):
        spec = GridSpec(3, 2.0, 8)
        assert integrate(ScalarField.full(spec, 1.0)) == pytest.approx(8.0, abs=1e-14)

    def test_indicator_counts_cells(self):
        spec = GridSpec(2, 1.0, 16)
        data = np.zeros(spec.shape)
        data[2:5, 3:9] = 1.0  # 18 cells
        assert integrate(ScalarField(spec, data)) == pytest.approx(18 * spec.cell_volume)

    def test_sine_squared_spectrally_exact(self):
        spec = spec1d(64)
        f = ScalarField(spec, np.sin(2 * np.pi * spec.axis_coords()) ** 2)
        assert abs(integrate(f) - 0.5) < 1e-12

    def test_determinism(self):
        rng = np.random.default_rng(0)
        spec = GridSpec(2, 1.0, 64)
        f = ScalarField(spec, rng.standard_normal(spec.shape))
        vals = {integrate(f) for _ in range(5)}
        assert len(vals) == 1


class TestSummationByParts:
    def test_matched_forward_stencil_exact(self):
        # laplacian = backward(forward(.)) per axis, so sum g*lap(f) =
        # -sum D+(g) D+(f) holds to machine precision on the periodic box
        rng = np.random.default_rng(3)
        spec = GridSpec(2, 1.0, 32)
        f = rng.standard_normal(spec.shape)
        g = rng.standard_normal(spec.shape)
        lhs = np.sum(g * laplacian_array(f, spec.h))
        rhs = -sum(
            np.sum(forward_diff(g, spec.h, ax) * forward_diff(f, spec.h, ax))
            for ax in range(2)
        )
        assert abs(lhs - rhs) < 1e-9 * max(abs(lhs), 1.0)

    def test_central_stencil_within_second_order_bound(self):
        # with unmatched central stencils the identity is only guaranteed to
        # O(h^2); on the periodic box the defect density telescopes (it is a
        # total derivative), so the measured defect sits at roundoff, far
        # inside that bound
        for n in (64, 128):
            spec = spec1d(n)
            x = spec.axis_coords()
            f = np.sin(2 * np.pi * x)
            g = np.exp(np.cos(2 * np.pi * x))
            lhs = np.sum(g * laplacian_array(f, spec.h)) * spec.h
            rhs = -np.sum(grad_axis(g, spec.h, 0) * grad_axis(f, spec.h, 0)) * spec.h
            assert abs(lhs - rhs) <= 40.0 * spec.h**2  # the O(h^2) contract
            assert abs(lhs - rhs) <= 1e-10  # measured: total-derivative cancellation
