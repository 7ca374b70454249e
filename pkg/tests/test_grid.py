import numpy as np
import pytest

from fkmerton import Grid, GridFunction, sup_distance, weighted_distance


@pytest.fixture
def small_grid():
    return Grid.build(T=1.0, n_t=11, box=[(-2.0, 2.0)], n_y=[21])


def linear_fn(t, y):
    return 2.0 + 0.5 * t - 1.5 * y[0]


class TestGridBuild:
    def test_axes_and_spacing(self, small_grid):
        g = small_grid
        assert g.n_t == 11 and g.shape == (11, 21)
        assert g.t[0] == 0.0 and g.t[-1] == 1.0
        assert g.dt == pytest.approx(0.1)
        assert g.dys[0] == pytest.approx(0.2)
        assert g.box == ((-2.0, 2.0),)

    def test_meshes_cover_grid(self, small_grid):
        t_mesh, y_mesh = small_grid.meshes()
        assert t_mesh.shape == (11, 21)
        assert y_mesh.shape == (1, 11, 21)
        assert t_mesh[:, 0] == pytest.approx(small_grid.t)
        assert y_mesh[0, 0, :] == pytest.approx(small_grid.ys[0])

    def test_validation(self):
        with pytest.raises(ValueError):
            Grid.build(1.0, 1, [(-1, 1)], [5])
        with pytest.raises(ValueError):
            Grid.build(1.0, 5, [(1, -1)], [5])
        with pytest.raises(ValueError):
            Grid.build(-1.0, 5, [(-1, 1)], [5])
        with pytest.raises(ValueError):
            Grid.build(1.0, 5, [(-1, 1)], [5, 5])


class TestGridFunction:
    def test_from_callable_and_constant(self, small_grid):
        f = GridFunction.from_callable(small_grid, linear_fn)
        assert f.values.shape == small_grid.shape
        one = GridFunction.constant(small_grid, 1.0)
        assert np.all(one.values == 1.0)

    def test_sample_exact_on_multilinear_data(self, small_grid):
        f = GridFunction.from_callable(small_grid, linear_fn)
        rng = np.random.default_rng(7)
        for _ in range(50):
            t = rng.uniform(0, 1)
            y = rng.uniform(-2, 2)
            assert f.sample(t, [y]) == pytest.approx(
                linear_fn(t, [y]), rel=1e-13)

    def test_sample_batched_points(self, small_grid):
        f = GridFunction.from_callable(small_grid, linear_fn)
        ys = np.linspace(-1.9, 1.9, 9)[None, :]
        got = f.sample(0.35, ys)
        assert got.shape == (9,)
        assert got == pytest.approx(2.0 + 0.5 * 0.35 - 1.5 * ys[0], rel=1e-13)

    def test_clip_clamps_to_box_values(self, small_grid):
        f = GridFunction.from_callable(small_grid, linear_fn)
        assert f.sample(0.5, [99.0], clip=True) == pytest.approx(
            linear_fn(0.5, [2.0]), rel=1e-13)
        assert f.sample(0.5, [-99.0], clip=True) == pytest.approx(
            linear_fn(0.5, [-2.0]), rel=1e-13)

    def test_out_of_domain_rejected_without_clip(self, small_grid):
        f = GridFunction.from_callable(small_grid, linear_fn)
        with pytest.raises(Exception):
            f.sample(0.5, [5.0])

    def test_near_edge_tolerance_warns_without_clip(self, small_grid):
        f = GridFunction.from_callable(small_grid, linear_fn)
        with pytest.warns(UserWarning, match="clamped"):
            val = f.sample(0.5, [2.0 + 1e-13])
        assert val == pytest.approx(linear_fn(0.5, [2.0]), rel=1e-12)

    def test_gradient_exact_for_quadratic(self, small_grid):
        f = GridFunction.from_callable(
            small_grid, lambda t, y: 1.0 + y[0] ** 2 - 0.5 * y[0])
        (gy,) = f.gradient()
        expected = 2.0 * small_grid.ys[0] - 0.5
        assert np.allclose(gy.values, expected[None, :], rtol=1e-12, atol=1e-12)

    def test_time_derivative_exact_for_quadratic(self, small_grid):
        f = GridFunction.from_callable(
            small_grid, lambda t, y: (1.0 + t) ** 2 + 0.0 * y[0])
        ft = f.time_derivative()
        assert np.allclose(ft.values, 2.0 * (1.0 + small_grid.t)[:, None],
                           rtol=1e-12)

    def test_values_are_read_only(self, small_grid):
        f = GridFunction.constant(small_grid, 1.0)
        with pytest.raises(ValueError):
            f.values[0, 0] = 2.0

    def test_shape_mismatch_rejected(self, small_grid):
        with pytest.raises(ValueError):
            GridFunction(small_grid, np.zeros((3, 3)))


class TestDistances:
    def test_sup_distance_includes_gradient_gap(self, small_grid):
        f = GridFunction.constant(small_grid, 1.0)
        g = GridFunction.from_callable(small_grid, lambda t, y: 1.0 + 0.25 * y[0])
        # value gap 0.5 at the far edge, gradient gap 0.25 everywhere
        assert sup_distance(f, g) == pytest.approx(0.75, rel=1e-12)

    def test_weighted_distance_discounts_in_time(self, small_grid):
        f = GridFunction.constant(small_grid, 1.0)
        bump = np.zeros(small_grid.shape)
        bump[0, 10] = 1.0  # at t = 0, weight e^{-kappa (T - 0)}
        g = GridFunction(small_grid, 1.0 + bump)
        kappa = 2.0
        weighted = weighted_distance(f, g, kappa)
        plain = weighted_distance(f, g, 0.0)
        assert plain == pytest.approx(sup_distance(f, g), rel=1e-12)
        assert weighted < plain
        ratio = weighted / plain
        assert np.log(ratio) == pytest.approx(-kappa * small_grid.T, rel=1e-6)

    def test_grid_mismatch_rejected(self, small_grid):
        other = Grid.build(1.0, 11, [(-2.0, 2.0)], [31])
        with pytest.raises(ValueError):
            sup_distance(GridFunction.constant(small_grid, 1.0),
                         GridFunction.constant(other, 1.0))


class TestCsv:
    def test_to_csv_format_and_precision(self, small_grid, tmp_path):
        f = GridFunction.from_callable(
            small_grid, lambda t, y: 1.0 + np.pi * t + y[0] / 3.0)
        path = tmp_path / "f.csv"
        f.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,y1,value"
        assert len(lines) == 1 + 11 * 21
        # 17 significant digits reproduce the doubles exactly
        t0, y0, v0 = (float(s) for s in lines[1].split(","))
        assert (t0, y0) == (small_grid.t[0], small_grid.ys[0][0])
        assert v0 == f.values[0, 0]
        assert path.read_text().endswith("\n")
