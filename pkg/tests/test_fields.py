import csv
import math

import numpy as np
import pytest

from exprdsl import parse
from fields import (SQRT2, CharPoint, DomainError, Grid, GridError, GridTooSmallError, ParacomplexField,
                    ScalarField, char_convert, derivative, diff, export_csv, resample, sample, st_cover)
from paracomplex import CLASS_CODES, CausalClass, Paracomplex


def _field(text, grid):
    return sample(parse(text, grid.names), grid)


class TestGrid:
    def test_spacing(self):
        grid = Grid.uv((0.0, 1.0), (0.0, 2.0), 5, 9)
        assert grid.h1 == 0.25
        assert grid.h2 == 0.25
        assert grid.shape == (5, 9)

    @pytest.mark.parametrize("args", [((0, 1), (0, 1), 4), ((0, 1), (0, 1), 5, 3)])
    def test_too_few_points(self, args):
        with pytest.raises(GridTooSmallError):
            Grid.uv(*args)

    def test_empty_range(self):
        with pytest.raises(GridError):
            Grid.st((1.0, 1.0), (0.0, 1.0), 9)

    def test_unknown_kind(self):
        with pytest.raises(GridError):
            Grid("xy", 0.0, 1.0, 0.0, 1.0, 5, 5)

    def test_coordinates_cover_both_systems(self, unit_grid):
        coords = unit_grid.coordinates()
        assert set(coords) == {"u", "v", "s", "t"}
        u, v = unit_grid.mesh()
        assert np.allclose(coords["s"], (u + v) / SQRT2)
        assert np.allclose(coords["t"], (u - v) / SQRT2)

    def test_point_and_json(self, unit_grid):
        assert unit_grid.point(16, 0) == (1.0, 0.0)
        assert unit_grid.to_json() == {"coord_kind": "uv", "u_range": [0.0, 1.0], "v_range": [0.0, 1.0],
                                       "n1": 17, "n2": 17}


def test_char_convert_is_involutive():
    s, t = char_convert((0.3, -1.2))
    u, v = char_convert(CharPoint(s, t), "st->uv")
    assert u == pytest.approx(0.3, abs=1e-15)
    assert v == pytest.approx(-1.2, abs=1e-15)
    with pytest.raises(ValueError):
        char_convert((0, 0), "uv->xy")


class TestScalarField:
    def test_non_finite_values_are_located(self, unit_grid):
        values = np.zeros(unit_grid.shape)
        values[3, 5] = np.nan
        with pytest.raises(DomainError) as info:
            ScalarField(unit_grid, values)
        assert info.value.index == (3, 5)
        assert info.value.point == unit_grid.point(3, 5)

    def test_values_are_read_only(self, unit_grid):
        f = ScalarField.constant(unit_grid, 1.0)
        with pytest.raises(ValueError):
            f.values[0, 0] = 2.0

    def test_arithmetic(self, unit_grid):
        f = ScalarField.constant(unit_grid, 2.0)
        g = 1.0 - f * 3.0 + f / 4.0
        assert np.all(g.values == -4.5)
        assert np.all((-f).values == -2.0)

    def test_mismatched_grids(self, unit_grid):
        other = Grid.uv((0.0, 1.0), (0.0, 1.0), 9)
        with pytest.raises(GridError):
            ScalarField.constant(unit_grid, 1.0) + ScalarField.constant(other, 1.0)

    def test_interior_and_boundary_maxima(self, unit_grid):
        values = np.zeros(unit_grid.shape)
        values[0, 4] = 5.0
        values[8, 8] = -1.0
        f = ScalarField(unit_grid, values)
        assert f.max_abs() == 5.0
        assert f.max_abs(2) == 1.0
        assert f.boundary_max_abs(2) == 5.0
        with pytest.raises(GridTooSmallError):
            f.interior(9)


class TestDerivatives:
    def test_quadratics_are_exact(self, unit_grid):
        f = _field("u^2 + 3*u*v - v^2", unit_grid)
        u, v = unit_grid.mesh()
        assert np.allclose(diff(f, 1).values, 2 * u + 3 * v, atol=1e-12)
        assert np.allclose(diff(f, 2).values, 3 * u - 2 * v, atol=1e-12)

    def test_second_derivative_exact_on_cubics(self, unit_grid):
        f = _field("u^3 - 2*v^3 + u*v", unit_grid)
        u, v = unit_grid.mesh()
        assert np.allclose(diff(f, 1, 2).values, 6 * u, atol=1e-9)
        assert np.allclose(diff(f, 2, 2).values, -12 * v, atol=1e-9)

    def test_characteristic_derivatives_on_uv_grid(self, unit_grid):
        f = _field("u^2 - v^2", unit_grid)  # = 2 s t
        coords = unit_grid.coordinates()
        assert np.allclose(derivative(f, "s").values, 2 * coords["t"], atol=1e-12)
        assert np.allclose(derivative(f, "t").values, 2 * coords["s"], atol=1e-12)
        assert np.allclose(derivative(f, "st").values, 2.0, atol=1e-9)

    def test_uv_derivatives_on_st_grid(self):
        grid = Grid.st((0.0, 1.0), (-0.5, 0.5), 17)
        f = sample(parse("u*v", ("u", "v")), grid)
        coords = grid.coordinates()
        assert np.allclose(derivative(f, "u").values, coords["v"], atol=1e-12)
        assert np.allclose(derivative(f, "uv").values, 1.0, atol=1e-9)
        assert np.allclose(derivative(f, "v", 2).values, 0.0, atol=1e-9)

    def test_second_order_convergence(self):
        errors = []
        for n in (33, 65, 129):
            grid = Grid.uv((0.0, 1.0), (0.0, 1.0), n)
            f = _field("sin(2*u)*cos(v)", grid)
            u, v = grid.mesh()
            errors.append(np.max(np.abs(derivative(f, "s").values
                                        - (2 * np.cos(2 * u) * np.cos(v) - np.sin(2 * u) * np.sin(v)) / SQRT2)))
        assert errors[0] / errors[1] > 3.5
        assert errors[1] / errors[2] > 3.5

    def test_bad_names(self, unit_grid):
        f = ScalarField.constant(unit_grid, 0.0)
        with pytest.raises(GridError):
            derivative(f, "x")
        with pytest.raises(ValueError):
            derivative(f, "uvu")
        with pytest.raises(ValueError):
            diff(f, 3)


class TestSample:
    def test_domain_error_names_gridpoint(self, unit_grid):
        with pytest.raises(DomainError) as info:
            _field("1/(u - 0.5)", unit_grid)
        assert info.value.index == (8, 0)
        assert info.value.point == (0.5, 0.0)

    def test_unknown_coordinates(self, unit_grid):
        with pytest.raises(GridError):
            sample(parse("x", ("x",)), unit_grid)

    def test_characteristic_expression_on_uv_grid(self, unit_grid):
        f = sample(parse("s*t", ("s", "t")), unit_grid)
        u, v = unit_grid.mesh()
        assert np.allclose(f.values, (u * u - v * v) / 2.0, atol=1e-14)


class TestCharacteristicCover:
    def test_nodes_contain_uv_nodes(self):
        grid = Grid.uv((0.0, 1.0), (0.0, 1.0), 5)
        cover = st_cover(grid)
        assert cover.shape == (9, 9)
        assert cover.h1 == pytest.approx(0.25 / SQRT2)
        s, t = cover.axis_coords(1), cover.axis_coords(2)
        u, v = grid.axis_coords(1), grid.axis_coords(2)
        for i in range(5):
            for j in range(5):
                assert s[i + j] == pytest.approx((u[i] + v[j]) / SQRT2, abs=1e-14)
                assert t[i - j + 4] == pytest.approx((u[i] - v[j]) / SQRT2, abs=1e-14)

    def test_needs_uv_grid(self):
        with pytest.raises(GridError):
            st_cover(Grid.st((0, 1), (0, 1), 5))

    def test_resample_back_copies_nodes(self):
        grid = Grid.uv((0.0, 0.5), (0.0, 0.5), 9)
        cover = st_cover(grid)
        on_cover = sample(parse("exp(s)*sin(3*t)", ("s", "t")), cover)
        back = resample(on_cover, grid)
        expected = sample(parse("exp(s)*sin(3*t)", ("s", "t")), grid)
        assert np.allclose(back.values, expected.values, atol=1e-12)

    def test_points_outside_the_source_domain(self):
        grid = Grid.uv((0.0, 1.0), (0.0, 1.0), 5)
        with pytest.raises(DomainError):
            resample(ScalarField.constant(grid, 1.0), st_cover(grid))


def test_resample_reproduces_bilinear_functions():
    src = Grid.uv((0.0, 1.0), (0.0, 1.0), 9)
    target = Grid.uv((0.1, 0.9), (0.05, 0.95), 7)
    f = _field("2*u - 3*v + 1 + u*v", src)
    out = resample(f, target)
    u, v = target.mesh()
    assert np.allclose(out.values, 2 * u - 3 * v + 1 + u * v, atol=1e-12)


def test_export_csv_round_trip(tmp_path, unit_grid):
    f = _field("exp(u)*cos(v)/3", unit_grid)
    path = export_csv(f, tmp_path / "nested" / "f.csv")
    with path.open() as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["u", "v", "value"]
    assert len(rows) == 1 + 17 * 17
    values = np.array([float(r[2]) for r in rows[1:]]).reshape(unit_grid.shape)
    assert np.array_equal(values, f.values)


class TestParacomplexField:
    def test_product_and_norm(self, unit_grid):
        a = ParacomplexField(_field("u", unit_grid), _field("v", unit_grid))
        b = ParacomplexField(ScalarField.constant(unit_grid, 2.0), ScalarField.constant(unit_grid, 1.0))
        prod = a * b
        z = a.at(4, 12) * Paracomplex(2.0, 1.0)
        assert prod.at(4, 12).re == pytest.approx(z.re)
        assert prod.at(4, 12).im == pytest.approx(z.im)
        assert np.allclose((a * a.conj()).re.values, a.sq_norm().values)

    def test_classify(self, unit_grid):
        re = ScalarField.constant(unit_grid, 1.0)
        q = ParacomplexField(re, re)
        assert np.all(q.classify(margin=2) == CLASS_CODES[CausalClass.NULL_NONZERO])
        assert q.classify(margin=2).shape == (13, 13)


def test_spacing_constant():
    assert SQRT2 == math.sqrt(2.0)
