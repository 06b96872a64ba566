import numpy as np
import pytest

from exprdsl import parse
from fields import Grid, diff
from pde import (BlowUpError, GoursatDataError, GoursatProblem, NonPositiveFactorError, SingularDomainError,
                 goursat_scalar, goursat_system, liouville_closed_form, self_residual)


def x(text):
    return parse(text, ("x",))


def over(text, name):
    return parse(text, (name,))


class TestLiouvilleClosedForm:
    def test_positive_curvature(self, liouville_grid, liouville_lambda):
        lam = liouville_closed_form(1.0, x("x"), x("x"), liouville_grid)
        assert np.allclose(lam.values, liouville_lambda.values, atol=1e-12)

    def test_negative_curvature(self):
        grid = Grid.uv((1.0, 2.0), (0.0, 1.0), 17)
        lam = liouville_closed_form(-1.0, x("x"), x("x"), grid)
        u, _ = grid.mesh()
        assert np.allclose(lam.values, -np.log(u), atol=1e-12)

    def test_flat_is_a_wave(self, unit_grid):
        lam = liouville_closed_form(0.0, x("x^2"), x("0"), unit_grid)
        s = unit_grid.coordinates()["s"]
        assert np.allclose(lam.values, s ** 2)
        assert (diff(lam, 1, 2) - diff(lam, 2, 2)).max_abs() < 1e-9

    def test_singular_domain(self, unit_grid):
        with pytest.raises(SingularDomainError) as info:
            liouville_closed_form(1.0, x("x"), x("x"), unit_grid)
        assert info.value.index is not None

    def test_non_positive_factor(self):
        grid = Grid.uv((1.0, 2.0), (0.0, 1.0), 9)
        with pytest.raises(NonPositiveFactorError):
            liouville_closed_form(1.0, x("x"), x("-x"), grid)


class TestGoursatProblem:
    def test_needs_st_grid(self, unit_grid):
        with pytest.raises(GoursatDataError):
            GoursatProblem.scalar(unit_grid, 0.0, 1, over("0", "s"), over("0", "t"))

    def test_corner_mismatch(self):
        grid = Grid.st((0.0, 1.0), (0.0, 1.0), 9)
        with pytest.raises(GoursatDataError, match="corner"):
            GoursatProblem.scalar(grid, 0.0, 1, over("1", "s"), over("0", "t"))

    def test_bad_epsilon_and_suppress(self):
        grid = Grid.st((0.0, 1.0), (0.0, 1.0), 9)
        with pytest.raises(GoursatDataError):
            GoursatProblem.scalar(grid, 0.0, 0, over("0", "s"), over("0", "t"))
        with pytest.raises(GoursatDataError):
            GoursatProblem.scalar(grid, 0.0, 1, over("0", "s"), over("0", "t"), suppress=["gauss"])

    def test_solver_kind_checked(self):
        grid = Grid.st((0.0, 1.0), (0.0, 1.0), 9)
        prob = GoursatProblem.scalar(grid, 0.0, 1, over("0", "s"), over("0", "t"))
        with pytest.raises(GoursatDataError):
            goursat_system(prob)


class TestGoursatScalar:
    def test_dalembert(self):
        grid = Grid.st((0.0, 1.0), (0.0, 1.0), 17)
        prob = GoursatProblem.scalar(grid, 1.0, 1, over("s", "s"), over("t", "t"),
                                     suppress={"curvature", "epsilon"})
        lam = goursat_scalar(prob)
        s, t = grid.mesh()
        assert np.allclose(lam.values, s + t, atol=1e-12)

    def test_zero_data_stays_zero(self):
        # L0 = -1, ε = -1: the right-hand side vanishes at λ = 0
        grid = Grid.st((0.0, 1.0), (0.0, 1.0), 17)
        prob = GoursatProblem.scalar(grid, -1.0, -1, over("0", "s"), over("0", "t"))
        assert goursat_scalar(prob).max_abs() == 0.0

    def test_converges_to_known_solution(self):
        # λ = -ln((s - t)/√2) solves λ_st = -e^{2λ}/2
        errors = []
        for n in (17, 33, 65):
            grid = Grid.st((1.0, 2.0), (-1.0, 0.0), n)
            prob = GoursatProblem.scalar(grid, 1.0, 1, over("0.5*ln(2) - ln(s + 1)", "s"),
                                         over("0.5*ln(2) - ln(1 - t)", "t"), suppress={"epsilon"})
            s, t = grid.mesh()
            exact = -np.log((s - t) / np.sqrt(2.0))
            errors.append(float(np.max(np.abs(goursat_scalar(prob).values - exact))))
        assert errors[2] < 1e-3
        assert errors[0] / errors[1] > 3.0
        assert errors[1] / errors[2] > 3.0

    def test_self_residual_is_small(self):
        grid = Grid.st((0.0, 0.5), (0.0, 0.5), 33)
        prob = GoursatProblem.scalar(grid, 1.0, 1, over("0.1*s", "s"), over("0", "t"))
        (residual,) = self_residual(prob, goursat_scalar(prob))
        assert residual.max_abs(1) < 5e-3

    def test_blow_up(self):
        grid = Grid.st((0.0, 1.0), (0.0, 1.0), 17)
        prob = GoursatProblem.scalar(grid, -1.0, 1, over("5", "s"), over("5", "t"), suppress={"epsilon"})
        with pytest.raises(BlowUpError) as info:
            goursat_scalar(prob)
        assert info.value.index is not None


class TestGoursatSystem:
    def test_self_residual_shrinks(self):
        worst = []
        for n in (17, 33):
            grid = Grid.st((0.0, 0.5), (0.0, 0.5), n)
            prob = GoursatProblem.system(grid, 1.0, 1, (over("0", "s"), over("0", "t")),
                                         (over("0", "s"), over("0", "t")))
            f1, f2 = goursat_system(prob)
            assert f1.values[0, 0] == 0.0
            worst.append(max(r.max_abs(1) for r in self_residual(prob, (f1, f2))))
        assert worst[1] < 5e-3
        assert worst[1] < worst[0]

    def test_curvature_suppressed_keeps_f1_on_its_boundary(self):
        grid = Grid.st((0.0, 0.5), (0.0, 0.5), 17)
        prob = GoursatProblem.system(grid, 1.0, 1, (over("s", "s"), over("0", "t")),
                                     (over("0", "s"), over("0", "t")), suppress={"curvature"})
        f1, _ = goursat_system(prob)
        s, _ = grid.mesh()
        assert np.allclose(f1.values, s, atol=1e-12)
