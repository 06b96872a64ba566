import numpy as np
import pytest

from paracomplex import (CLASS_CODES, CODE_CLASSES, EPS_NULL, EPS_ZERO, J, CausalClass, Paracomplex,
                         classify_array, pc_classify, pc_mul, pc_sq_norm)


def _random_numbers(n, seed=0):
    rng = np.random.default_rng(seed)
    return [Paracomplex(float(a), float(b)) for a, b in rng.uniform(-2.0, 2.0, size=(n, 2))]


def test_j_squares_to_one():
    assert J * J == Paracomplex(1.0, 0.0)


def test_multiplication_example():
    assert pc_mul(Paracomplex(1, 2), Paracomplex(3, 4)) == Paracomplex(11.0, 10.0)


def test_real_scalars_coerce():
    z = Paracomplex(1.5, -2.0)
    assert 2 * z == Paracomplex(3.0, -4.0)
    assert z + 1 == Paracomplex(2.5, -2.0)
    assert 1 - z == Paracomplex(-0.5, 2.0)


class TestRingProperties:
    def test_commutative_and_associative(self):
        zs = _random_numbers(300)
        for a, b, c in zip(zs[0::3], zs[1::3], zs[2::3]):
            assert a * b == b * a
            left, right = (a * b) * c, a * (b * c)
            assert left.re == pytest.approx(right.re, rel=1e-12, abs=1e-12)
            assert left.im == pytest.approx(right.im, rel=1e-12, abs=1e-12)

    def test_distributive(self):
        zs = _random_numbers(300, seed=1)
        for a, b, c in zip(zs[0::3], zs[1::3], zs[2::3]):
            left, right = a * (b + c), a * b + a * c
            assert left.re == pytest.approx(right.re, rel=1e-12, abs=1e-12)
            assert left.im == pytest.approx(right.im, rel=1e-12, abs=1e-12)

    def test_square_norm_is_multiplicative(self):
        zs = _random_numbers(400, seed=2)
        for a, b in zip(zs[0::2], zs[1::2]):
            assert pc_sq_norm(a * b) == pytest.approx(pc_sq_norm(a) * pc_sq_norm(b), rel=1e-12, abs=1e-12)

    def test_conjugate_product_is_square_norm(self):
        for z in _random_numbers(100, seed=3):
            w = z * z.conj()
            assert w.im == 0.0
            assert w.re == pytest.approx(z.sq_norm(), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("z, expected", [
    (Paracomplex(0.0, 0.0), CausalClass.ZERO),
    (Paracomplex(1e-12, -1e-12), CausalClass.ZERO),
    (Paracomplex(1.0, 1.0), CausalClass.NULL_NONZERO),
    (Paracomplex(3.0, -3.0), CausalClass.NULL_NONZERO),
    (Paracomplex(2.0, 1.0), CausalClass.POSITIVE),
    (Paracomplex(1.0, 2.0), CausalClass.NEGATIVE),
])
def test_classify(z, expected):
    assert pc_classify(z) == expected


def test_null_tolerance_is_relative():
    z = Paracomplex(1e6, 1e6 + 1e-3)
    assert pc_classify(z) == CausalClass.NULL_NONZERO
    assert pc_classify(Paracomplex(1.0, 1.0 + 1e-3)) == CausalClass.NEGATIVE


def test_classify_rejects_non_positive_tolerances():
    with pytest.raises(ValueError):
        pc_classify(J, eps_zero=0.0)
    with pytest.raises(ValueError):
        classify_array(np.zeros(3), np.zeros(3), eps_null=-1.0)


def test_classify_array_matches_scalar_classification():
    rng = np.random.default_rng(4)
    re = rng.uniform(-1, 1, size=200)
    im = rng.uniform(-1, 1, size=200)
    re[:20] = 0.0
    im[:20] = 0.0
    im[20:40] = re[20:40]
    im[40:60] = -re[40:60]
    codes = classify_array(re, im, EPS_ZERO, EPS_NULL)
    for k in range(200):
        assert CODE_CLASSES[int(codes[k])] == pc_classify(Paracomplex(re[k], im[k]))
    assert np.all(codes[:20] == CLASS_CODES[CausalClass.ZERO])
    assert np.all(codes[20:60] == CLASS_CODES[CausalClass.NULL_NONZERO])


def test_json_round_trip():
    z = Paracomplex(0.1, -7.25)
    assert Paracomplex.from_json(z.to_json()) == z
    assert z.to_json() == {"re": 0.1, "im": -7.25}


def test_sum_and_difference_norms_factor():
    # |γ1 ± γ2|² = (X+ ± Y+)(X- ± Y-) with X± = α1 ± β2, Y± = α2 ± β1
    rng = np.random.default_rng(5)
    for a1, a2, b1, b2 in rng.uniform(-1, 1, size=(10_000, 4)):
        g1, g2 = Paracomplex(a1, b1), Paracomplex(a2, b2)
        Xp, Xm, Yp, Ym = a1 + b2, a1 - b2, a2 + b1, a2 - b1
        assert abs(pc_sq_norm(g1 + g2) - (Xp + Yp) * (Xm + Ym)) <= 1e-12
        assert abs(pc_sq_norm(g1 - g2) - (Xp - Yp) * (Xm - Ym)) <= 1e-12
