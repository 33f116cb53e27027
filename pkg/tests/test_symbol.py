import numpy as np
import pytest
import sympy

from od_enclosure.core.geometry import GeometryError, PolygonalDomain, orthonormal_frame
from od_enclosure.core.medium import AffineTensor, ConstantTensor, MediumSpec, RotatedTensor
from od_enclosure.core.od.symbol import (
    SymbolDegeneracyError,
    build_symbol,
    symbol_roots,
    xi_sign,
)


def _medium(domain, tensor):
    return MediumSpec(domain, tensor, None, PolygonalDomain.empty())


@pytest.mark.parametrize("sigma", [1, -1])
def test_isotropic_roots(unit_square, sigma):
    medium = _medium(unit_square, ConstantTensor(2.0))
    symbol = build_symbol(medium, orthonormal_frame((0.3, 0.7)), sigma, 0.2, [0.0, 0.1])
    np.testing.assert_allclose(symbol.lambda_plus, [1j, 1j])
    np.testing.assert_allclose(symbol.lambda_minus, [-1j, -1j])
    assert symbol.a_decay == pytest.approx(1.0)
    assert symbol.sigma == sigma


def test_random_tensors_match_companion_eigenvalues(unit_square, rng):
    for _ in range(50):
        tensor = RotatedTensor(tuple(rng.uniform(0.2, 10.0, 2)), rng.uniform(0, np.pi))
        angle = rng.uniform(0, 2 * np.pi)
        omega = orthonormal_frame((np.cos(angle), np.sin(angle)))
        sigma = int(rng.choice([-1, 1]))
        symbol = build_symbol(_medium(unit_square, tensor), omega, sigma, 0.0, 0.0)
        eigenvalues = np.linalg.eigvals(symbol.K[0])
        upper = eigenvalues[np.argmax(eigenvalues.imag)]
        lam = symbol.lambda_plus[0]
        assert lam.imag > 0
        assert lam == pytest.approx(upper, rel=1e-10)
        assert symbol.lambda_minus[0] == pytest.approx(np.conj(lam))
        # the principal symbol vanishes on (sigma eta + lambda omega)
        vector = sigma * np.asarray(omega.eta) + lam * np.asarray(omega.omega)
        assert vector @ tensor.evaluate(np.zeros((1, 2)))[0] @ vector == pytest.approx(
            0, abs=1e-10 * max(tensor.eigenvalues)
        )
        np.testing.assert_allclose(symbol.q_plus[0], [1.0, lam])


def test_roots_match_symbolic_solution():
    c_yy, c_ys, c_ss = sympy.Rational(3), sympy.Rational(1, 2), sympy.Rational(2)
    lam = sympy.symbols("lam")
    for sigma in (1, -1):
        roots = sympy.solve(c_ss * lam**2 + 2 * sigma * c_ys * lam + c_yy, lam)
        expected = max((complex(root) for root in roots), key=lambda root: root.imag)
        plus, minus = symbol_roots(np.array([3.0]), np.array([0.5]), np.array([2.0]), sigma)
        assert plus[0] == pytest.approx(expected)
        assert minus[0] == pytest.approx(expected.conjugate())


def test_sigma_mirrors_real_part(unit_square):
    medium = _medium(unit_square, ConstantTensor(((2.0, 0.7), (0.7, 1.0))))
    omega = orthonormal_frame((1.0, 0.0))
    plus = build_symbol(medium, omega, 1, 0.5, 0.0).lambda_plus[0]
    minus = build_symbol(medium, omega, -1, 0.5, 0.0).lambda_plus[0]
    assert minus.real == pytest.approx(-plus.real)
    assert minus.imag == pytest.approx(plus.imag)
    assert plus.real != pytest.approx(0.0)


def test_variable_background_decay(unit_square):
    tensor = AffineTensor(1.0, (((1.0, 0.0), (0.0, 0.0)), ((0.0, 0.0), (0.0, 0.0))))
    omega = orthonormal_frame((0.0, 1.0))
    # eta = (-1, 0): y = -x, so x runs over [0, 1] for y in [-1, 0]
    symbol = build_symbol(_medium(unit_square, tensor), omega, 1, 0.5, np.linspace(-1, 0, 11))
    # c_yy = 1 + x, c_ss = 1, c_ys = 0: Im lambda = sqrt(1 + x)
    np.testing.assert_allclose(symbol.decay_rates, np.sqrt(1 + np.linspace(1, 0, 11)))
    assert symbol.a_decay == pytest.approx(1.0)


def test_xi_sign():
    omega = orthonormal_frame((0.6, 0.8))
    assert xi_sign(omega, omega.eta) == 1
    assert xi_sign(omega, tuple(-v for v in omega.eta)) == -1
    assert xi_sign(omega, -1) == -1
    with pytest.raises(GeometryError, match="along eta"):
        xi_sign(omega, omega.omega)
    with pytest.raises(GeometryError, match="must be"):
        xi_sign(omega, 2)


def test_degenerate_symbol():
    with pytest.raises(SymbolDegeneracyError, match="real symbol roots"):
        symbol_roots(np.array([1.0]), np.array([2.0]), np.array([1.0]), 1)
    with pytest.raises(SymbolDegeneracyError, match="sample 1"):
        symbol_roots(np.array([1.0, 1.0]), np.array([0.0, 0.0]), np.array([1.0, -1.0]), 1)


def test_indefinite_background(unit_square):
    medium = _medium(unit_square, ConstantTensor(((1.0, 0.0), (0.0, -1.0))))
    with pytest.raises(SymbolDegeneracyError):
        build_symbol(medium, orthonormal_frame((1.0, 0.0)), 1, 0.5, 0.0)
