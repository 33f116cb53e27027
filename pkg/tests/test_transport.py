import math

import numpy as np
import pytest
import sympy

from od_enclosure.core.geometry import GeometryError, PolygonalDomain, orthonormal_frame
from od_enclosure.core.medium import AffineTensor, ConstantTensor, MediumSpec, RotatedTensor
from od_enclosure.core.od import Cutoff, CutoffError, ODParams, build_chain, leading_profile
from od_enclosure.core.od.profile import smooth_step
from od_enclosure.core.od.symbol import build_symbol
from od_enclosure.core.od.transport import (
    TransportChain,
    correction_norms,
    poly_add,
    poly_ds,
    poly_multiply,
    poly_shift,
    poly_trim,
    transport_corrections,
    transversal_solve,
)


def _medium(domain, tensor, k=0.0):
    return MediumSpec(domain, tensor, None, PolygonalDomain.empty(), k=k)


def _params(domain, tau, order=2, t=0.3, omega=(0.0, 1.0), sigma=1):
    frame = orthonormal_frame(omega)
    return ODParams(frame, t, tau, Cutoff.for_slice(domain, frame, t), order=order, sigma=sigma)


def test_smooth_step():
    x = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    np.testing.assert_allclose(smooth_step(x), [0.0, 0.0, 0.5, 1.0, 1.0])
    inner = np.linspace(0.01, 0.99, 99)
    assert np.all(np.diff(smooth_step(inner)) > 0)
    np.testing.assert_allclose(smooth_step(inner) + smooth_step(1 - inner), 1.0)


def test_cutoff():
    chi = Cutoff(0.0, 1.0, plateau=0.8)
    assert chi.ramp == pytest.approx(0.1)
    np.testing.assert_allclose(chi(np.array([0.1, 0.5, 0.9])), 1.0)
    np.testing.assert_allclose(chi(np.array([0.0, 1.0, -0.5, 1.5])), 0.0)
    assert 0 < chi(np.array([0.05]))[0] < 1
    with pytest.raises(CutoffError, match="empty cutoff support"):
        Cutoff(1.0, 1.0)
    with pytest.raises(CutoffError, match="plateau"):
        Cutoff(0.0, 1.0, plateau=1.0)


def test_cutoff_for_slice(unit_square):
    frame = orthonormal_frame((1.0, 1.0))
    chi = Cutoff.for_slice(unit_square, frame, math.sqrt(2) / 2)
    assert chi.width == pytest.approx(math.sqrt(2))
    with pytest.raises(CutoffError, match="no cross-section"):
        Cutoff.for_slice(unit_square, frame, 2.0)
    with pytest.raises(CutoffError, match="width"):
        Cutoff.for_slice(unit_square, frame, 0.01, min_width=0.5)


@pytest.mark.parametrize(
    "changes,message",
    [
        ({"tau": 0.0}, "tau must be positive"),
        ({"tau": math.inf}, "tau must be positive"),
        ({"order": 5}, "correction order"),
        ({"b": 0}, "amplitude"),
        ({"sigma": 0}, "sigma"),
    ],
)
def test_params_invalid(unit_square, changes, message):
    frame = orthonormal_frame((0.0, 1.0))
    values = {"tau": 10.0, "order": 2, "b": 1.0, "sigma": 1, **changes}
    with pytest.raises(ValueError, match=message):
        ODParams(frame, 0.3, chi=Cutoff.for_slice(unit_square, frame, 0.3), **values)


def test_params_coordinates(unit_square):
    params = _params(unit_square, 10.0)
    assert params.xi == pytest.approx((-1.0, 0.0))
    y, s = params.coordinates(np.array([[0.2, 0.3], [0.2, 0.8]]))
    np.testing.assert_allclose(y, [-0.2, -0.2])
    np.testing.assert_allclose(s, [0.0, 0.5], atol=1e-15)
    with pytest.raises(GeometryError, match="below the slice"):
        params.coordinates(np.array([[0.2, 0.1]]))


def test_leading_profile_decays(unit_square):
    params = _params(unit_square, 20.0)
    symbol = build_symbol(_medium(unit_square, ConstantTensor(1.0)), params.omega, 1, 0.3, 0.0)
    profile = leading_profile(params, symbol)
    values = profile(np.array([[0.5, 0.3], [0.5, 0.4]]))
    assert abs(values[0]) == pytest.approx(1.0)
    # exp(-tau s) with Im lambda = 1
    assert abs(values[1]) == pytest.approx(math.exp(-2.0))


def test_poly_helpers():
    a = np.array([[1.0], [2.0]])
    b = np.array([[3.0], [0.0], [1.0]])
    np.testing.assert_allclose(poly_add(a, b)[:, 0], [4.0, 2.0, 1.0])
    np.testing.assert_allclose(poly_shift(a)[:, 0], [0.0, 1.0, 2.0])
    np.testing.assert_allclose(poly_ds(b)[:, 0], [0.0, 2.0])
    np.testing.assert_allclose(poly_multiply(a, b)[:, 0], [3.0, 6.0, 1.0, 2.0])
    assert len(poly_trim(np.array([[1.0], [0.0], [0.0]]))) == 1


def test_transversal_solve_is_exact():
    s = sympy.symbols("s")
    rhs = np.array([[1.0, 2.0, -1.0], [0.5, 0.0, 3.0], [0.0, 1.0, 0.25]], dtype=complex)
    mu = np.array([-2.0, -5.0, -0.5])
    solution = transversal_solve(rhs, mu)
    assert len(solution) == len(rhs) + 1
    for column in range(3):
        p = sum(sympy.Float(solution[m, column].real) * s**m for m in range(len(solution)))
        target = sum(sympy.Float(rhs[m, column].real) * s**m for m in range(len(rhs)))
        lhs = sympy.diff(p, s, 2) + sympy.Float(mu[column]) * sympy.diff(p, s)
        defect = sympy.Poly(sympy.expand(lhs - target), s).all_coeffs()
        assert max(abs(float(c)) for c in defect) < 1e-12
        assert p.subs(s, 0) == 0
    np.testing.assert_array_equal(solution.imag, 0.0)


@pytest.fixture(scope="module")
def isotropic_chain(unit_square):
    medium = _medium(unit_square, ConstantTensor(1.0))
    return build_chain(_params(unit_square, 400.0, order=2), medium)


def test_chain_shape(isotropic_chain):
    terms = isotropic_chain.corrections
    # v_0 .. v_{N+1}
    assert len(terms) == 4
    assert len(terms[0]) == 1
    np.testing.assert_allclose(isotropic_chain.lam, 1j)
    assert isotropic_chain.a_decay == pytest.approx(1.0)
    assert isotropic_chain.depth == pytest.approx(8.0 / 400.0)


@pytest.mark.parametrize(
    "tensor,k",
    [
        (ConstantTensor(1.0), 0.0),
        (ConstantTensor(((2.0, 0.5), (0.5, 1.0))), 1.5),
        (RotatedTensor((1.0, 4.0), 0.4), 0.0),
        (AffineTensor(1.0, (((0.5, 0.0), (0.0, 0.0)), ((0.0, 0.0), (0.0, 0.5)))), 0.0),
        (RotatedTensor((1.0, 3.0), 0.2, (0.3, 0.1)), 1.0),
    ],
    ids=["isotropic", "anisotropic", "rotated", "affine", "rotating"],
)
def test_residual_is_last_remainder(unit_square, tensor, k):
    chain = build_chain(_params(unit_square, 60.0), _medium(unit_square, tensor, k))
    difference = poly_add(chain.residual, -chain.remainder(chain.corrections[-1]))
    scale = chain.tau**2 * np.abs(chain.corrections[0]).max()
    assert np.abs(difference).max() < 1e-9 * scale


def test_residual_decreases_with_order(unit_square):
    medium = _medium(unit_square, ConstantTensor(((2.0, 0.5), (0.5, 1.0))))
    norms = []
    for order in range(4):
        chain = build_chain(_params(unit_square, 400.0, order=order), medium)
        norms.append(chain.l2_norm(chain.residual))
    assert all(later < earlier for earlier, later in zip(norms, norms[1:]))


def test_chain_terms_decrease(isotropic_chain):
    norms = correction_norms(isotropic_chain)
    assert all(later < earlier for earlier, later in zip(norms, norms[1:]))


def test_correction_terms_vanish_at_the_slice(isotropic_chain):
    for term in isotropic_chain.corrections[1:]:
        np.testing.assert_allclose(term[0], 0.0, atol=1e-14)


def test_transport_corrections(unit_square):
    params = _params(unit_square, 50.0, order=1)
    medium = _medium(unit_square, ConstantTensor(1.0))
    assert len(transport_corrections(params, None, medium)) == 2
    assert len(transport_corrections(params, None, medium, include_last=True)) == 3
    symbol = build_symbol(medium, params.omega, -1, params.t, 0.0)
    with pytest.raises(ValueError, match="different xi"):
        transport_corrections(params, symbol, medium)


def test_chain_refines_coarse_grid(unit_square):
    params = _params(unit_square, 50.0)
    medium = _medium(unit_square, ConstantTensor(1.0))
    coarse = TransportChain(params, medium, 64)
    assert coarse.spectral_tail > 1e-12
    chain = build_chain(params, medium, 64)
    assert chain.points > 64
    assert chain.spectral_tail <= 1e-12


def test_evaluate_off_support(isotropic_chain):
    chi = isotropic_chain.params.chi
    values = isotropic_chain.evaluate(
        isotropic_chain.total, np.array([chi.lower - 0.1, chi.upper + 0.1]), np.zeros(2)
    )
    np.testing.assert_array_equal(values, 0.0)
