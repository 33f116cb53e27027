import csv
import dataclasses as dc
import math

import numpy as np
import pytest

from od_enclosure.core.config import EnclosureConfig
from od_enclosure.core.fem import generate_mesh
from od_enclosure.core.geometry import (
    GeometryError,
    PolygonalDomain,
    orthonormal_frame,
    rectangle,
    slice_polygon,
    support_function_true,
)
from od_enclosure.core.medium import AffineTensor, ConstantTensor, MediumSpec
from od_enclosure.core.od import (
    ODParams,
    ResolutionError,
    assemble_od_solution,
    depth_ratio,
    layer_integrals,
    trace_defect,
    write_debug_csv,
)
from od_enclosure.core.od.solution import region_integrals, slice_mesh_size
from od_enclosure.core.read import read_scenario

TAU = 12.0
LEVEL = 0.3


@pytest.fixture(scope="module")
def probe_config():
    return EnclosureConfig(h_mesh=1 / 16, chain_points=1024)


@pytest.fixture(scope="module")
def probe(s1_medium, probe_config):
    omega = orthonormal_frame((0.0, 1.0))
    params = ODParams.for_slice(s1_medium.domain, omega, LEVEL, TAU, probe_config)
    return assemble_od_solution(params, s1_medium, config=probe_config)


def test_slice_mesh_size(probe_config):
    assert slice_mesh_size(TAU, probe_config) == pytest.approx(2 * math.pi / (10 * TAU))
    assert slice_mesh_size(1.0, probe_config) == probe_config.h_mesh


def test_probe_layer(probe):
    assert probe.a_decay == pytest.approx(1.0)
    assert probe.guard["passed"]
    # the layer is t < x.omega < t + 8 / tau
    y = probe.mesh.nodes[:, 1]
    assert y.min() == pytest.approx(LEVEL)
    assert y.max() == pytest.approx(LEVEL + 8 / TAU)
    assert probe.mesh.h_mesh <= 2 * slice_mesh_size(TAU, EnclosureConfig(h_mesh=1 / 16))


def test_probe_norms(probe):
    assert math.isfinite(probe.residual_norm)
    assert math.isfinite(probe.r_h1_norm)
    assert probe.r_h1_norm >= 0


def test_trace_matches_cutoff(probe):
    # corrections vanish at the slice boundary, and so does the corrector
    assert trace_defect(probe) < 1e-6


def test_corrector_vanishes_on_layer_boundary(probe):
    boundary = probe.mesh.boundary_nodes
    np.testing.assert_allclose(probe.r[boundary], 0.0)


def test_evaluate_matches_nodal_values(probe):
    index = probe.mesh.interior_nodes[:20]
    np.testing.assert_allclose(probe.evaluate(probe.mesh.nodes[index]), probe.nodal_values()[index])


def test_gradient_of_explicit_part(probe):
    points = np.array([[0.5, LEVEL + 0.05], [0.3, LEVEL + 0.1]])
    step = 1e-6
    numerical = np.stack(
        [
            (probe.w_eval(points + [step, 0]) - probe.w_eval(points - [step, 0])) / (2 * step),
            (probe.w_eval(points + [0, step]) - probe.w_eval(points - [0, step])) / (2 * step),
        ],
        axis=-1,
    )
    np.testing.assert_allclose(probe.grad_w_eval(points), numerical, rtol=1e-4, atol=1e-6)


def test_explicit_part_below_slice(probe):
    with pytest.raises(GeometryError, match="below the slice"):
        probe.w_eval(np.array([[0.5, LEVEL - 0.1]]))


def test_probe_decays_into_slice(probe):
    ratio = depth_ratio(probe, 0.2)
    assert 0 < ratio < 2 * math.exp(-TAU * 0.2)


def test_operator_residual_is_small(probe):
    points = np.array([[0.5, LEVEL + 0.02], [0.4, LEVEL + 0.1]])
    residual = np.abs(probe.operator_residual(points))
    # compared with tau^2 |w|, the size of each principal term
    scale = TAU**2 * np.abs(probe.w_eval(points))
    assert np.all(residual < 0.5 * scale)


def test_layer_integrals(probe, disk):
    inclusion = layer_integrals(probe, disk)
    assert inclusion["area"] > 0
    assert inclusion["l2"] > 0
    assert inclusion["h1_semi"] > inclusion["l2"]
    outside = region_integrals(probe, rectangle((0.0, 0.0), (1.0, 0.2)))
    assert outside == {"l2": 0.0, "h1_semi": 0.0, "area": 0.0}


def test_coarse_slice_mesh_is_rejected(s1_medium, probe_config):
    omega = orthonormal_frame((0.0, 1.0))
    params = ODParams.for_slice(s1_medium.domain, omega, LEVEL, 100.0, probe_config)
    mesh = generate_mesh(rectangle((0.0, LEVEL), (1.0, LEVEL + 0.1)), 0.05)
    with pytest.raises(ResolutionError, match="does not resolve"):
        assemble_od_solution(params, s1_medium, mesh, probe_config)


def test_variable_background_probe(unit_square, probe_config):
    tensor = AffineTensor(1.0, (((0.5, 0.0), (0.0, 0.0)), ((0.0, 0.0), (0.0, 0.5))))
    medium = MediumSpec(unit_square, tensor, None, PolygonalDomain.empty())
    omega = orthonormal_frame((0.0, 1.0))
    params = ODParams.for_slice(unit_square, omega, LEVEL, TAU, probe_config)
    solution = assemble_od_solution(params, medium, config=probe_config)
    # Im lambda = sqrt(c_yy / c_ss) = sqrt((1 + x / 2) / (1 + t / 2))
    assert solution.a_decay == pytest.approx(math.sqrt(1 / (1 + LEVEL / 2)), rel=1e-3)
    assert trace_defect(solution) < 1e-6


def test_sigma_flips_oscillation(s1_medium, probe_config):
    omega = orthonormal_frame((0.0, 1.0))
    config = dc.replace(probe_config, xi_sign=-1)
    params = ODParams.for_slice(s1_medium.domain, omega, LEVEL, TAU, config)
    assert params.xi == pytest.approx((1.0, 0.0))


def test_write_debug_csv(probe, tmp_path):
    path = write_debug_csv(probe, tmp_path / "probe.csv", rows=16)
    with path.open(encoding="utf8") as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 16
    assert list(rows[0]) == [
        "x_prime",
        "re_lambda_plus",
        "im_lambda_plus",
        "abs_q_plus",
        "norm_v0",
        "norm_v1",
        "norm_v2",
        "norm_v3",
    ]
    assert float(rows[0]["im_lambda_plus"]) == pytest.approx(1.0)


RATE_TAUS = (20.0, 40.0, 80.0, 160.0)
INCLUSION_TAUS = (40.0, 80.0, 160.0, 320.0)


def _slope(taus, values):
    return np.polyfit(np.log(taus), np.log(values), 1)[0]


@pytest.mark.slow
@pytest.mark.parametrize("order", [0, 1, 2])
@pytest.mark.parametrize("k", [0.0, 1.0])
@pytest.mark.parametrize(
    "matrix", [((1.0, 0.0), (0.0, 1.0)), ((1.0, 0.0), (0.0, 4.0))], ids=["identity", "diag"]
)
def test_corrector_rate(unit_square, matrix, k, order):
    medium = MediumSpec(unit_square, ConstantTensor(matrix), None, PolygonalDomain.empty(), k=k)
    config = EnclosureConfig(order=order, h_mesh=1 / 16, chain_points=1024)
    omega = orthonormal_frame((0.0, 1.0))
    norms = []
    for tau in RATE_TAUS:
        params = ODParams.for_slice(unit_square, omega, LEVEL, tau, config)
        norms.append(assemble_od_solution(params, medium, config=config).r_h1_norm)
    assert _slope(RATE_TAUS, norms) <= -(order + 0.5) + 0.3


@pytest.mark.slow
def test_decay_below_depth(s1_medium, probe_config):
    omega = orthonormal_frame((0.0, 1.0))
    band = slice_polygon(s1_medium.domain, omega, LEVEL + 0.1, 0.2)
    norms = {}
    decay = math.inf
    for tau in (40.0, 80.0):
        params = ODParams.for_slice(s1_medium.domain, omega, LEVEL, tau, probe_config)
        solution = assemble_od_solution(params, s1_medium, config=probe_config)
        norms[tau] = math.sqrt(region_integrals(solution, band)["l2"])
        decay = min(decay, solution.a_decay)
    assert norms[40.0] / norms[80.0] >= math.exp(0.1 * 40.0 * decay / 2)


@pytest.mark.slow
@pytest.mark.parametrize("name", ["disk", "square"])
def test_inclusion_integral_rates(name, s1_medium, get_scenario_path, probe_config):
    if name == "disk":
        medium = s1_medium
    else:
        medium = read_scenario(get_scenario_path("square.yaml")).medium
    omega = orthonormal_frame((0.0, 1.0))
    level = support_function_true(medium.inclusion, omega)
    l2, h1 = [], []
    for tau in INCLUSION_TAUS:
        params = ODParams.for_slice(medium.domain, omega, level, tau, probe_config)
        solution = assemble_od_solution(params, medium, config=probe_config)
        integrals = layer_integrals(solution, medium.inclusion)
        l2.append(integrals["l2"])
        h1.append(integrals["h1_semi"])
    l2, h1 = np.array(l2), np.array(h1)
    assert _slope(INCLUSION_TAUS, h1 / l2) == pytest.approx(2.0, abs=0.3)
    if name == "square":
        # a corner at the level: |u|^2 ~ 1/tau^2, |grad u|^2 ~ 1
        assert _slope(INCLUSION_TAUS, l2) == pytest.approx(-2.0, abs=0.3)
        assert _slope(INCLUSION_TAUS, h1) == pytest.approx(0.0, abs=0.3)
    else:
        # a tangent curved boundary only slows the decay
        assert _slope(INCLUSION_TAUS, l2) >= -2.3
        assert _slope(INCLUSION_TAUS, h1) >= -0.3
