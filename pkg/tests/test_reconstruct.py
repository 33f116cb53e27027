import math
from types import SimpleNamespace

import numpy as np
import pytest

from od_enclosure.core import reconstruct
from od_enclosure.core.fem import ForwardModel
from od_enclosure.core.geometry import (
    InsufficientDataError,
    equispaced_directions,
    hausdorff_distance,
    orthonormal_frame,
    support_function_true,
)
from od_enclosure.core.indicator import (
    Classification,
    IndicatorCurve,
    capped_tau_grid,
    sample_curve,
)
from od_enclosure.core.read import read_scenario
from od_enclosure.core.reconstruct import (
    _widened,
    estimate_support,
    reconstruct_hull,
    scan_levels,
)

UP = orthonormal_frame((0.0, 1.0))


class FakeSampler:
    """Stands in for the indicator: decays below the true support value, persists above."""

    def __init__(self, inclusion=None, undecided_first=False, always=None):
        self.inclusion = inclusion
        self.undecided_first = undecided_first
        self.always = always
        self.calls = []

    def __call__(self, model, omega, t, config=None, *, taus=None, omega_index=None, **kwargs):
        self.calls.append((omega_index, t, taus is not None))
        taus = np.geomspace(1.0, 32.0, 6) if taus is None else np.asarray(taus)
        curve = IndicatorCurve(omega=omega, t=t, taus=taus, values=np.ones(len(taus)))
        if self.always is not None:
            curve.classification = self.always
        elif self.undecided_first and not self.calls[-1][2]:
            curve.classification = Classification.UNDECIDED
        elif t < support_function_true(self.inclusion, omega):
            curve.classification = Classification.DECAYS
        else:
            curve.classification = Classification.PERSISTS
        return curve


@pytest.fixture()
def fake_model(s1_medium):
    return SimpleNamespace(medium=s1_medium, check_guards=lambda: None)


def _patch(monkeypatch, sampler):
    monkeypatch.setattr(reconstruct, "sample_curve", sampler)
    monkeypatch.setattr(reconstruct, "capped_tau_grid", lambda *args: np.geomspace(1, 32, 6))
    return sampler


def test_scan_levels(fake_model, fast_config):
    levels = scan_levels(fake_model, UP, fast_config)
    step = 0.05 * math.sqrt(2)
    assert levels[0] == pytest.approx(step)
    np.testing.assert_allclose(np.diff(levels), step)
    assert levels[-1] < 1 - 0.5 * step
    # the step never drops below the mesh size
    fine = scan_levels(fake_model, UP, fast_config.copy(coarse_dt=0.01))
    assert fine[1] - fine[0] == pytest.approx(fast_config.h_mesh)


def test_widened_grid():
    grid = np.geomspace(8.0, 128.0, 6)
    widened = _widened(grid)
    assert len(widened) == 8
    assert widened[0] == pytest.approx(2.0)
    assert widened[-1] == pytest.approx(128.0)


def test_estimate_support(monkeypatch, fake_model, fast_config, disk):
    _patch(monkeypatch, FakeSampler(disk))
    estimate = estimate_support(fake_model, UP, fast_config, omega_index=0)
    truth = support_function_true(disk, UP)
    assert truth == pytest.approx(0.45)
    assert 0 <= estimate.h - truth <= fast_config.h_mesh
    lower, upper = estimate.bracket
    assert upper - lower <= fast_config.h_mesh
    assert lower < truth <= upper
    assert not estimate.flagged
    assert estimate.levels[0]["classification"] == "DECAYS"
    assert estimate.as_dict()["bracket_width"] == pytest.approx(upper - lower)


def test_estimate_support_explicit_scan(monkeypatch, fake_model, fast_config, disk):
    sampler = _patch(monkeypatch, FakeSampler(disk))
    estimate = estimate_support(fake_model, UP, fast_config, scan=[0.1, 0.3, 0.5, 0.7])
    assert [t for _, t, _ in sampler.calls[:3]] == [0.1, 0.3, 0.5]
    assert estimate.bracket[0] >= 0.3
    assert estimate.bracket[1] <= 0.5


def test_no_inclusion_detected(monkeypatch, fake_model, fast_config):
    _patch(monkeypatch, FakeSampler(always=Classification.DECAYS))
    estimate = estimate_support(fake_model, UP, fast_config)
    assert estimate.no_inclusion
    assert estimate.bracket is None
    assert len(estimate.levels) == len(scan_levels(fake_model, UP, fast_config))


def test_persists_at_first_level(monkeypatch, fake_model, fast_config):
    _patch(monkeypatch, FakeSampler(always=Classification.PERSISTS))
    estimate = estimate_support(fake_model, UP, fast_config)
    first = scan_levels(fake_model, UP, fast_config)[0]
    assert estimate.h == pytest.approx(first)
    assert estimate.bracket == (estimate.h, estimate.h)
    assert estimate.flagged


def test_undecided_levels_are_retried(monkeypatch, fake_model, fast_config, disk):
    sampler = _patch(monkeypatch, FakeSampler(disk, undecided_first=True))
    estimate = estimate_support(fake_model, UP, fast_config)
    # every level is sampled twice, the second time on the widened grid
    assert [wide for _, _, wide in sampler.calls] == [False, True] * len(estimate.levels)
    assert not estimate.flagged
    assert 0 <= estimate.h - 0.45 <= fast_config.h_mesh


def test_undecided_counts_as_persisting(monkeypatch, fake_model, fast_config):
    _patch(monkeypatch, FakeSampler(always=Classification.UNDECIDED))
    estimate = estimate_support(fake_model, UP, fast_config)
    assert estimate.flagged
    assert estimate.h == pytest.approx(scan_levels(fake_model, UP, fast_config)[0])
    assert estimate.levels[0]["classification"] == "UNDECIDED"


def test_reconstruct_hull(monkeypatch, fake_model, fast_config, disk):
    _patch(monkeypatch, FakeSampler(disk))
    result, estimates = reconstruct_hull(fake_model, fast_config)
    assert len(estimates) == fast_config.n_omega
    assert [e.omega_index for e in estimates] == list(range(fast_config.n_omega))
    assert not result.no_inclusion
    assert not result.degraded
    assert not result.empty
    assert all(e.curves == [] for e in estimates)
    # each half-plane sits at most one bisection tolerance inside its support line
    assert hausdorff_distance(result.hull, disk) < 2 * fast_config.h_mesh


def test_reconstruct_hull_null(monkeypatch, fake_model, fast_config):
    _patch(monkeypatch, FakeSampler(always=Classification.DECAYS))
    result, _ = reconstruct_hull(fake_model, fast_config)
    assert result.no_inclusion
    assert result.empty
    assert all(math.isnan(h) for h in result.h_values)


def test_reconstruct_hull_degraded(monkeypatch, fake_model, fast_config):
    _patch(monkeypatch, FakeSampler(always=Classification.PERSISTS))
    result, _ = reconstruct_hull(fake_model, fast_config)
    assert result.degraded
    assert all(result.flagged)


def test_reconstruct_needs_directions(fake_model, fast_config):
    with pytest.raises(InsufficientDataError, match="at least 8 directions"):
        reconstruct_hull(fake_model, fast_config, equispaced_directions(8)[:4])


@pytest.mark.slow
def test_s1_support_upward(get_scenario_path):
    scenario = read_scenario(get_scenario_path("s1_coarse.yaml"))
    mesh = scenario.forward_mesh()
    model = ForwardModel(scenario.medium, mesh)
    estimate = estimate_support(model, UP, scenario.config)
    h = scenario.config.h_mesh
    assert estimate.h == pytest.approx(0.45, abs=2 * h)


@pytest.mark.slow
def test_null_medium_scan(get_scenario_path):
    scenario = read_scenario(get_scenario_path("null.yaml"))
    model = ForwardModel(scenario.medium, scenario.forward_mesh())
    estimate = estimate_support(model, UP, scenario.config)
    assert estimate.no_inclusion


@pytest.mark.slow
def test_s1_reconstruction(get_scenario_path):
    scenario = read_scenario(get_scenario_path("s1_coarse.yaml"))
    model = ForwardModel(scenario.medium, scenario.forward_mesh())
    result, _ = reconstruct_hull(model, scenario.config)
    assert not result.no_inclusion
    assert hausdorff_distance(result.hull, scenario.medium.inclusion) < 0.15


@pytest.mark.slow
def test_s1_fine_scan(s1_scenario, s1_fine_model):
    """The scan never overshoots, and levels above its estimate do not decay."""
    config = s1_scenario.config
    h = config.h_mesh
    estimate = estimate_support(s1_fine_model, UP, config)
    assert not estimate.no_inclusion
    assert estimate.h <= 0.45 + 2 * h
    for level in (estimate.h + 0.05, estimate.h + 0.1):
        taus = _widened(capped_tau_grid(config, s1_scenario.medium, UP, level))
        curve = sample_curve(s1_fine_model, UP, level, config, taus=taus)
        assert curve.classification is not Classification.DECAYS


@pytest.mark.slow
def test_s1_fine_reconstruction(s1_scenario, s1_fine_model):
    config = s1_scenario.config
    h = config.h_mesh
    inclusion = s1_scenario.medium.inclusion
    result, estimates = reconstruct_hull(s1_fine_model, config)
    assert not result.no_inclusion
    assert len(estimates) == 16
    tolerance = max(3 * h, 0.15 * (1 - math.cos(math.pi / 16)))
    assert hausdorff_distance(result.hull, inclusion, h) <= tolerance
    for estimate in estimates:
        assert estimate.h <= support_function_true(inclusion, estimate.omega) + 2 * h


@pytest.mark.slow
@pytest.mark.parametrize("name,tolerance", [("square.yaml", 0.06), ("lshape.json", 0.15)])
def test_polygon_reconstruction(get_scenario_path, name, tolerance):
    scenario = read_scenario(get_scenario_path(name))
    config = scenario.config
    inclusion = scenario.medium.inclusion
    model = ForwardModel(scenario.medium, scenario.forward_mesh())
    result, estimates = reconstruct_hull(model, config)
    assert not result.no_inclusion
    # only the convex hull is visible to the scan
    assert hausdorff_distance(result.hull, inclusion.convex_hull(), config.h_mesh) < tolerance
    for estimate in estimates:
        assert not estimate.no_inclusion
        assert estimate.h <= support_function_true(inclusion, estimate.omega) + 2 * config.h_mesh
