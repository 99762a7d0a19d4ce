import logging

import numpy as np
import pytest

from src.config import GridSpec
from src.errors import ConfigError, NumericalError
from src.floquet import (
    contour,
    graded_nodes,
    grid_points,
    image_source_field,
    masked_targets,
    quadrature_from_config,
    solve_aperiodic,
    trapezoid_nodes,
)
from src.specfun import greens

from .conftest import build, make_config


def test_contour_values():
    assert contour(0.0) == 0
    assert contour(np.pi / 2) == pytest.approx(np.pi / 2 - 1j)
    assert contour(np.pi / 4, d=2.0, amplitude=0.5) == pytest.approx(np.pi / 4 - 0.5j)
    assert contour(np.pi / 2, amplitude=0.0) == pytest.approx(np.pi / 2)


@pytest.mark.parametrize("d", [1.0, 2.5])
def test_trapezoid_weights(d):
    quad = trapezoid_nodes(20, d)
    assert quad.n == 20
    assert quad.kappa[0] == pytest.approx(-np.pi / d)
    assert quad.weights.sum() == pytest.approx(2 * np.pi / d, abs=1e-12)
    assert np.allclose(quad.kappa, contour(quad.s, d, 1.0))


def test_trapezoid_integrates_bloch_phase_to_zero():
    quad = trapezoid_nodes(40)
    assert abs(np.sum(quad.weights * np.exp(1j * quad.kappa))) < 1e-12
    assert abs(np.sum(quad.weights * np.exp(-2j * quad.kappa))) < 1e-12


@pytest.mark.parametrize("target", ["zero", "pi_over_d"])
def test_graded_without_grading_is_trapezoid(target):
    graded, plain = graded_nodes(32, 0.0, target), trapezoid_nodes(32)
    assert np.allclose(graded.kappa, plain.kappa, atol=1e-14)
    assert np.allclose(graded.weights, plain.weights, atol=1e-14)


@pytest.mark.parametrize(("target", "cluster"), [("zero", 0.0), ("pi_over_d", -np.pi)])
def test_graded_nodes_cluster(target, cluster):
    b = 5.0
    flat = graded_nodes(60, b, target, amplitude=0.0)
    assert flat.weights.sum().real == pytest.approx(2 * np.pi, rel=1e-12)
    assert flat.weights.real.max() / flat.weights.real.min() == pytest.approx(np.cosh(b), rel=1e-9)

    theta = flat.kappa.real
    spacing = np.diff(theta)
    assert np.all(spacing > 0)
    assert spacing.max() / spacing.min() == pytest.approx(np.cosh(b), rel=0.2)
    densest = np.argmin(flat.weights.real)
    assert theta[densest] == pytest.approx(cluster, abs=1e-12)


def test_graded_contour_integral():
    quad = graded_nodes(60, 3.0, "zero")
    assert quad.weights.sum() == pytest.approx(2 * np.pi, abs=1e-6)
    assert abs(np.sum(quad.weights * np.exp(1j * quad.kappa))) < 1e-6


@pytest.mark.parametrize(
    ("kwargs", "field"),
    [
        ({"N_kappa": 31, "b": 1.0, "target": "zero"}, "floquet.N_kappa"),
        ({"N_kappa": 30, "b": 701.0, "target": "zero"}, "floquet.b"),
        ({"N_kappa": 30, "b": -1.0, "target": "zero"}, "floquet.b"),
        ({"N_kappa": 30, "b": 1.0, "target": "edge"}, "floquet.grading"),
    ],
)
def test_graded_nodes_rejects(kwargs, field):
    with pytest.raises(ConfigError) as info:
        graded_nodes(**kwargs)
    assert info.value.field == field


def test_quadrature_from_config():
    config = make_config(geometry={"d": 2.0}, floquet={"grading": "pi", "N_kappa": 12, "b": 2.0})
    quad = quadrature_from_config(config)
    assert quad.grading == "pi_over_d"
    assert quad.d == 2.0
    assert quad.n == 12


def test_image_source_field():
    x0, target = (0.1, 0.4), np.array([[0.5, 0.3]])
    expected = greens(1.2, target, np.array([0.1, -0.4]))
    assert np.allclose(image_source_field(1.2, x0, target), expected)
    lifted = image_source_field(1.2, (0.1, 0.9), target + [0, 0.5], y_wall=0.5)
    assert np.allclose(lifted, expected)


def test_grid_points():
    points, shape = grid_points(GridSpec(x=(0.0, 1.0, 3), y=(2.0, 3.0, 2)))
    assert shape == (2, 3)
    assert points.tolist()[:4] == [[0.0, 2.0], [0.5, 2.0], [1.0, 2.0], [0.0, 3.0]]


def test_masked_targets(cosine_dense):
    points = np.array([[0.0, 0.1], [0.0, 0.26], [0.0, 0.7], [3.0, 0.7]])
    assert masked_targets(cosine_dense, points).tolist() == [False, False, True, True]


def test_worker_count_does_not_change_result(cosine_dense):
    quad = trapezoid_nodes(6)
    targets = np.array([[0.3, 0.45], [2.4, 0.6]])
    serial = solve_aperiodic(cosine_dense, (-0.2, 0.35), targets, quad, workers=1)
    threaded = solve_aperiodic(cosine_dense, (-0.2, 0.35), targets, quad, workers=3)
    assert np.allclose(serial.scattered, threaded.scattered, rtol=1e-12, atol=0)
    assert [d.index for d in threaded.diagnostics] == list(range(6))
    assert np.allclose(
        serial.total - serial.scattered, greens(1.2, targets, np.array([-0.2, 0.35]))
    )


def test_node_failure_reports_index():
    pre = build(make_config(solver={"schur_residual_tol": 1e-30}))
    with pytest.raises(NumericalError) as info:
        solve_aperiodic(pre, (-0.2, 0.35), [[0.3, 0.45]], trapezoid_nodes(4))
    assert info.value.index == 0
    assert info.value.kappa == pytest.approx(complex(trapezoid_nodes(4).kappa[0]))


def test_high_frequency_warning(caplog):
    pre = build(make_config(floquet={"omega": 3.5}, solver={"schur_residual_tol": 1e-2}))
    with caplog.at_level(logging.WARNING):
        solve_aperiodic(pre, (-0.2, 0.35), [[0.3, 0.45]], trapezoid_nodes(2))
    assert "pi/d" in caplog.text


@pytest.mark.slow
@pytest.mark.parametrize(("grading", "b"), [("none", 0.0), ("zero", 1.5)])
def test_flat_boundary_matches_image_source(grading, b):
    config = make_config(
        geometry={"kind": "flat", "amplitude": 0.0},
        floquet={"N_kappa": 60, "grading": grading, "b": b},
    )
    pre = build(config)
    x0 = (-0.2, 0.35)
    targets = np.array([[0.3, 0.25], [0.3, 0.45], [-0.1, 0.8], [1.7, 0.5]])
    result = solve_aperiodic(pre, x0, targets, quadrature_from_config(config), workers=2)
    exact = image_source_field(pre.omega, x0, targets)
    error = np.max(np.abs(result.scattered - exact)) / np.max(np.abs(exact))
    assert error < 1e-8
