import numpy as np
import pytest

from src.assembly import (
    build_point_source,
    build_W,
    neumann_rhs,
    rayleigh_bloch_sum,
)
from src.errors import ConfigError
from src.solver import QPSolution, eval_field, periodized_source, solve_quasi
from src.specfun import Wavenumbers

KAPPA = 0.97 + 0.1j


def test_block_dimensions(cosine_dense):
    blocks = cosine_dense.blocks
    N, cell = blocks.pan.n, blocks.cell
    assert N == 128
    for part in (blocks.A0, blocks.A_minus1, blocks.A_plus1):
        assert part.shape == (N, N)
    assert blocks.B.shape == (N, cell.N_proxy)
    assert blocks.C(1.0).shape == (cell.M_w, N)
    assert blocks.Q(1.0).shape == (cell.M_w, cell.N_proxy)
    assert blocks.Z(1.0).shape == (2 * cell.M, N)
    assert blocks.W(KAPPA).shape == (2 * cell.M, 2 * blocks.K + 1)
    full = blocks.full_matrix(KAPPA)
    assert full.shape == (N + cell.M_w + 2 * cell.M, N + cell.N_proxy + 2 * blocks.K + 1)


def test_blocks_are_read_only(cosine_dense):
    with pytest.raises(ValueError):
        cosine_dense.blocks.A0[0, 0] = 0.0


def test_alpha_scaling(cosine_dense):
    blocks = cosine_dense.blocks
    alpha = np.exp(1j * KAPPA)
    expected = blocks.A0 + alpha * blocks.A_plus1 + blocks.A_minus1 / alpha
    assert np.allclose(blocks.A(alpha), expected)
    assert np.allclose(blocks.Q(alpha), blocks.Q_left - blocks.Q_right / alpha)


def test_rayleigh_bloch_flux_rows(cosine_dense):
    cell = cosine_dense.cell
    w = Wavenumbers(1.2, KAPPA, 1.0)
    K = 5
    W = build_W(cell, w, K)
    values, flux = W[: cell.M], W[cell.M :]
    assert np.allclose(flux, 1j * w.k(np.arange(-K, K + 1))[None, :] * values)
    assert np.allclose(values[:, K], np.exp(1j * KAPPA * cell.top_x))


def test_periodized_source_conditions(cosine_dense):
    pre = cosine_dense
    cell = pre.cell
    source = periodized_source(pre, KAPPA, (-0.2, 0.35))
    assert source.residual < 1e-8

    alpha = source.wavenumbers.alpha
    y = np.linspace(cell.y_bottom + 0.2, cell.y_top - 0.05, 7)
    left = np.column_stack([np.full_like(y, cell.x_left), y])
    right = np.column_stack([np.full_like(y, cell.x_right), y])
    u_left, u_right = source.value(left), source.value(right)
    assert np.allclose(u_left, u_right / alpha, rtol=1e-7, atol=1e-9 * np.abs(u_left).max())

    top = np.column_stack([np.linspace(-0.4, 0.4, 9), np.full(9, cell.y_top)])
    rb = rayleigh_bloch_sum(source.wavenumbers, source.a_hat, top, cell.y_top)
    assert np.allclose(source.value(top), rb, rtol=1e-7, atol=1e-9 * np.abs(rb).max())


def test_source_gradient_matches_differences(cosine_dense):
    source = periodized_source(cosine_dense, KAPPA, (-0.2, 0.35))
    x, h = np.array([[0.25, 0.4]]), 1e-6
    fd = [
        (source.value(x + h * e) - source.value(x - h * e))[0] / (2 * h)
        for e in np.eye(2)
    ]
    assert np.allclose(source.gradient(x)[0], fd, rtol=1e-6)


def test_source_outside_cell_is_rejected(cosine_dense):
    w = Wavenumbers(1.2, KAPPA, 1.0)
    with pytest.raises(ConfigError) as info:
        build_point_source(cosine_dense.cell, w, (0.7, 0.3))
    assert info.value.field == "problem.x0"


def test_neumann_rhs_is_incident_flux(cosine_dense):
    pan = cosine_dense.pan
    source = periodized_source(cosine_dense, KAPPA, (-0.2, 0.35))
    g = neumann_rhs(source, pan)
    expected = -np.sum(pan.normals * source.gradient(pan.nodes), axis=1)
    assert np.allclose(g, expected)


def test_full_matrix_least_squares_agrees_with_schur_solve(cosine_dense):
    pre = cosine_dense
    blocks, cell = pre.blocks, pre.cell
    source = periodized_source(pre, KAPPA, (-0.2, 0.35))
    sol = solve_quasi(pre, KAPPA, source)

    full = blocks.full_matrix(KAPPA)
    rhs = np.concatenate([sol.g, np.zeros(full.shape[0] - pre.pan.n)])
    x, *_ = np.linalg.lstsq(full, rhs, rcond=1e-13)
    N, Np = pre.pan.n, cell.N_proxy
    assert np.linalg.norm(full @ x - rhs) < 1e-7 * np.linalg.norm(rhs)

    oracle = QPSolution(
        pre=pre,
        wavenumbers=sol.wavenumbers,
        sigma=x[:N],
        c=x[N : N + Np],
        a=x[N + Np :],
        g=sol.g,
    )
    targets = np.array([[0.3, 0.45], [0.1, 1.4]])
    expected = eval_field(oracle, targets)
    assert np.allclose(eval_field(sol, targets), expected, rtol=1e-6)
