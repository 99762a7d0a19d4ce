import numpy as np
import numpy.linalg as la
import pytest
import scipy.linalg as sla

from src.errors import NumericalError
from src.geometry import build_panelization, stair_curve
from src.lowrank import (
    build_corner_compression,
    compress_neighbor,
    corner_solve,
    corner_split,
    interp_decomp,
    pinv_solve,
    proxy_circle,
    woodbury_apply,
)

from .conftest import build, stair_config


def test_interp_decomp_finds_rank(rng):
    M = rng.standard_normal((30, 3)) @ rng.standard_normal((3, 20))
    factor = interp_decomp(M, 1e-12)
    assert factor.rank == 3
    assert np.allclose(factor.P[factor.skeleton], np.eye(3))
    assert la.norm(factor.P @ M[factor.skeleton] - M) < 1e-10 * la.norm(M)


def test_interp_decomp_identity_and_zero():
    assert interp_decomp(np.eye(6), 1e-13).rank == 6
    zero = interp_decomp(np.zeros((5, 4)), 1e-13)
    assert zero.rank == 0
    assert zero.P.shape == (5, 0)


def test_interp_decomp_forced_rank(rng):
    M = rng.standard_normal((12, 12))
    factor = interp_decomp(M, 1e-13, rank=4)
    assert factor.rank == 4
    assert factor.P.shape == (12, 4)


def test_pinv_solve_truncates(rng):
    U = la.qr(rng.standard_normal((8, 8)))[0]
    s = np.array([1.0, 0.5, 0.1, 1e-3, 1e-16, 0, 0, 0])
    M = U @ np.diag(s) @ U.T
    rhs = M @ rng.standard_normal(8)
    x, rank, singular = pinv_solve(M, rhs, 1e-13)
    assert rank == 4
    assert np.allclose(M @ x, rhs, atol=1e-12)
    assert singular[0] == pytest.approx(1.0)

    zero, rank, _ = pinv_solve(np.zeros((3, 2)), np.ones(3), 1e-13)
    assert rank == 0
    assert np.array_equal(zero, np.zeros(2))


@pytest.mark.parametrize("arc", [None, "left", "right"])
def test_proxy_circle(arc):
    proxy = proxy_circle(np.array([0.5, 0.0]), 2.0, 40, arc)
    assert np.allclose(np.hypot(*(proxy.points - proxy.center).T), 2.0)
    assert proxy.weight * 40 == pytest.approx((2 if arc is None else 1) * np.pi * 2.0)
    if arc == "left":
        assert np.all(proxy.normals[:, 0] < 0)
    elif arc == "right":
        assert np.all(proxy.normals[:, 0] > 0)


def test_woodbury_matches_dense(rng):
    n, r = 40, 6
    A0 = np.eye(n) * 4 + rng.standard_normal((n, n))
    L, R = rng.standard_normal((n, r)), 0.3 * rng.standard_normal((r, n))
    f = rng.standard_normal((n, 2))
    lu = sla.lu_factor(A0)

    def A0_solve(b):
        return sla.lu_solve(lu, b)

    expected = la.solve(A0 + L @ R, f)
    assert np.allclose(woodbury_apply(A0_solve, L, R, f), expected)
    cached = woodbury_apply(A0_solve, L, R, f, A0inv_L=A0_solve(L))
    assert np.allclose(cached, expected)
    assert np.allclose(woodbury_apply(A0_solve, L[:, :0], R[:0], f), A0_solve(f))


def test_woodbury_accuracy_at_production_size(rng):
    n, r = 320, 24
    A0 = 4 * np.eye(n) + rng.standard_normal((n, n)) / np.sqrt(n)
    L = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
    R = (rng.standard_normal((r, n)) + 1j * rng.standard_normal((r, n))) / np.sqrt(n)
    f = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    lu = sla.lu_factor(A0)
    x = woodbury_apply(lambda b: sla.lu_solve(lu, b), L, R, f)
    expected = la.solve(A0 + L @ R, f)
    assert la.norm(x - expected) < 1e-10 * la.norm(expected)


def test_woodbury_singular_capacitance():
    n = 4
    L = np.eye(n)[:, :1]
    R = -np.eye(n)[:1]
    with pytest.raises(NumericalError):
        woodbury_apply(lambda b: b, L, R, np.ones(n))


@pytest.mark.parametrize("direction", ["left", "right"])
@pytest.mark.parametrize("proxy_kind", ["full_circle", "half_circle"])
def test_neighbor_compression_reconstructs(cosine_dense, direction, proxy_kind):
    blocks = cosine_dense.blocks
    A_side = blocks.A_minus1 if direction == "left" else blocks.A_plus1
    comp = compress_neighbor(A_side, blocks.pan, direction, proxy_kind, 1e-13, blocks.omega)
    assert 0 < comp.rank < blocks.pan.n
    assert np.array_equal(comp.R, A_side[comp.skeleton])
    error = la.norm(A_side - comp.L @ comp.R) / la.norm(A_side)
    assert error < 1e-8


def test_half_circle_ranks_are_smaller(cosine_id_full, cosine_id_half):
    full, half = cosine_id_full.neighbors.ranks, cosine_id_half.neighbors.ranks
    assert sum(half) <= sum(full)


def test_corner_mode_uses_configured_neighbor_proxy(stair_corner):
    assert stair_corner.neighbors.proxy_kind == "half_circle"
    full = build(stair_config(solver={"mode": "corner", "neighbor_proxy": "full_circle"}))
    assert full.neighbors.proxy_kind == "full_circle"
    assert sum(stair_corner.neighbors.ranks) <= sum(full.neighbors.ranks)


def test_corner_split_sizes():
    refined = build_panelization(stair_curve(1.0), 16, 6, 16)
    corners, smooth = corner_split(refined)
    assert sum(len(c) for c in corners) == 384
    assert len(smooth) == 256
    everything = np.sort(np.concatenate([*corners, smooth]))
    assert np.array_equal(everything, np.arange(640))

    unrefined = build_panelization(stair_curve(1.0), 16, 0, 16)
    corners, smooth = corner_split(unrefined)
    assert corners == []
    assert len(smooth) == 256


def test_corner_split_cutoff_returns_largest_panels():
    pan = build_panelization(stair_curve(1.0), 16, 6, 16)
    corners, smooth = corner_split(pan, refinement_cutoff=2)
    # the two largest refined panels on each of the four corner sides go back
    assert sum(len(c) for c in corners) == 384 - 4 * 2 * 16
    assert len(smooth) == 256 + 4 * 2 * 16


def test_corner_compression_matches_dense(stair_dense, rng):
    blocks = stair_dense.blocks
    A0 = np.array(blocks.A0)
    cc = build_corner_compression(A0, blocks.pan, blocks.omega, 1e-13)
    assert cc.n == blocks.pan.n
    assert cc.n_compress < blocks.pan.n
    assert len(cc.ranks) == 3

    f = rng.standard_normal(blocks.pan.n) + 1j * rng.standard_normal(blocks.pan.n)
    expected = la.solve(A0, f)
    assert la.norm(cc.solve(f) - expected) < 1e-8 * la.norm(expected)

    F = rng.standard_normal((blocks.pan.n, 3))
    assert np.allclose(cc.solve(F), la.solve(A0, F), rtol=1e-7, atol=1e-9)


def test_corner_compression_without_corners(cosine_dense, rng):
    A0 = np.array(cosine_dense.blocks.A0)
    cc = build_corner_compression(A0, cosine_dense.pan, cosine_dense.omega, 1e-13)
    assert cc.n_compress == cosine_dense.pan.n
    f = rng.standard_normal(cosine_dense.pan.n) + 1j * rng.standard_normal(cosine_dense.pan.n)
    x = cc.solve(f)
    assert np.iscomplexobj(x)
    assert la.norm(x - la.solve(A0, f)) < 1e-10 * la.norm(x)


def test_block_diagonal_corner_solve_keeps_sizes(stair_dense, stair_corner):
    blocks = stair_dense.blocks
    cc = build_corner_compression(
        np.array(blocks.A0), blocks.pan, blocks.omega, 1e-13, block_diagonal=True
    )
    assert cc.ranks == stair_corner.corner.ranks
    assert cc.n_compress == stair_corner.n_compress
    assert np.all(np.isfinite(cc.solve(np.ones(blocks.pan.n))))


def test_corner_solve_splits_unknowns(stair_dense, rng):
    blocks = stair_dense.blocks
    A0 = np.array(blocks.A0)
    cc = build_corner_compression(A0, blocks.pan, blocks.omega, 1e-13)
    f = rng.standard_normal(blocks.pan.n)
    q_c, q_s = corner_solve(cc, f[cc.corner], f[cc.smooth])
    expected = la.solve(A0, f)
    assert np.allclose(q_c, expected[cc.corner], rtol=1e-7, atol=1e-9)
    assert np.allclose(q_s, expected[cc.smooth], rtol=1e-7, atol=1e-9)


@pytest.mark.slow
def test_compressed_size_is_independent_of_refinement():
    sizes = []
    for n_ref in (4, 8, 12):
        pre = build(stair_config(geometry={"N_ref": n_ref}, solver={"mode": "corner"}))
        sizes.append(pre.n_compress)
        assert pre.n_compress < pre.pan.n
    assert max(sizes) <= 1.05 * min(sizes)
