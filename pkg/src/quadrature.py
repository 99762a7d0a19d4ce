"""Panel quadrature rules: Gauss-Legendre panels, dyadic grading, local interpolation."""

from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import BarycentricInterpolator


@lru_cache(maxsize=None)
def reference_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre nodes and weights on [-1, 1] (read-only arrays)."""
    nodes, weights = leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_legendre(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule mapped to [a, b]."""
    nodes, weights = reference_rule(n)
    half = 0.5 * (b - a)
    return a + half * (nodes + 1.0), half * weights


def composite_gauss(breaks: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Concatenated Gauss-Legendre rules on consecutive intervals of ``breaks``."""
    nodes, weights = reference_rule(n)
    a, b = np.asarray(breaks[:-1]), np.asarray(breaks[1:])
    half = 0.5 * (b - a)
    points = a[:, None] + half[:, None] * (nodes[None, :] + 1.0)
    return points.ravel(), (half[:, None] * weights[None, :]).ravel()


def dyadic_breaks(a: float, b: float, levels: int, toward: str) -> np.ndarray:
    """Breakpoints of [a, b] halved ``levels`` times toward one end.

    Args:
        a: Left end.
        b: Right end.
        levels: Number of halvings; 0 returns ``[a, b]``.
        toward: ``"left"`` or ``"right"``.
    """
    length = b - a
    fractions = 0.5 ** np.arange(levels, 0, -1)
    if toward == "left":
        return np.concatenate(([a], a + length * fractions, [b]))
    if toward == "right":
        return np.concatenate(([a], b - length * fractions[::-1], [b]))
    raise ValueError(f"toward must be 'left' or 'right', got {toward!r}")


def graded_rule(a: float, b: float, anchor: float, n: int, levels: int):
    """Gauss rule on [a, b] refined dyadically toward ``anchor`` in [a, b].

    The anchor is a breakpoint, so no node ever lands on it.
    """
    parts = []
    if anchor > a:
        parts.append(dyadic_breaks(a, anchor, levels, "right"))
    if anchor < b:
        parts.append(dyadic_breaks(anchor, b, levels, "left"))
    breaks = np.unique(np.concatenate(parts))
    return composite_gauss(breaks, n)


@lru_cache(maxsize=None)
def _interpolator(n: int) -> BarycentricInterpolator:
    nodes, _ = reference_rule(n)
    return BarycentricInterpolator(nodes, np.eye(n))


def interpolation_matrix(n: int, points: np.ndarray) -> np.ndarray:
    """Matrix mapping values at the n reference Gauss nodes to values at ``points``.

    ``points`` are local coordinates in [-1, 1].
    """
    return np.atleast_2d(_interpolator(n)(np.asarray(points, dtype=float)))
