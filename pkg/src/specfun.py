"""Hankel functions, Helmholtz kernels and the vertical wavenumber.

Points are arrays whose last axis has length 2; every kernel broadcasts over
the leading axes, so ``greens(w, x[:, None, :], y[None, :, :])`` yields the
full target-by-source matrix.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError

logger = logging.getLogger(__name__)


def _h0(z: np.ndarray) -> np.ndarray:
    return special.j0(z) + 1j * special.y0(z)


def _h1(z: np.ndarray) -> np.ndarray:
    return special.j1(z) + 1j * special.y1(z)


def hankel1(order: int, x):
    """Hankel function of the first kind, H_order(x) = J_order(x) + i Y_order(x).

    Args:
        order: 0 or 1.
        x: Positive real argument (scalar or array).

    Returns:
        Complex scalar or array matching the shape of ``x``.

    Raises:
        DomainError: If ``order`` is unsupported or any ``x <= 0``.
    """
    if order not in (0, 1):
        raise DomainError(f"Unsupported Hankel order {order}; only 0 and 1 are available")
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("Hankel function requires x > 0")
    value = _h0(x) if order == 0 else _h1(x)
    return value[()] if value.ndim == 0 else value


def _separation(x, y) -> tuple[np.ndarray, np.ndarray]:
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.hypot(diff[..., 0], diff[..., 1])
    if np.any(r == 0):
        raise DomainError("Green's function evaluated at coincident points")
    return diff, r


def greens(omega: float, x, y):
    """Free-space Helmholtz Green's function (i/4) H0(omega |x - y|)."""
    _, r = _separation(x, y)
    return 0.25j * _h0(omega * r)


def greens_gradient(omega: float, x, y) -> np.ndarray:
    """Gradient of ``greens`` with respect to the target ``x``."""
    diff, r = _separation(x, y)
    radial = -0.25j * omega * _h1(omega * r) / r
    return radial[..., None] * diff


def greens_hessian(omega: float, x, y) -> np.ndarray:
    """Hessian of ``greens`` with respect to the target ``x``, shape (..., 2, 2)."""
    diff, r = _separation(x, y)
    z = omega * r
    h0, h1 = _h0(z), _h1(z)
    g1 = -0.25j * omega * h1
    g2 = -0.25j * omega**2 * (h0 - h1 / z)
    outer = diff[..., :, None] * diff[..., None, :] / (r**2)[..., None, None]
    eye = np.eye(2)
    return g2[..., None, None] * outer + (g1 / r)[..., None, None] * (eye - outer)


def greens_normal_derivative(omega: float, x, y, nu, side: str = "target"):
    """Directional derivative of ``greens`` along ``nu``.

    Args:
        omega: Angular frequency.
        x: Target point(s).
        y: Source point(s).
        nu: Unit vector(s), broadcast against the points.
        side: ``"target"`` differentiates in x (adjoint double-layer kernel),
            ``"source"`` differentiates in y (double-layer kernel).

    Raises:
        DomainError: For coincident points or an unknown side.
    """
    if side not in ("target", "source"):
        raise DomainError(f"side must be 'target' or 'source', got {side!r}")
    grad = greens_gradient(omega, x, y)
    value = np.sum(np.asarray(nu) * grad, axis=-1)
    return value if side == "target" else -value


def combined_field(omega: float, x, z, nu_z):
    """Combined-field source at z: nu_z . grad_z G(x, z) + i omega G(x, z)."""
    grad = greens_gradient(omega, x, z)
    return -np.sum(np.asarray(nu_z) * grad, axis=-1) + 1j * omega * greens(omega, x, z)


def combined_field_gradient(omega: float, x, z, nu_z) -> np.ndarray:
    """Gradient in x of ``combined_field``."""
    hess = greens_hessian(omega, x, z)
    nu_z = np.asarray(nu_z, dtype=float)
    return -np.einsum("...ij,...j->...i", hess, np.broadcast_to(nu_z, hess.shape[:-1])) + (
        1j * omega * greens_gradient(omega, x, z)
    )


def vertical_wavenumber(omega: float, beta):
    """Vertical wavenumber k with k**2 = omega**2 - beta**2.

    Inside the circle |beta| <= omega the principal root of omega^2 - beta^2 is
    taken, outside it i times the principal root of beta^2 - omega^2. On the
    real axis this is the usual propagating/evanescent choice; off the axis the
    branch cuts are arcs of the circle |beta| = omega.
    """
    beta = np.asarray(beta, dtype=complex)
    inside = np.abs(beta) <= omega
    k = np.where(
        inside,
        np.sqrt(omega**2 - beta**2),
        1j * np.sqrt(beta**2 - omega**2),
    )
    return k[()] if k.ndim == 0 else k


@dataclass(frozen=True)
class Wavenumbers:
    """Frequency, Bloch wavenumber and period of one quasiperiodic problem."""

    omega: float
    kappa: complex
    d: float

    @property
    def alpha(self) -> complex:
        return complex(np.exp(1j * self.kappa * self.d))

    def beta(self, n):
        """Horizontal wavenumbers kappa + 2 pi n / d."""
        return self.kappa + 2 * np.pi * np.asarray(n) / self.d

    def k(self, n):
        return vertical_wavenumber(self.omega, self.beta(n))


def adjoint_double_layer_kernel(
    omega: float, targets: np.ndarray, target_normals: np.ndarray, sources: np.ndarray,
    chunk: int = 512,
) -> np.ndarray:
    """Matrix of nu_x . grad_x G(x_i, y_j) for all target/source pairs.

    Coincident pairs are returned as 0; callers overwrite them with a
    singular quadrature.
    """
    targets = np.asarray(targets, dtype=float)
    sources = np.asarray(sources, dtype=float)
    out = np.empty((len(targets), len(sources)), dtype=complex)
    for start in range(0, len(targets), chunk):
        stop = start + chunk
        diff = targets[start:stop, None, :] - sources[None, :, :]
        r = np.hypot(diff[..., 0], diff[..., 1])
        coincident = r == 0
        r = np.where(coincident, 1.0, r)
        projected = np.einsum("mk,mnk->mn", target_normals[start:stop], diff)
        block = -0.25j * omega * _h1(omega * r) * projected / r
        block[coincident] = 0.0
        out[start:stop] = block
    return out
