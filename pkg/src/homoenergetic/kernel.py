"""Collision kernels B(cos theta, |V|) = |V|**gamma * angular_part(cos theta).

Besides the kernel type this module computes the two scalar invariants
used everywhere else (the collision strength ``b`` and the total angular
rate ``lambda0``), samples scattering directions, and integrates the
second-moment collision tensor numerically.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate

from .errors import QuadratureError

N_TABLE = 1024
_CHECK_GRID = np.linspace(-1.0, 1.0, 4097)


@dataclass(frozen=True)
class AngularKernel:
    """Angular part of the cross-section plus the homogeneity exponent.

    ``angular_part`` must accept numpy arrays. ``values`` is only set for
    tabulated kernels and is kept for serialization.
    """

    angular_part: object
    gamma: float = 0.0
    name: str = "custom"
    values: tuple = field(default=None, compare=False)

    def __post_init__(self):
        y = np.asarray(self.angular_part(_CHECK_GRID), dtype=float)
        if y.shape != _CHECK_GRID.shape:
            y = np.broadcast_to(y, _CHECK_GRID.shape)
        if not np.all(np.isfinite(y)):
            raise ValueError("angular part must be finite (bounded, no atoms) on [-1, 1]")
        if np.any(y < 0):
            raise ValueError("angular part must be nonnegative on [-1, 1]")
        if not np.isfinite(self.gamma):
            raise ValueError("gamma must be finite")

    def __call__(self, x):
        return np.broadcast_to(np.asarray(self.angular_part(x), dtype=float), np.shape(x))

    def scaled(self, c):
        f = self.angular_part
        vals = None if self.values is None else tuple(c * v for v in self.values)
        return AngularKernel(lambda x: c * f(x), self.gamma, self.name, vals)

    def describe(self):
        d = {"name": self.name, "gamma": float(self.gamma)}
        if self.values is not None:
            d["values"] = [float(v) for v in self.values]
        return d

    @property
    def is_zero(self):
        return not np.any(self(_CHECK_GRID) > 0)

    @cached_property
    def cos_table(self):
        """Inverse-CDF table (cdf values, cos nodes) for the marginal of n.omega."""
        x = np.linspace(-1.0, 1.0, N_TABLE)
        pdf = self(x)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(x))])
        if cdf[-1] <= 0:
            raise ValueError("cannot sample from an identically zero kernel")
        return cdf / cdf[-1], x

    @cached_property
    def b(self):
        return compute_b(self)

    @cached_property
    def lambda0(self):
        return compute_lambda0(self)


def isotropic(gamma=0.0):
    return AngularKernel(lambda x: np.full(np.shape(x), 1.0 / (4 * np.pi)), gamma, "isotropic")


def quadratic(gamma=0.0):
    return AngularKernel(lambda x: np.asarray(x, dtype=float) ** 2, gamma, "quadratic")


def tabulated(values, gamma=0.0):
    """Kernel given by values at equispaced nodes on [-1, 1], linearly interpolated."""
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 1 or vals.size < 2:
        raise ValueError("need at least two tabulated values")
    nodes = np.linspace(-1.0, 1.0, vals.size)
    return AngularKernel(lambda x: np.interp(x, nodes, vals), gamma, "custom", tuple(vals.tolist()))


PRESETS = {"isotropic": isotropic, "quadratic": quadratic}


def make_kernel(name, gamma=0.0, values=None):
    if name == "custom":
        if values is None:
            raise ValueError("custom kernel needs tabulated values")
        return tabulated(values, gamma)
    if name not in PRESETS:
        raise ValueError(f"unknown kernel preset {name!r}")
    return PRESETS[name](gamma)


def _integrate(kernel, weight, rtol=1e-10):
    f = lambda x: float(kernel(np.array(x))) * weight(x)
    kw = {}
    if kernel.values is not None:
        n = len(kernel.values)
        kw = {"points": np.linspace(-1, 1, n)[1:-1], "limit": 2 * n + 50}
    else:
        kw = {"limit": 200}
    val, err = integrate.quad(f, -1.0, 1.0, epsabs=0.0, epsrel=rtol, **kw)
    scale = abs(val)
    if err > max(rtol * scale, 1e-300) and err > 1e-15 * max(scale, 1.0):
        raise QuadratureError(f"quadrature did not reach rtol={rtol}", achieved=err / max(scale, 1e-300))
    return val


def compute_b(kernel):
    """Collision strength 3*pi * int b~(x) x^2 (1 - x^2) dx."""
    return 3 * np.pi * _integrate(kernel, lambda x: x * x * (1 - x * x))


def compute_lambda0(kernel):
    """Total angular rate 2*pi * int b~(x) dx."""
    return 2 * np.pi * _integrate(kernel, lambda x: 1.0)


def perpendicular_frame(n):
    """Two unit vectors completing each row of ``n`` (shape (..., 3)) to a right-handed frame."""
    n = np.asarray(n, dtype=float)
    helper = np.zeros_like(n)
    use_x = np.abs(n[..., 0]) < 0.9
    helper[..., 0] = use_x
    helper[..., 1] = ~use_x
    u = np.cross(n, helper)
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    w = np.cross(n, u)
    return u, w


def sample_cos(kernel, u):
    """Map uniforms ``u`` to cos(theta) drawn from the marginal of n.omega."""
    cdf, x = kernel.cos_table
    return np.interp(u, cdf, x)


def sample_omega(kernel, n, rng, size=None):
    """Draw omega on the sphere with density proportional to b~(n . omega).

    Returns a single unit vector, or an array of shape (size, 3).
    """
    n = np.asarray(n, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-12:
        raise ValueError("n must be a unit vector")
    if kernel.is_zero:
        raise ValueError("cannot sample from an identically zero kernel")
    m = 1 if size is None else int(size)
    c = sample_cos(kernel, rng.random(m))
    phi = 2 * np.pi * rng.random(m)
    u, w = perpendicular_frame(n)
    s = np.sqrt(np.clip(1 - c * c, 0.0, None))
    omega = c[:, None] * n + s[:, None] * (np.cos(phi)[:, None] * u + np.sin(phi)[:, None] * w)
    return omega[0] if size is None else omega


def sphere_rule(axis, n_theta=64, n_phi=128):
    """Product Gauss-Legendre (in cos theta) x trapezoid (in phi) rule around ``axis``.

    Returns (omega, weights, cos) with omega of shape (n_theta*n_phi, 3).
    """
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    x, wx = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    u, w = perpendicular_frame(axis)
    s = np.sqrt(1 - x * x)
    ring = np.cos(phi)[:, None] * u + np.sin(phi)[:, None] * w
    omega = x[:, None, None] * axis + s[:, None, None] * ring[None, :, :]
    weights = np.repeat(wx * (2 * np.pi / n_phi), n_phi)
    return omega.reshape(-1, 3), weights, np.repeat(x, n_phi)


def z_tensor_quadrature(kernel, v, n_theta=64, n_phi=128):
    """Numerical Z(v) = int B(omega . v/|v|) (P_perp v) x (P v) d omega."""
    v = np.asarray(v, dtype=float)
    speed = np.linalg.norm(v)
    if speed == 0:
        return np.zeros((3, 3))
    omega, wts, c = sphere_rule(v / speed, n_theta, n_phi)
    par = (speed * c)[:, None] * omega
    perp = v - par
    wb = wts * kernel(c)
    return np.einsum("q,qi,qj->ij", wb, perp, par)


def z_tensor_closed_form(b, v):
    v = np.asarray(v, dtype=float)
    return b * (np.outer(v, v) - v @ v * np.eye(3) / 3)
