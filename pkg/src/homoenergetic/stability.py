"""Large-shear stability machinery for simple shear with Maxwell molecules.

W0 is the quadratic form whose coefficients solve the second-moment
eigenproblem; ``criterion_search`` looks numerically for a quadratic form W
with Wfun(xi; W) + H(xi) < 0 on the whole unit sphere, a sufficient
condition for the self-similar profile to have moments of order above two.
"""
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import xlogy

from .kernel import perpendicular_frame, sphere_rule
from .moments import simple_shear_lambda1


@dataclass
class QuadraticForm:
    coefficients: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.coefficients, dtype=float)
        if C.shape != (3, 3) or not np.allclose(C, C.T, atol=1e-12, rtol=0):
            raise ValueError("quadratic form needs a symmetric 3x3 matrix")
        self.coefficients = 0.5 * (C + C.T)

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        return np.einsum("...i,ij,...j->...", xi, self.coefficients, xi)

    def bilinear(self, x, y):
        return np.einsum("...i,ij,...j->...", np.asarray(x), self.coefficients, np.asarray(y))

    @property
    def positive_definite(self):
        return bool(np.all(np.linalg.eigvalsh(self.coefficients) > 0))


def build_W0(K, b):
    lam = simple_shear_lambda1(K, b)
    W = np.diag([1.0, 3 * lam - 2, 1.0])
    W[0, 1] = W[1, 0] = -K / (2 * b * lam)
    form = QuadraticForm(W)
    if not (W[0, 0] > 0 and np.linalg.det(W) > 0):
        raise ArithmeticError("W0 is not positive definite")
    return form


def growth_rate(K, b):
    return b * (simple_shear_lambda1(K, b) - 1)


def _kernel_b(kernel, b):
    return kernel.b if b is None else b


def phi_residual(kernel, K, b=None, xi=(1.0, 0.0, 0.0), n_theta=64, n_phi=128):
    """Phi(xi; W0) by sphere quadrature; vanishes when b matches the kernel."""
    b = _kernel_b(kernel, b)
    W = build_W0(K, b)
    xi = np.asarray(xi, dtype=float)
    r = np.linalg.norm(xi)
    if r == 0:
        return 0.0
    omega, wts, c = sphere_rule(xi / r, n_theta, n_phi)
    par = (r * c)[:, None] * omega
    perp = xi - par
    collision = -2 * np.sum(wts * kernel(c) * W.bilinear(perp, par))
    C = W.coefficients
    shear = -K * xi[1] * 2 * (C[0] @ xi)
    return float(collision + shear - 2 * growth_rate(K, b) * W(xi))


def wfun_matrix(W, K, b):
    """Matrix S with Wfun(xi; W; K) = xi^T S xi, using the closed-form collision tensor."""
    W = np.asarray(W, dtype=float)
    e2 = np.array([0.0, 1.0, 0.0])
    r0 = W[0]
    return (-2 * b * (W - np.trace(W) / 3 * np.eye(3))
            - K * (np.outer(e2, r0) + np.outer(r0, e2))
            - 2 * growth_rate(K, b) * W)


def wfun_quadrature(kernel, W, K, b=None, xi=(1.0, 0.0, 0.0), n_theta=64, n_phi=128):
    """Wfun(xi; W; K) with the collision integral done by quadrature."""
    b = _kernel_b(kernel, b)
    form = QuadraticForm(W)
    xi = np.asarray(xi, dtype=float)
    r = np.linalg.norm(xi)
    omega, wts, c = sphere_rule(xi / r, n_theta, n_phi)
    par = (r * c)[:, None] * omega
    perp = xi - par
    coll = np.sum(wts * kernel(c) * (form(perp) + form(par) - form(xi)))
    return float(coll - K * xi[1] * 2 * (form.coefficients[0] @ xi) - 2 * growth_rate(K, b) * form(xi))


def H_functional(kernel, K, b=None, xi=(1.0, 0.0, 0.0), n_theta=64, n_phi=128, chunk=128):
    """H(xi; K) for one unit vector or an array of them (shape (m, 3))."""
    b = _kernel_b(kernel, b)
    C = build_W0(K, b).coefficients
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    xs = np.atleast_2d(xi)
    if np.any(np.abs(np.linalg.norm(xs, axis=1) - 1) > 1e-10):
        raise ValueError("xi must be a unit vector")
    x, wx = np.polynomial.legendre.leggauss(n_theta)
    weights = wx * kernel(x) * (2 * np.pi / n_phi)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    s = np.sqrt(1 - x * x)
    out = np.empty(len(xs))
    for start in range(0, len(xs), chunk):
        X = xs[start:start + chunk]
        u, w = perpendicular_frame(X)
        R = np.cos(phi)[None, :, None] * u[:, None, :] + np.sin(phi)[None, :, None] * w[:, None, :]
        Wxx = np.einsum("mi,ij,mj->m", X, C, X)
        Wrx = np.einsum("mpi,ij,mj->mp", R, C, X)
        Wrr = np.einsum("mpi,ij,mpj->mp", R, C, R)
        # W(omega) and omega^T W xi as functions of (cos theta, phi)
        x_ = x[None, :, None]
        s_ = s[None, :, None]
        W_om = x_**2 * Wxx[:, None, None] + 2 * x_ * s_ * Wrx[:, None, :] + s_**2 * Wrr[:, None, :]
        W_omx = x_ * Wxx[:, None, None] + s_ * Wrx[:, None, :]
        par = x_**2 * W_om
        perp = Wxx[:, None, None] - 2 * x_ * W_omx + par
        ref = Wxx[:, None, None]
        perp = np.clip(perp, 0.0, None)
        val = xlogy(perp, perp / ref) + xlogy(par, par / ref) - (perp + par - ref)
        out[start:start + chunk] = np.einsum("mtp,t->m", val, weights)
    return float(out[0]) if single else out


def icosphere(level):
    """Unit vectors of a subdivided icosahedron (10 * 4**level + 2 nodes)."""
    p = (1 + np.sqrt(5)) / 2
    verts = [(-1, p, 0), (1, p, 0), (-1, -p, 0), (1, -p, 0), (0, -1, p), (0, 1, p),
             (0, -1, -p), (0, 1, -p), (p, 0, -1), (p, 0, 1), (-p, 0, -1), (-p, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    V = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(level):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = V[i] + V[j]
                V.append(m / np.linalg.norm(m))
                cache[key] = len(V) - 1
            return cache[key]

        new = []
        for a, b_, c in faces:
            ab, bc, ca = mid(a, b_), mid(b_, c), mid(c, a)
            new += [(a, ab, ca), (b_, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return np.array(V)


@dataclass
class StabilityVerdict:
    K: float
    b: float
    criterion_value: float
    holds: bool
    argmin_form: QuadraticForm
    argmin_xi: np.ndarray  # where the maximum over the sphere is attained
    note: str = ("upper bound on the infimum: holds=true certifies the condition, "
                 "holds=false is inconclusive")

    def to_dict(self):
        return {
            "K": float(self.K), "b": float(self.b), "criterion_value": float(self.criterion_value),
            "holds": bool(self.holds), "argmin_form": self.argmin_form.coefficients.tolist(),
            "argmin_xi": [float(x) for x in self.argmin_xi], "note": self.note,
        }


_SYM = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]


def _sym_basis():
    """Symmetric unit matrices for the six independent entries."""
    feats = []
    for i, j in _SYM:
        E = np.zeros((3, 3))
        E[i, j] = E[j, i] = 1.0
        feats.append(E)
    return np.stack(feats)


def _values(W, K, b, nodes, H):
    S = wfun_matrix(W, K, b)
    return np.einsum("mi,ij,mj->m", nodes, S, nodes) + H


def criterion_search(kernel, K, b=None, level=5, polish=True, n_polish=5, w_bound=1e3,
                     n_theta=64, n_phi=128):
    """Best quadratic form W for the large-shear stability condition.

    The condition asks for W with Wfun(xi; W) + H(xi) < 0 on the whole unit
    sphere, i.e. inf_W max_xi [...] < 0. On a grid the objective is a maximum
    of functions affine in W, so the grid optimum is a linear program. The
    maximum over xi for the optimal W is then refined by local ascent from
    the best nodes, which can only raise the value, so holds=true is a
    certificate (up to the ascent finding the global maximum) and
    holds=false is inconclusive.
    """
    from scipy.optimize import linprog

    b = _kernel_b(kernel, b)
    nodes = icosphere(level)
    H = H_functional(kernel, K, b, nodes, n_theta, n_phi)
    basis = _sym_basis()
    # column k: xi^T S(E_k) xi at every node
    cols = np.column_stack([np.einsum("mi,ij,mj->m", nodes, wfun_matrix(E, K, b), nodes) for E in basis])
    # variables (w_1..w_6, t): minimize t subject to cols w + H <= t
    A_ub = np.column_stack([cols, -np.ones(len(nodes))])
    bounds = [(-w_bound, w_bound)] * 6 + [(None, None)]
    res = linprog(np.r_[np.zeros(6), 1.0], A_ub=A_ub, b_ub=-H, bounds=bounds, method="highs")
    if res.status != 0:
        raise ArithmeticError(f"linear program failed: {res.message}")
    W = np.einsum("k,kij->ij", res.x[:6], basis)
    # the kernel direction W0 does not change the objective; report the part orthogonal to it
    W0 = build_W0(K, b).coefficients
    W = W - np.sum(W * W0) / np.sum(W0 * W0) * W0
    vals = _values(W, K, b, nodes, H)
    value = float(vals.max())
    xi = nodes[int(np.argmax(vals))]
    if polish:
        S = wfun_matrix(W, K, b)
        for k in np.argsort(-vals)[:n_polish]:
            base = nodes[k]
            u, w = perpendicular_frame(base)
            g = lambda p: -float(_unit_from_tangent(p, base, u, w) @ S @ _unit_from_tangent(p, base, u, w)
                                 + H_functional(kernel, K, b, _unit_from_tangent(p, base, u, w), n_theta, n_phi))
            r = minimize(g, np.zeros(2), method="Nelder-Mead",
                         options={"initial_simplex": [[0, 0], [0.02, 0], [0, 0.02]],
                                  "xatol": 1e-9, "fatol": 1e-14, "maxiter": 400})
            if -r.fun > value:
                value, xi = float(-r.fun), _unit_from_tangent(r.x, base, u, w)
    return StabilityVerdict(K, b, value, bool(value < 0), QuadraticForm(W), np.asarray(xi))


def _unit_from_tangent(p, base, u, w):
    x = base + p[0] * u + p[1] * w
    return x / np.linalg.norm(x)
