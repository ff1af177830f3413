"""Second-moment equations for Maxwell molecules and their spectral analysis.

Symmetric matrices are flattened in the order (11, 22, 33, 12, 13, 23);
off-diagonal coordinates are the plain matrix entries (no sqrt(2) weights).
"""
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from . import flows
from .errors import IntegrationError, NonRealLeadingEigenvalue

SYM_INDEX = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]
SYM_LABELS = ["M11", "M22", "M33", "M12", "M13", "M23"]
RTOL, ATOL = 1e-9, 1e-12


def sym_to_vec(M):
    M = np.asarray(M)
    return np.stack([M[..., i, j] for i, j in SYM_INDEX], axis=-1)


def vec_to_sym(x):
    x = np.asarray(x, dtype=float)
    M = np.empty(x.shape[:-1] + (3, 3))
    for k, (i, j) in enumerate(SYM_INDEX):
        M[..., i, j] = x[..., k]
        M[..., j, i] = x[..., k]
    return M


def moment_rhs(M, Q, b):
    """-QM - MQ^T - 2b(M - m I) with m = tr M / 3."""
    M = np.asarray(M, dtype=float)
    Q = np.asarray(Q, dtype=float)
    m = np.trace(M) / 3
    return -Q @ M - M @ Q.T - 2 * b * (M - m * np.eye(3))


@dataclass
class MomentOperator:
    matrix6: np.ndarray
    L: np.ndarray
    b: float
    alpha: float = 0.0

    def __call__(self, M):
        return vec_to_sym(self.matrix6 @ sym_to_vec(M))


def moment_operator(L, b, alpha=0.0):
    """6x6 matrix of M -> moment_rhs(M, L + alpha I, b)."""
    L = np.asarray(L, dtype=float)
    Q = L + alpha * np.eye(3)
    cols = [sym_to_vec(moment_rhs(vec_to_sym(e), Q, b)) for e in np.eye(6)]
    return MomentOperator(np.column_stack(cols), L, float(b), float(alpha))


@dataclass
class MomentTrajectory:
    t: np.ndarray
    M: np.ndarray  # (n, 3, 3)

    @property
    def trace(self):
        return np.trace(self.M, axis1=1, axis2=2)


def integrate_moments(M0, b, t_grid, Q=None, flow=None, alpha=0.0, rho0=1.0, method="rk45"):
    """Integrate dM/dt = -QM - MQ^T - 2 b rho(t) (M - m I).

    Either a constant ``Q`` (collision factor 1) or a deformation matrix
    ``flow`` (Q = L(t) + alpha I, collision factor rho(t) from the density
    law with rho(0) = rho0). ``method='expm'`` uses the 6x6 operator
    exponential and needs constant Q.
    """
    M0 = np.asarray(M0, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    if (Q is None) == (flow is None):
        raise ValueError("give exactly one of Q or flow")
    if method == "expm":
        if Q is None:
            raise ValueError("matrix exponential path needs constant Q")
        op = moment_operator(Q, b).matrix6
        x0 = sym_to_vec(M0)
        xs = [expm(op * (t - t_grid[0])) @ x0 for t in t_grid]
        return MomentTrajectory(t_grid, vec_to_sym(np.array(xs)))
    if method != "rk45":
        raise ValueError(f"unknown method {method!r}")

    if Q is not None:
        op = moment_operator(Q, b).matrix6
        fun = lambda t, x: op @ x
    else:
        A = flows.check_admissible(flows.as_matrix(flow), t_max=t_grid[-1])
        eye = np.eye(3)

        def fun(t, x):
            Qt = flows.evaluate_L(A, t) + alpha * eye
            return sym_to_vec(moment_rhs(vec_to_sym(x), Qt, b * flows.density(A, t, rho0)))

    sol = solve_ivp(fun, (t_grid[0], t_grid[-1]), sym_to_vec(M0), method="RK45",
                    t_eval=t_grid, rtol=RTOL, atol=ATOL)
    if sol.status != 0:
        raise IntegrationError(sol.message)
    return MomentTrajectory(sol.t, vec_to_sym(sol.y.T))


@dataclass
class EigenSolution:
    alpha_bar: float
    N_bar: np.ndarray
    positive_definite: bool
    eigenvalues: np.ndarray

    def to_dict(self):
        return {
            "alpha_bar": float(self.alpha_bar),
            "N_bar": self.N_bar.tolist(),
            "positive_definite": bool(self.positive_definite),
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
        }


def eigen_operator(L, b):
    """6x6 matrix of G -> -(LG + GL^T)/2 - b(G - tr(G)/3 I)."""
    return 0.5 * moment_operator(L, b).matrix6


def leading_eigenpair(L, b, tol=1e-9):
    if b <= 0:
        raise ValueError("b must be positive")
    w, V = np.linalg.eig(eigen_operator(L, b))
    scale = max(b, np.linalg.norm(L, 2))
    top = w.real.max()
    near = np.flatnonzero(w.real >= top - 1e-12 * scale)
    # prefer a real root among ties
    k = near[np.argmin(np.abs(w.imag[near]))]
    if abs(w[k].imag) > tol * scale:
        raise NonRealLeadingEigenvalue(w[k])
    N = vec_to_sym(V[:, k].real)
    N /= np.sqrt(np.sum(N * N))
    tr = np.trace(N)
    if tr < 0 or (tr == 0 and N.flat[np.flatnonzero(np.abs(N.ravel()) > 0)[0]] < 0):
        N = -N
    pd = bool(np.all(np.linalg.eigvalsh(N) > 0))
    order = np.argsort(-w.real, kind="stable")
    return EigenSolution(float(w[k].real), N, pd, w[order])


def eigen_residual(sol, L, b):
    N = sol.N_bar
    return sol.alpha_bar * N + 0.5 * (L @ N + N @ L.T) + b * (N - np.trace(N) / 3 * np.eye(3))


def simple_shear_lambda1(K, b):
    """Real root > 1 of lam^3 = lam^2 + K^2/(6 b^2) by safeguarded Newton."""
    if b <= 0:
        raise ValueError("b must be positive")
    q = K * K / (6 * b * b)
    if q == 0:
        return 1.0
    f = lambda x: x * x * (x - 1) - q
    lo, hi = 1.0, 1.0 + max(q, np.cbrt(q))
    x = hi
    for _ in range(200):
        fx = f(x)
        if fx > 0:
            hi = x
        else:
            lo = x
        d = 3 * x * x - 2 * x
        x_new = x - fx / d
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 4e-16 * x:
            return float(x_new)
        x = x_new
    return float(x)


def _polished_roots(coeffs_high_first):
    """Companion-matrix roots refined by two Newton steps each."""
    c = np.asarray(coeffs_high_first, dtype=complex)
    r = np.roots(c)
    dc = np.polyder(c)
    for _ in range(2):
        d = np.polyval(dc, r)
        ok = d != 0
        r[ok] = r[ok] - np.polyval(c, r[ok]) / d[ok]
    return r


def planar_shear_cubic(K, b):
    """Coefficients (highest first) of the planar-shear cubic in lam."""
    A, B = K / (2 * b), 1 / (2 * b)
    return [1.0, 3 * B - 1, 2 * B * B - 7 * B / 3, -(4 / 3) * B * B - (2 / 3) * A * A]


def planar_shear_beta(K, b):
    if b <= 0:
        raise ValueError("b must be positive")
    r = _polished_roots(planar_shear_cubic(K, b))
    top = r.real.max()
    near = r[r.real >= top - 1e-12 * max(1.0, abs(top))]
    lam = near[np.argmin(np.abs(near.imag))]
    if abs(lam.imag) > 1e-9 * max(1.0, abs(lam)):
        raise NonRealLeadingEigenvalue(lam)
    return float(b * (lam.real - 1))


def planar_shear_beta_k0(b):
    """Closed form of the planar-shear exponent at K = 0."""
    c = 1 / b
    return b * 0.5 * (-(c + 1) + np.sqrt((c - 1) ** 2 + (8 / 3) * c))


@dataclass
class HeatFluxRates:
    T_param: float
    A_rate: float
    R_rate: float
    stable: bool
    A_shear_convention: float  # 2(lam1 - 1) with K/b = T, reported alongside

    def to_dict(self):
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else float(v)) for k, v in self.__dict__.items()}


def heat_flux_polynomials(T):
    """Coefficient arrays (lowest first) for the energy-rate equation and both flux-rate equations."""
    T2 = T * T
    energy = np.array([-(2 / 3) * T2, 1.0, 2.0, 1.0])  # A(A+1)^2 - 2T^2/3
    sq = P.polypow([1.5, 1.0], 2)
    first = P.polysub(P.polymul(sq, [2 / 3, 1.0]), [T2 / 3])
    second = P.polysub(P.polymul(sq, P.polypow([2 / 3, 1.0], 2)), [2 * T2 * 31 / 36, 2 * T2])
    return energy, first, second


def heat_flux_rates(T):
    T = float(T)
    energy, first, second = heat_flux_polynomials(T)
    # the energy cubic has exactly one real root; the other two have real part < -1
    roots = _polished_roots(energy[::-1])
    A = float(roots[np.argmax(roots.real)].real)
    R = max(P.polyroots(first).real.max(), P.polyroots(second).real.max())
    return HeatFluxRates(T, A, float(R), bool(R < 1.5 * A), 2 * (simple_shear_lambda1(T, 1.0) - 1))


def heat_flux_witness(x):
    """3x^2 + 46x/9 + 4/3, positive for x >= 0."""
    x = np.asarray(x, dtype=float)
    return 3 * x * x + 46 * x / 9 + 4 / 3
