"""Linear deformation flows: L(t) = (I + tA)^-1 A, classification, drift maps, density.

The long-time family of L(t) depends only on the real Jordan structure of A.
Multiplicity and rank decisions use a relative tolerance ``tol`` (default
1e-10) because Jordan structure is discontinuous in A.
"""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import expm

from .errors import BlowUpError, DegenerateFlowError

TOL = 1e-10


class Family(str, Enum):
    HOMOGENEOUS_DILATATION = "HomogeneousDilatation"
    CYLINDRICAL_DILATATION = "CylindricalDilatation"
    CYLINDRICAL_DILATATION_SHEAR = "CylindricalDilatationShear"
    PLANAR_SHEAR = "PlanarShear"
    SIMPLE_SHEAR = "SimpleShear"
    SIMPLE_SHEAR_DECAYING_DILATATION = "SimpleShearDecayingDilatation"
    COMBINED_ORTHOGONAL_SHEAR = "CombinedOrthogonalShear"


# families whose L(t) decays like 1/t; everything else has constant leading part
DECAYING = {
    Family.HOMOGENEOUS_DILATATION,
    Family.CYLINDRICAL_DILATATION,
    Family.CYLINDRICAL_DILATATION_SHEAR,
    Family.PLANAR_SHEAR,
}


@dataclass
class FlowCase:
    family: Family
    shear_params: list
    basis: np.ndarray  # columns e1, e2, e3
    normal_form: np.ndarray = field(default=None)  # basis^T A basis

    def to_dict(self):
        return {
            "family": self.family.value,
            "shear_params": [float(k) for k in self.shear_params],
            "basis": self.basis.tolist(),
        }


def as_matrix(A):
    A = np.asarray(A, dtype=float)
    if A.shape == (9,):
        A = A.reshape(3, 3)
    if A.shape != (3, 3):
        raise ValueError("flow matrix must be 3x3 (or 9 numbers, row-major)")
    if not np.all(np.isfinite(A)):
        raise ValueError("flow matrix must be finite")
    return A


# canonical matrices of the normal forms

def simple_shear(K):
    A = np.zeros((3, 3))
    A[0, 1] = K
    return A


def planar_shear(K):
    """K e2 x e3 + e3 x e3, a projector so that L(t) = A/(1+t)."""
    A = np.zeros((3, 3))
    A[1, 2] = K
    A[2, 2] = 1.0
    return A


def homogeneous_dilatation():
    return np.eye(3)


def cylindrical_dilatation(K=0.0):
    """I + K e1 x e3 - e3 x e3, a projector so that L(t) = A/(1+t)."""
    A = np.eye(3)
    A[0, 2] = K
    A[2, 2] = 0.0
    return A


def combined_shear(K1, K2, K3):
    return np.array([[0.0, K3, K2], [0.0, 0.0, K1], [0.0, 0.0, 0.0]])


def simple_shear_decaying(K1, K2, K3):
    """K2 e1 x e2 + c x m with c = (K1, 0, 1), m = (0, K3, 1)."""
    return simple_shear(K2) + np.outer([K1, 0.0, 1.0], [0.0, K3, 1.0])


def char_coefficients(A):
    """(tr A, sum of principal 2-minors, det A)."""
    c2 = np.trace(A)
    c1 = 0.5 * (c2 * c2 - np.trace(A @ A))
    return c2, c1, np.linalg.det(A)


def zero_multiplicity(A, tol=TOL):
    s = np.linalg.norm(A, 2)
    c2, c1, c0 = char_coefficients(A)
    if abs(c0) > tol * s**3:
        return 0
    if abs(c1) > tol * s**2:
        return 1
    if abs(c2) > tol * s:
        return 2
    return 3


def _rank(A, tol=TOL):
    sv = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(sv > tol * sv[0])) if sv[0] > 0 else 0


def _nonzero_eigenvalues(A, tol=TOL):
    c2, c1, c0 = char_coefficients(A)
    z = zero_multiplicity(A, tol)
    poly = {0: [1.0, -c2, c1, -c0], 1: [1.0, -c2, c1], 2: [1.0, -c2]}.get(z)
    return np.roots(poly) if poly else np.array([])


def critical_time(A, tol=TOL):
    """Smallest t >= 0 with det(I + tA) = 0, or inf.

    A factor 1 + t*lam with lam = a + ib contributes (1 + ta)^2 + (tb)^2,
    whose minimum over t is b^2/|lam|^2 at t = -a/|lam|^2. Near-real pairs
    (from perturbed Jordan blocks) therefore count as real.
    """
    A = as_matrix(A)
    times = []
    for lam in _nonzero_eigenvalues(A, tol):
        if lam.real < 0:
            mod2 = abs(lam) ** 2
            if lam.imag**2 / mod2 <= np.sqrt(tol):
                times.append(-lam.real / mod2)
    return min(times) if times else np.inf


def check_admissible(A, t_max=None, tol=TOL):
    """Raise BlowUpError if det(I + tA) vanishes on [0, t_max] (default: ever)."""
    tc = critical_time(A, tol)
    if np.isfinite(tc) and (t_max is None or tc <= t_max):
        raise BlowUpError(tc)
    return A


def _unit(v):
    return v / np.linalg.norm(v)


def _frame(e1, e2):
    e3 = np.cross(e1, e2)
    return np.column_stack([e1, e2, e3])


def classify_flow(A, tol=TOL):
    """Return the long-time family of L(t), its shear parameters and normal-form basis."""
    A = as_matrix(A)
    if not np.any(A):
        raise DegenerateFlowError("A = 0: no deformation")
    check_admissible(A, tol=tol)
    z = zero_multiplicity(A, tol)
    rank = _rank(A, tol)

    if z == 0:
        fam, params, B = Family.HOMOGENEOUS_DILATATION, [], np.eye(3)
    elif z == 1:
        U, _, Vt = np.linalg.svd(A)
        a, n = Vt[-1], U[:, -1]  # A a = 0, n^T A = 0
        n = n / (a @ n)
        e3 = _unit(n)
        a_perp = a - (a @ e3) * e3
        K = np.linalg.norm(a_perp) * np.linalg.norm(n)
        if K > tol:
            e1 = -_unit(a_perp)
            fam, params = Family.CYLINDRICAL_DILATATION_SHEAR, [K]
        else:
            e1 = _unit(np.cross(e3, [1.0, 0, 0] if abs(e3[0]) < 0.9 else [0, 1.0, 0]))
            fam, params = Family.CYLINDRICAL_DILATATION, []
        B = np.column_stack([e1, np.cross(e3, e1), e3])
    elif z == 2:
        eta = np.trace(A)
        if rank == 1:
            P = A / eta  # spectral projector a x n with a . n = 1
            U, S, Vt = np.linalg.svd(P)
            # P = a x e3 with a . e3 = tr P = 1
            e3, a = Vt[0], S[0] * U[:, 0]
            a_perp = a - (a @ e3) * e3
            K = np.linalg.norm(a_perp)
            if K > tol:
                e2 = _unit(a_perp)
            else:
                e2 = _unit(np.cross(e3, [1.0, 0, 0] if abs(e3[0]) < 0.9 else [0, 1.0, 0]))
            B = np.column_stack([np.cross(e2, e3), e2, e3])
            fam, params = Family.PLANAR_SHEAR, [K]
        else:
            P = A @ A / eta**2
            N = A - eta * P
            U, S, Vt = np.linalg.svd(N)
            B = _frame(U[:, 0], Vt[0])
            Pn = B.T @ P @ B
            fam, params = Family.SIMPLE_SHEAR_DECAYING_DILATATION, [Pn[0, 2], S[0], Pn[2, 1]]
    else:
        if rank == 1:
            U, S, Vt = np.linalg.svd(A)
            B = _frame(U[:, 0], Vt[0])
            fam, params = Family.SIMPLE_SHEAR, [S[0]]
        else:
            U, S, Vt = np.linalg.svd(A @ A)
            e1, e3 = U[:, 0], Vt[0]
            B = np.column_stack([e1, np.cross(e3, e1), e3])
            An = B.T @ A @ B
            fam, params = Family.COMBINED_ORTHOGONAL_SHEAR, [An[1, 2], An[0, 2], An[0, 1]]
    return FlowCase(fam, [float(p) for p in params], B, B.T @ A @ B)


def _solve(A, t, rhs):
    M = np.eye(3) + t * A
    if np.linalg.det(M) <= 0:
        raise BlowUpError(critical_time(A))
    return np.linalg.solve(M, rhs)


def evaluate_L(A, t):
    A = as_matrix(A)
    return _solve(A, t, A)


def drift_map(A, s, t, alpha=0.0):
    """Exact solution operator of dw/dt = -(alpha I + L(t)) w from time s to t."""
    A = as_matrix(A)
    if t < s:
        raise ValueError("drift_map needs s <= t")
    tc = critical_time(A)
    if tc <= t:
        raise BlowUpError(tc)
    D = _solve(A, t, np.eye(3) + s * A)
    return np.exp(-alpha * (t - s)) * D


def rescaled_drift(L, dt, alpha=0.0):
    """Drift over dt for a constant generator L (rescaled dynamics)."""
    return expm(-(alpha * np.eye(3) + np.asarray(L, dtype=float)) * dt)


def density(A, t, rho_ref=1.0, t_ref=0.0):
    A = as_matrix(A)
    tc = critical_time(A)
    if tc <= max(t, t_ref):
        raise BlowUpError(tc)
    I = np.eye(3)
    return rho_ref * np.linalg.det(I + t_ref * A) / np.linalg.det(I + t * A)


def log_volume(A, t):
    """log det(I + tA) = int_0^t tr L; the natural clock of the 1/t families."""
    sign, logdet = np.linalg.slogdet(np.eye(3) + t * as_matrix(A))
    if sign <= 0:
        raise BlowUpError(critical_time(A))
    return logdet


def asymptotic_generator(A, tol=TOL):
    """Constant generator of the rescaled dynamics and the clock it runs in.

    Simple shear keeps L = A in physical time. For the 1/t families
    t L(t) -> P (the projector onto the non-null eigenspaces), and the
    rescaled equation runs in tau = log det(I + tA).
    """
    A = as_matrix(A)
    case = classify_flow(A, tol)
    if case.family == Family.SIMPLE_SHEAR:
        return A.copy(), "t"
    if case.family in DECAYING:
        # lim t L(t) is the projector onto the nonzero eigenvalues; the zero
        # eigenvalue is semisimple in these families
        z = zero_multiplicity(A, tol)
        if z == 0:
            P = np.eye(3)
        elif z == 2:
            P = A / np.trace(A)
        else:
            U, _, Vt = np.linalg.svd(A)
            a, n = Vt[-1], U[:, -1]
            P = np.eye(3) - np.outer(a, n) / (a @ n)
        return P, "tau"
    raise ValueError(f"no constant rescaled generator for family {case.family.value}")
