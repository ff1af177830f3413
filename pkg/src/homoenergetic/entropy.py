"""Entropy of particle samples and the entropy relation of self-similar states.

The differential entropy is estimated with the Kozachenko-Leonenko
k-nearest-neighbour estimator. ``C_G`` is the scale-free constant

    C_G = h(G) - (3/2) log(int |xi|^2 G)

for a probability density G, which makes s/rho = log(e^{3/2}/rho) + C_G.
"""
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma

from . import flows
from .errors import DegenerateEnsembleError, NotConverged

K_NEIGHBOURS = 4
LOG_UNIT_BALL = np.log(4 * np.pi / 3)

# commonly quoted equilibrium constant; it omits (3/2) log pi and is not the Maxwellian value
C_M = 1.5 * (1 - np.log(1.5))
# C_G of any Maxwellian (invariant under velocity and mass rescaling)
C_MAXWELL = 1.5 * (1 + np.log(2 * np.pi / 3))


def _check(samples):
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[1] != 3:
        raise ValueError("samples must have shape (N, 3)")
    if len(x) < 100:
        raise ValueError("need at least 100 samples")
    ev = np.linalg.eigvalsh(np.cov(x.T))
    if ev[0] <= 1e-12 * max(ev[-1], 1e-300):
        raise DegenerateEnsembleError("sample covariance is degenerate")
    return x


def knn_log_radii(samples, k=K_NEIGHBOURS, seed=0):
    """log of the distance from each sample to its k-th nearest neighbour."""
    x = _check(samples)
    r = cKDTree(x).query(x, k + 1)[0][:, k]
    if np.any(r == 0):
        warnings.warn("duplicate samples; adding a deterministic jitter", RuntimeWarning)
        rng = np.random.default_rng(np.random.SeedSequence([seed, len(x)]))
        scale = 1e-10 * np.sqrt(np.mean(np.var(x, axis=0)))
        x = x + scale * rng.standard_normal(x.shape)
        r = cKDTree(x).query(x, k + 1)[0][:, k]
    return np.log(r)


def differential_entropy(samples, k=K_NEIGHBOURS, seed=0):
    """Kozachenko-Leonenko estimate of -int g log g for the sampled density g."""
    logr = knn_log_radii(samples, k, seed)
    n = len(logr)
    return float(digamma(n) - digamma(k) + LOG_UNIT_BALL + 3 * logr.mean())


def C_G_constant(samples, k=K_NEIGHBOURS, seed=0):
    x = _check(samples)
    return differential_entropy(x, k, seed) - 1.5 * np.log(np.mean(np.einsum("ij,ij->i", x, x)))


def C_G_with_se(samples, k=K_NEIGHBOURS, seed=0):
    """C_G and a standard error.

    ``samples`` is one array or a list of independent replica arrays; with
    two or more replicas the SE is the replica spread, otherwise it comes
    from the per-sample influence terms of the estimator.
    """
    if isinstance(samples, (list, tuple)) and len(samples) > 1:
        vals = np.array([C_G_constant(s, k, seed) for s in samples])
        return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(len(vals)))
    if isinstance(samples, (list, tuple)):
        samples = samples[0]
    x = _check(samples)
    logr = knn_log_radii(x, k, seed)
    sq = np.einsum("ij,ij->i", x, x)
    infl = 3 * logr - 1.5 * sq / sq.mean()
    value = digamma(len(x)) - digamma(k) + LOG_UNIT_BALL + 3 * logr.mean() - 1.5 * np.log(sq.mean())
    return float(value), float(infl.std() / np.sqrt(len(x)))


def hill_tail_index(samples, fraction=0.01):
    """Hill estimator of the tail index of |xi| from the top ``fraction`` order statistics."""
    r = np.sort(np.linalg.norm(np.asarray(samples, dtype=float), axis=1))
    m = max(10, int(fraction * len(r)))
    top = r[-m:]
    return float(1.0 / np.mean(np.log(top / r[-m - 1])))


@dataclass
class EntropyReport:
    rho: float
    e: float
    s_per_rho: float
    C_G: float
    C_M: float = C_M
    C_maxwell: float = C_MAXWELL
    C_G_se: float = float("nan")
    t: float = 0.0
    clock: float = 0.0
    k: int = K_NEIGHBOURS
    N: int = 0
    relation_residual: float = 0.0
    tail_index: float = float("nan")
    heavy_tail: bool = False

    def to_dict(self):
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else
                    int(v) if isinstance(v, (int, np.integer)) else float(v))
                for k, v in self.__dict__.items()}


def entropy_relation_report(run, flow, t, k=K_NEIGHBOURS):
    """Assemble rho(t), e(t), s/rho and C_G for a converged self-similar run.

    Velocities at time t are xi * exp(alpha_bar * clock(t)); the density is
    the analytic law with rho(0) = 1.
    """
    from .selfsim import clock

    if not run.converged:
        raise NotConverged("entropy relation needs a converged self-similar run")
    A = np.zeros((3, 3)) if flow is None else flows.as_matrix(flow)
    tau = float(clock(A, t)) if np.any(A) else float(t)
    rho = flows.density(A, t, 1.0, 0.0) if np.any(A) else 1.0
    log_scale = run.alpha_bar * tau
    samples = run.replica_samples if len(run.replica_samples) > 1 else run.profile_samples
    C_G, se = C_G_with_se(samples, k)
    x = run.profile_samples
    h = differential_entropy(x, k)
    energy_hat = float(np.mean(np.einsum("ij,ij->i", x, x)))
    e = np.exp(2 * log_scale) * energy_hat
    # s/rho from the scaling law of the entropy; C_G from its definition
    s_per_rho = h + 3 * log_scale - np.log(rho)
    C_pooled = h - 1.5 * np.log(energy_hat)
    residual = s_per_rho - (np.log(e**1.5 / rho) + C_pooled)
    alpha = hill_tail_index(x)
    return EntropyReport(rho=float(rho), e=float(e), s_per_rho=float(s_per_rho), C_G=float(C_G),
                         C_G_se=se, t=float(t), clock=tau, k=k, N=len(x),
                         relation_residual=float(residual), tail_index=alpha, heavy_tail=alpha < 3)
