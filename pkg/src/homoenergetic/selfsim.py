"""Self-similar profiles: rescaled particle runs to steady state, and growth-rate fits.

In self-similar variables the velocity scale grows like exp(alpha_bar * clock),
where the clock is physical time for simple shear and tau = log det(I + tA)
for the families with L(t) ~ 1/t. Running the rescaled dynamics with the
friction alpha_bar leaves a stationary profile.
"""
from dataclasses import dataclass, field

import numpy as np

from . import dsmc, flows
from .errors import ConfigError, NotConverged
from .moments import leading_eigenpair


def init_on_eigencone(N, K_scale, N_bar, rng):
    """Centered Gaussian velocities with covariance K_scale * N_bar (exact zero mean)."""
    if K_scale <= 0:
        raise ValueError("K_scale must be positive")
    N_bar = np.asarray(N_bar, dtype=float)
    if not np.all(np.linalg.eigvalsh(N_bar) > 0):
        raise ValueError("N_bar must be positive definite")
    init = {"kind": "eigencone", "K_scale": K_scale, "N_bar": N_bar}
    return dsmc.initial_velocities(init, N, rng)


def clock(A, t):
    """Time variable of the self-similar ansatz: t for volume-preserving flows, else log det(I + tA)."""
    A = flows.as_matrix(A)
    if abs(np.trace(A)) <= flows.TOL * max(np.linalg.norm(A), 1.0):
        return np.asarray(t, dtype=float)
    return np.vectorize(lambda s: flows.log_volume(A, s))(t)


@dataclass
class SelfSimConfig:
    N: int = 100_000
    seed: int = 0
    replicas: int = 1
    t_max: float = None  # default 200 / b
    window: float = None  # default 10 / b
    samples_per_window: int = 20
    K_scale: float = None  # default: initial energy 3
    dt: float = None
    threads: int = 1

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items()}


@dataclass
class SelfSimilarRun:
    profile_samples: np.ndarray
    alpha_bar: float
    K_scale: float
    N_bar: np.ndarray
    converged: bool
    beta_measured: float = float("nan")
    replica_samples: list = field(default_factory=list)
    history_t: np.ndarray = None
    history_trace: np.ndarray = None  # (replicas, n)
    M_steady: np.ndarray = None  # replica-mean second moments at the end
    fourth_cumulants: list = field(default_factory=list)
    flow: np.ndarray = None
    clock_name: str = "t"

    def summary(self):
        M = self.M_steady
        return {
            "alpha_bar": float(self.alpha_bar),
            "beta_measured": float(self.beta_measured),
            "K_scale": float(self.K_scale),
            "N_bar": self.N_bar.tolist(),
            "M_steady_normalized": (M / np.trace(M)).tolist(),
            "cosine_similarity": float(cosine_similarity(M, self.N_bar)),
            "fourth_cumulants": [float(c) for c in self.fourth_cumulants],
            "converged": bool(self.converged),
            "clock": self.clock_name,
        }


def cosine_similarity(M, N):
    """Cosine between two symmetric matrices as vectors of all nine entries."""
    M = np.asarray(M, dtype=float).ravel()
    N = np.asarray(N, dtype=float).ravel()
    return float(M @ N / (np.linalg.norm(M) * np.linalg.norm(N)))


def _steady_replica(cfg_sim, rng, window, t_max, n_per_window):
    stepper = dsmc.Stepper(cfg_sim)
    ens = dsmc.new_ensemble(cfg_sim, rng)
    dt_out = window / n_per_window
    ts, trace, se = [0.0], [], []

    def record():
        sq = np.einsum("ij,ij->i", ens.velocities, ens.velocities)
        trace.append(sq.mean())
        se.append(sq.std() / np.sqrt(len(sq)))

    record()
    k = 0
    converged = False
    while ts[-1] < t_max - 1e-12:
        k += 1
        t = min(k * dt_out, t_max)
        stepper.advance(ens, t)
        ts.append(t)
        record()
        n = len(ts) - 1
        if n >= 2 * n_per_window and n % n_per_window == 0:
            last = np.array(trace[-n_per_window:])
            prev = np.array(trace[-2 * n_per_window:-n_per_window])
            tol = 2 * np.hypot(np.mean(se[-n_per_window:]), np.mean(se[-2 * n_per_window:-n_per_window]))
            if abs(last.mean() - prev.mean()) < tol:
                converged = True
                break
    return ens, np.array(ts), np.array(trace), converged


def run_to_steady_state(flow, kernel, cfg=None):
    """Run the rescaled dynamics with alpha = alpha_bar until Tr M stops drifting."""
    cfg = cfg or SelfSimConfig()
    if kernel.gamma != 0:
        raise ConfigError("kernel.gamma", "self-similar runs need Maxwell molecules (gamma = 0)")
    b = kernel.b
    A = np.zeros((3, 3)) if flow is None else flows.as_matrix(flow)
    if np.any(A):
        L, clock_name = flows.asymptotic_generator(A)
    else:
        L, clock_name = np.zeros((3, 3)), "t"
    eig = leading_eigenpair(L, b)
    if not eig.positive_definite:
        raise NotConverged("leading eigenvector is not positive definite", {"alpha_bar": eig.alpha_bar})
    K_scale = cfg.K_scale or 3.0 / np.trace(eig.N_bar)
    window = cfg.window or 10.0 / b
    t_max = cfg.t_max or 200.0 / b
    sim = dsmc.SimConfig(
        N=cfg.N, t_end=t_max, flow=A, kernel=kernel, seed=cfg.seed, dt=cfg.dt, mode="rescaled",
        alpha=eig.alpha_bar, init={"kind": "eigencone", "K_scale": K_scale, "N_bar": eig.N_bar},
        replicas=cfg.replicas, threads=cfg.threads)
    results = [_steady_replica(sim, rng, window, t_max, cfg.samples_per_window)
               for rng in dsmc.replica_rngs(cfg.seed, cfg.replicas)]
    converged = all(r[3] for r in results)
    samples = [r[0].velocities for r in results]
    if not converged:
        raise NotConverged(
            f"Tr M still drifting at t_max = {t_max!r}",
            {"final_trace": [float(r[2][-1]) for r in results],
             "window_drift": [float(r[2][-1] - r[2][max(-2 * cfg.samples_per_window, -len(r[2]))])
                              for r in results]})
    n = min(len(r[1]) for r in results)
    M = np.mean([v.T @ v / len(v) for v in samples], axis=0)
    return SelfSimilarRun(
        profile_samples=np.concatenate(samples), alpha_bar=eig.alpha_bar, K_scale=K_scale,
        N_bar=eig.N_bar, converged=converged, replica_samples=samples,
        history_t=results[0][1][:n], history_trace=np.array([r[2][:n] for r in results]),
        M_steady=M, fourth_cumulants=[dsmc.fourth_cumulant(v) for v in samples],
        flow=A, clock_name=clock_name)


def fit_growth(clock_values, trace):
    """Half the least-squares slope of log Tr M against the clock, with its standard error."""
    x = np.asarray(clock_values, dtype=float)
    y = np.log(np.asarray(trace, dtype=float))
    if len(x) < 3:
        raise ValueError("fit window too short: need at least three samples")
    X = np.column_stack([np.ones_like(x), x])
    coef, res, *_ = np.linalg.lstsq(X, y, rcond=None)
    dof = len(x) - 2
    sigma2 = float(res[0]) / dof if dof > 0 and res.size else 0.0
    cov = sigma2 * np.linalg.inv(X.T @ X)
    return coef[1] / 2, np.sqrt(cov[1, 1]) / 2


@dataclass
class BetaConfig:
    N: int = 20_000
    seed: int = 0
    replicas: int = 1
    t_end: float = None  # default: clock span 20 / max(b, |L|)
    n_out: int = 41
    init: dict = None  # default: Gaussian on the leading eigenvector
    threads: int = 1


def measure_beta_physical(flow, kernel, cfg=None, return_se=False):
    """Fit the growth rate of the velocity scale from a physical-mode run.

    The fit uses the final half of the trajectory, measured in the clock
    variable (t for simple shear, tau = log det(I + tA) otherwise).
    """
    cfg = cfg or BetaConfig()
    if kernel.gamma != 0:
        raise ConfigError("kernel.gamma", "growth-rate fits need Maxwell molecules (gamma = 0)")
    A = flows.as_matrix(flow)
    b = kernel.b
    volume_preserving = abs(np.trace(A)) <= flows.TOL * max(np.linalg.norm(A), 1.0)
    L = flows.asymptotic_generator(A)[0] if np.any(A) else np.zeros((3, 3))
    span = 20.0 / max(b, np.linalg.norm(L, 2))
    if volume_preserving:
        t_end = cfg.t_end or span
        times = np.linspace(0.0, t_end, cfg.n_out)
    else:
        if cfg.t_end is None:
            # invert tau(t) = span on a bracket
            hi = 1.0
            while flows.log_volume(A, hi) < span:
                hi *= 2
            lo = 0.0
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                lo, hi = (mid, hi) if flows.log_volume(A, mid) < span else (lo, mid)
            t_end = hi
        else:
            t_end = cfg.t_end
        times = np.concatenate([[0.0], np.geomspace(1e-3 * t_end, t_end, cfg.n_out - 1)])
    init = cfg.init
    if init is None:
        N_bar = leading_eigenpair(L, b).N_bar
        init = {"kind": "eigencone", "K_scale": 3.0 / np.trace(N_bar), "N_bar": N_bar}
    sim = dsmc.SimConfig(N=cfg.N, t_end=t_end, flow=A, kernel=kernel, seed=cfg.seed, init=init,
                         times=list(times[1:]), replicas=cfg.replicas, threads=cfg.threads)
    res = dsmc.run_replicas(sim)
    trace = res.column("energy").mean(axis=0)
    c = clock(A, res.times)
    tail = c >= c[-1] / 2
    if tail.sum() < 3:
        raise ValueError("fit window too short: need at least three samples")
    beta, se = fit_growth(c[tail], trace[tail])
    if return_se:
        return float(beta), float(se), res
    return float(beta)
