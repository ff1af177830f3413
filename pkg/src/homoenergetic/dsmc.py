"""Stochastic particle simulation of the normalized velocity distribution.

Each step is split into exact linear drift and Kac-type binary collisions:
the number of collision events in a step of length dt is Poisson with mean
N * rho * Lambda0 * dt / 2, each event acting on a uniformly chosen pair.
Physical mode follows the deformation L(t); rescaled mode uses a constant
generator L plus the extra friction alpha (self-similar variables).
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from . import flows
from .errors import ConfigError, DegenerateEnsembleError, SimulationError
from .kernel import AngularKernel, isotropic, sample_cos
from .moments import SYM_INDEX, leading_eigenpair

DIAG_COLUMNS = (
    ["t", "rho", "M11", "M22", "M33", "M12", "M13", "M23", "energy", "q1", "q2", "q3",
     "fourth_cumulant", "collisions_this_interval"]
)


def collide(w, w_star, omega):
    """Post-collision velocities for the scattering direction omega."""
    w = np.asarray(w, dtype=float)
    w_star = np.asarray(w_star, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if abs(omega @ omega - 1.0) > 2e-12:
        raise ValueError("omega must be a unit vector")
    d = ((w_star - w) @ omega) * omega
    return w + d, w_star - d


@numba.njit(cache=True, nogil=True)
def _collide_events(v, ii, jj, cos_t, phi, u_acc, gamma, s_ref):
    """Apply collision events in order; returns (accepted, max |V|/s_ref seen)."""
    accepted = 0
    worst = 0.0
    for k in range(ii.shape[0]):
        i = ii[k]
        j = jj[k]
        g0 = v[i, 0] - v[j, 0]
        g1 = v[i, 1] - v[j, 1]
        g2 = v[i, 2] - v[j, 2]
        s = np.sqrt(g0 * g0 + g1 * g1 + g2 * g2)
        if s == 0.0:
            continue
        if gamma != 0.0:
            if gamma > 0.0:
                r = s / s_ref
                if r > worst:
                    worst = r
            else:
                r = max(s, s_ref) / s_ref
            if u_acc[k] >= r ** gamma:
                continue
        n0 = g0 / s
        n1 = g1 / s
        n2 = g2 / s
        # unit vectors a, c completing n to an orthonormal frame
        if abs(n0) < 0.9:
            a0, a1, a2 = 0.0, n2, -n1
        else:
            a0, a1, a2 = -n2, 0.0, n0
        an = np.sqrt(a0 * a0 + a1 * a1 + a2 * a2)
        a0 /= an
        a1 /= an
        a2 /= an
        c0 = n1 * a2 - n2 * a1
        c1 = n2 * a0 - n0 * a2
        c2 = n0 * a1 - n1 * a0
        ct = cos_t[k]
        st = np.sqrt(max(0.0, 1.0 - ct * ct))
        cp = np.cos(phi[k])
        sp = np.sin(phi[k])
        o0 = ct * n0 + st * (cp * a0 + sp * c0)
        o1 = ct * n1 + st * (cp * a1 + sp * c1)
        o2 = ct * n2 + st * (cp * a2 + sp * c2)
        d = -(g0 * o0 + g1 * o1 + g2 * o2)
        v[i, 0] += d * o0
        v[i, 1] += d * o1
        v[i, 2] += d * o2
        v[j, 0] -= d * o0
        v[j, 1] -= d * o1
        v[j, 2] -= d * o2
        accepted += 1
    return accepted, worst


@numba.njit(cache=True, nogil=True)
def _sums(v):
    p0 = 0.0
    p1 = 0.0
    p2 = 0.0
    e = 0.0
    speed = 0.0
    for i in range(v.shape[0]):
        p0 += v[i, 0]
        p1 += v[i, 1]
        p2 += v[i, 2]
        sq = v[i, 0] ** 2 + v[i, 1] ** 2 + v[i, 2] ** 2
        e += sq
        speed += np.sqrt(sq)
    return p0, p1, p2, e, speed


@numba.njit(cache=True, nogil=True)
def _max_deviation(v):
    n = v.shape[0]
    m0 = 0.0
    m1 = 0.0
    m2 = 0.0
    for i in range(n):
        m0 += v[i, 0]
        m1 += v[i, 1]
        m2 += v[i, 2]
    m0 /= n
    m1 /= n
    m2 /= n
    worst = 0.0
    for i in range(n):
        d = (v[i, 0] - m0) ** 2 + (v[i, 1] - m1) ** 2 + (v[i, 2] - m2) ** 2
        if d > worst:
            worst = d
    return np.sqrt(worst)


# initial distributions

def initial_velocities(init, N, rng):
    """Sample N velocities from an initial-distribution description (a dict with 'kind')."""
    init = dict(init or {})
    kind = init.pop("kind", "gaussian")
    if kind in ("gaussian", "anisotropic", "eigencone"):
        if kind == "gaussian":
            cov = init.pop("zeta", 3.0) / 3 * np.eye(3)
        elif kind == "anisotropic":
            cov = np.asarray(init.pop("cov"), dtype=float)
        else:
            cov = init.pop("K_scale") * np.asarray(init.pop("N_bar"), dtype=float)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("initial covariance must be positive definite") from None
        v = rng.standard_normal((N, 3)) @ chol.T
        v -= v.mean(axis=0)
    elif kind == "two_point":
        if N % 2:
            raise ValueError("two-point initial state needs an even N")
        u = np.asarray(init.pop("v", [1.0, 0.0, 0.0]), dtype=float)
        v = np.empty((N, 3))
        v[0::2] = u
        v[1::2] = -u
    elif kind == "shell":
        r = float(init.pop("radius", 1.0))
        x = rng.standard_normal((N, 3))
        v = r * x / np.linalg.norm(x, axis=1, keepdims=True)
    else:
        raise ValueError(f"unknown initial distribution {kind!r}")
    if init:
        raise ValueError(f"unused initial-distribution parameters: {sorted(init)}")
    return np.ascontiguousarray(v)


@dataclass
class SimConfig:
    N: int
    t_end: float
    flow: object = None  # deformation matrix A; None means no flow
    kernel: AngularKernel = None
    seed: int = 0
    dt: float = None  # None: adaptive
    mode: str = "physical"  # or "rescaled"
    alpha: float = None  # rescaled mode; None picks the leading eigenvalue
    init: dict = field(default_factory=lambda: {"kind": "gaussian"})
    output_interval: float = 1.0
    t_start: float = 0.0
    rho0: float = 1.0  # density at t = 0 (physical) or constant density (rescaled)
    replicas: int = 1
    threads: int = 1
    splitting: str = "strang"
    speed_floor: float = 0.1  # gamma < 0: cutoff as a fraction of the rms relative speed
    majorant_factor: float = 1.5  # gamma > 0: safety factor on the max pair speed
    check_conservation: bool = True
    times: list = None  # explicit output times; overrides output_interval

    def __post_init__(self):
        if self.kernel is None:
            self.kernel = isotropic()
        self.A = np.zeros((3, 3)) if self.flow is None else flows.as_matrix(self.flow)
        checks = [
            ("N", self.N >= 2, "need at least two particles"),
            ("dt", self.dt is None or self.dt > 0, "must be positive"),
            ("t_end", self.t_end > self.t_start, "must exceed t_start"),
            ("output_interval", self.output_interval > 0, "must be positive"),
            ("mode", self.mode in ("physical", "rescaled"), "must be physical or rescaled"),
            ("splitting", self.splitting in ("strang", "lie"), "must be strang or lie"),
            ("replicas", self.replicas >= 1, "must be >= 1"),
            ("threads", self.threads >= 1, "must be >= 1"),
            ("rho0", self.rho0 > 0, "must be positive"),
            ("speed_floor", self.speed_floor > 0, "must be positive"),
            ("majorant_factor", self.majorant_factor >= 1, "must be >= 1"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(key, msg)
        if self.mode == "rescaled":
            if self.kernel.gamma != 0:
                raise ConfigError("kernel.gamma", "rescaled mode requires Maxwell molecules (gamma = 0)")
            if np.any(self.A):
                self.L = flows.asymptotic_generator(self.A)[0]
            else:
                self.L = np.zeros((3, 3))
            if self.alpha is None:
                self.alpha = leading_eigenpair(self.L, self.kernel.b).alpha_bar
        else:
            if self.alpha not in (None, 0, 0.0):
                raise ConfigError("alpha", "extra friction only applies in rescaled mode")
            self.alpha = 0.0
            if np.any(self.A):
                flows.check_admissible(self.A, t_max=self.t_end)

    def to_dict(self):
        return {
            "N": int(self.N), "t_end": float(self.t_end), "flow": self.A.tolist(),
            "kernel": self.kernel.describe(), "seed": int(self.seed),
            "dt": None if self.dt is None else float(self.dt), "mode": self.mode,
            "alpha": float(self.alpha), "init": _jsonable(self.init),
            "output_interval": float(self.output_interval), "t_start": float(self.t_start),
            "rho0": float(self.rho0), "replicas": int(self.replicas), "threads": int(self.threads),
            "splitting": self.splitting, "speed_floor": float(self.speed_floor),
            "majorant_factor": float(self.majorant_factor),
            "times": None if self.times is None else [float(t) for t in self.times],
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in np.asarray(x).tolist()] if isinstance(x, np.ndarray) else [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


@dataclass
class Ensemble:
    velocities: np.ndarray
    t: float
    rng: np.random.Generator
    rho: float
    collisions: int = 0  # accepted events, cumulative
    max_momentum_error: float = 0.0
    max_energy_error: float = 0.0


@dataclass
class DiagnosticsRow:
    t: float
    rho: float
    M: np.ndarray
    energy: float
    q: np.ndarray
    fourth_cumulant: float
    collisions: int  # accepted events since the previous row
    M_se: np.ndarray = None  # particle-sampling standard error of M

    def values(self):
        return [self.t, self.rho] + [self.M[i, j] for i, j in SYM_INDEX] + [
            self.energy, *self.q, self.fourth_cumulant, self.collisions]


def fourth_cumulant(velocities):
    """Mean excess kurtosis along the principal axes of the velocity covariance."""
    v = np.asarray(getattr(velocities, "velocities", velocities), dtype=float)
    if v.shape[0] < 10:
        raise ValueError("need at least 10 particles")
    w = v - v.mean(axis=0)
    cov = w.T @ w / len(w)
    ev, U = np.linalg.eigh(cov)
    if not np.all(np.isfinite(ev)) or ev[-1] <= 0:
        raise DegenerateEnsembleError("zero-variance ensemble")
    y = w @ U
    keep = ev > 1e-12 * ev[-1]
    k = np.mean(y[:, keep] ** 4, axis=0) / ev[keep] ** 2 - 3
    return float(np.mean(k))


def diagnostics(ens, collisions=0):
    v = ens.velocities
    n = len(v)
    prods = np.stack([v[:, i] * v[:, j] for i, j in SYM_INDEX], axis=1)
    m6 = prods.mean(axis=0)
    se6 = prods.std(axis=0) / np.sqrt(n)
    M = np.empty((3, 3))
    S = np.empty((3, 3))
    for k, (i, j) in enumerate(SYM_INDEX):
        M[i, j] = M[j, i] = m6[k]
        S[i, j] = S[j, i] = se6[k]
    sq = np.einsum("ij,ij->i", v, v)
    q = (sq[:, None] * v).mean(axis=0)
    return DiagnosticsRow(ens.t, ens.rho, M, float(np.trace(M)), q, fourth_cumulant(v), collisions, S)


class Stepper:
    """Holds per-run constants; advances an ensemble between output times."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.kernel = cfg.kernel
        self.gamma = float(cfg.kernel.gamma)
        self.lambda0 = cfg.kernel.lambda0
        self.rescaled = cfg.mode == "rescaled"
        self.A = cfg.A
        if self.rescaled:
            self.G = cfg.alpha * np.eye(3) + cfg.L
            self.G_norm = np.linalg.norm(self.G, 2)

    def rho(self, t):
        if self.rescaled:
            return self.cfg.rho0
        return flows.density(self.A, t, self.cfg.rho0, 0.0)

    def drift(self, s, t):
        if t == s:
            return np.eye(3)
        if self.rescaled:
            return flows.rescaled_drift(self.cfg.L, t - s, self.cfg.alpha)
        return flows.drift_map(self.A, s, t)

    def speed_scale(self, v):
        """Gamma-dependent reference speed: majorant (gamma > 0) or cutoff (gamma < 0)."""
        if self.gamma > 0:
            s = self.cfg.majorant_factor * 2 * _max_deviation(v)
        else:
            w = v - v.mean(axis=0)
            s = self.cfg.speed_floor * np.sqrt(2 * np.mean(np.einsum("ij,ij->i", w, w)))
        if not np.isfinite(s) or s <= 0:
            raise SimulationError(f"collision majorant collapsed (reference speed {s!r})")
        return s

    def auto_dt(self, t, rate_factor=1.0):
        """Largest step with rho*Lambda0*dt <= 0.1 and ||L||*dt <= 0.05."""
        norm_L = self.G_norm if self.rescaled else np.linalg.norm(flows.evaluate_L(self.A, t), 2)
        dt = np.inf
        rate = self.rho(t) * self.lambda0 * rate_factor
        if rate > 0:
            dt = 0.1 / rate
        if norm_L > 0:
            dt = min(dt, 0.05 / norm_L)
        if not np.isfinite(dt):
            dt = self.cfg.output_interval
        return dt

    def collide(self, ens, rho, dt):
        v = ens.velocities
        n = len(v)
        s_ref = 1.0
        if self.gamma != 0:
            s_ref = self.speed_scale(v)
        mu = n * rho * self.lambda0 * s_ref**self.gamma * dt / 2
        if mu <= 0:
            return 0
        rng = ens.rng
        c = int(rng.poisson(mu))
        ii = rng.integers(0, n, c)
        jj = rng.integers(0, n - 1, c)
        jj += jj >= ii
        cos_t = sample_cos(self.kernel, rng.random(c))
        phi = 2 * np.pi * rng.random(c)
        u_acc = rng.random(c) if self.gamma != 0 else np.empty(0)
        before = _sums(v) if self.cfg.check_conservation else None
        accepted, worst = _collide_events(v, ii, jj, cos_t, phi, u_acc, self.gamma, s_ref)
        if self.gamma > 0 and worst > 1:
            raise SimulationError(f"pair speed exceeded the collision majorant by a factor {worst!r}")
        if before is not None:
            after = _sums(v)
            mom = np.sqrt(sum((a - b) ** 2 for a, b in zip(after[:3], before[:3])))
            ens.max_momentum_error = max(ens.max_momentum_error, mom / max(before[4], 1e-300))
            ens.max_energy_error = max(ens.max_energy_error, abs(after[3] - before[3]) / max(before[3], 1e-300))
        ens.collisions += accepted
        return accepted

    def advance(self, ens, t_target):
        """Step ``ens`` to exactly ``t_target``; returns accepted collisions.

        Consecutive half drifts of the Strang splitting are fused, so the
        particles are transformed once per step.
        """
        cfg = self.cfg
        tol = 1e-12 * max(1.0, abs(t_target))
        v = ens.velocities
        buf = np.empty_like(v)
        pending = np.eye(3)
        total = 0
        while t_target - ens.t > tol:
            if cfg.dt is not None:
                dt = cfg.dt
            else:
                factor = 1.0
                if self.gamma != 0:
                    # the rate depends on current speeds, so flush the pending drift
                    np.matmul(v, pending.T, out=buf)
                    v, buf = buf, v
                    ens.velocities = v
                    pending = np.eye(3)
                    factor = self.speed_scale(v) ** self.gamma
                dt = self.auto_dt(ens.t, factor)
            dt = min(dt, t_target - ens.t)
            t0, t1 = ens.t, ens.t + dt
            tc = t0 + dt / 2 if cfg.splitting == "strang" else t1
            pending = self.drift(t0, tc) @ pending
            np.matmul(v, pending.T, out=buf)
            v, buf = buf, v
            ens.velocities = v
            total += self.collide(ens, self.rho(tc), dt)
            pending = self.drift(tc, t1)
            ens.t = t_target if t_target - t1 <= tol else t1
        np.matmul(v, pending.T, out=buf)
        ens.velocities = buf
        ens.rho = self.rho(ens.t)
        return total


def output_times(cfg):
    if cfg.times is not None:
        ts = np.asarray(cfg.times, dtype=float)
        if ts[0] != cfg.t_start:
            ts = np.concatenate([[cfg.t_start], ts])
        if np.any(np.diff(ts) <= 0) or ts[-1] > cfg.t_end:
            raise ConfigError("times", "output times must increase within [t_start, t_end]")
        return ts
    n = int(np.floor((cfg.t_end - cfg.t_start) / cfg.output_interval + 1e-9))
    ts = cfg.t_start + cfg.output_interval * np.arange(n + 1)
    if cfg.t_end - ts[-1] > 1e-9 * cfg.output_interval:
        ts = np.append(ts, cfg.t_end)
    return ts


def replica_rngs(seed, replicas):
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(replicas)]


def new_ensemble(cfg, rng):
    stepper = Stepper(cfg)
    v = initial_velocities(cfg.init, cfg.N, rng)
    return Ensemble(v, float(cfg.t_start), rng, stepper.rho(cfg.t_start))


def step(ens, cfg, dt=None):
    """Advance one step of length dt (default cfg.dt or the adaptive choice)."""
    stepper = Stepper(cfg)
    if dt is None:
        factor = stepper.speed_scale(ens.velocities) ** stepper.gamma if stepper.gamma else 1.0
        dt = cfg.dt if cfg.dt is not None else stepper.auto_dt(ens.t, factor)
    stepper.advance(ens, ens.t + dt)
    return ens


def simulate(cfg, rng):
    """Single run; returns (rows, final ensemble)."""
    stepper = Stepper(cfg)
    ens = new_ensemble(cfg, rng)
    rows = [diagnostics(ens, 0)]
    for t in output_times(cfg)[1:]:
        accepted = stepper.advance(ens, t)
        rows.append(diagnostics(ens, accepted))
    return rows, ens


def run(cfg):
    """Diagnostics of the first replica stream of ``cfg.seed``."""
    return simulate(cfg, replica_rngs(cfg.seed, 1)[0])[0]


@dataclass
class ReplicaResult:
    times: np.ndarray
    values: np.ndarray  # (replicas, n_times, n_columns) in DIAG_COLUMNS order
    rows: list  # per replica list of DiagnosticsRow
    ensembles: list

    @property
    def mean(self):
        return self.values.mean(axis=0)

    @property
    def se(self):
        r = self.values.shape[0]
        if r < 2:
            return np.full(self.values.shape[1:], np.nan)
        return self.values.std(axis=0, ddof=1) / np.sqrt(r)

    def column(self, name):
        return self.values[:, :, DIAG_COLUMNS.index(name)]

    def moments(self):
        """Replica-mean M (n_times, 3, 3) and pooled particle-sampling SE."""
        M = np.mean([[row.M for row in rows] for rows in self.rows], axis=0)
        se = np.sqrt(np.mean([[row.M_se**2 for row in rows] for rows in self.rows], axis=0) / len(self.rows))
        return M, se


def run_replicas(cfg):
    rngs = replica_rngs(cfg.seed, cfg.replicas)
    if cfg.threads > 1 and cfg.replicas > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            out = list(pool.map(lambda r: simulate(cfg, r), rngs))
    else:
        out = [simulate(cfg, r) for r in rngs]
    rows = [o[0] for o in out]
    values = np.array([[row.values() for row in rr] for rr in rows], dtype=float)
    return ReplicaResult(values[0, :, 0].copy(), values, rows, [o[1] for o in out])
