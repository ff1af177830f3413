"""Run configuration: flat ``key=value`` flags and/or a JSON file, validated up front.

Every setting has a dotted name (``flow.K``, ``sim.N``, ...). Flat aliases
such as ``K=0.06`` or ``N=100000`` map onto them. Errors name the dotted key.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from . import flows
from .errors import ConfigError
from .kernel import make_kernel

SUBCOMMANDS = ("classify", "kernel-info", "moments", "eigen", "simulate", "selfsim",
               "stability-check", "entropy", "sweep")

FLOW_PARAMS = {
    "none": (),
    "matrix": ("A",),
    "simple_shear": ("K",),
    "planar_shear": ("K",),
    "homogeneous_dilatation": (),
    "cylindrical_dilatation": ("K",),
    "combined_shear": ("K1", "K2", "K3"),
    "simple_shear_decaying": ("K1", "K2", "K3"),
}
INIT_KINDS = ("gaussian", "anisotropic", "two_point", "shell", "eigencone")


def _floats(n=None):
    def conv(v):
        if isinstance(v, str):
            v = [s for s in v.replace(";", ",").split(",") if s.strip()]
        out = [float(x) for x in np.asarray(v, dtype=float).ravel()]
        if n is not None and len(out) != n:
            raise ValueError(f"expected {n} numbers, got {len(out)}")
        return out
    return conv


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _int(v):
    f = float(v)
    if f != int(f):
        raise ValueError(f"not an integer: {v!r}")
    return int(f)


def _choice(*options):
    def conv(v):
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return v
    return conv


# dotted key -> (converter, default, check or None)
SCHEMA = {
    "flow.name": (_choice(*FLOW_PARAMS), "none", None),
    "flow.K": (float, None, None),
    "flow.K1": (float, None, None),
    "flow.K2": (float, None, None),
    "flow.K3": (float, None, None),
    "flow.A": (_floats(9), None, None),
    "kernel.name": (_choice("isotropic", "quadratic", "custom"), "isotropic", None),
    "kernel.gamma": (float, 0.0, None),
    "kernel.values": (_floats(), None, lambda v: len(v) >= 2),
    "sim.N": (_int, 10_000, lambda v: v >= 2),
    "sim.dt": (float, None, lambda v: v > 0),
    "sim.t_end": (float, 50.0, lambda v: v > 0),
    "sim.seed": (_int, 0, lambda v: 0 <= v < 2**64),
    "sim.replicas": (_int, 1, lambda v: v >= 1),
    "sim.output_interval": (float, 1.0, lambda v: v > 0),
    "sim.mode": (_choice("physical", "rescaled"), "physical", None),
    "sim.alpha": (float, None, None),
    "sim.init": (_choice(*INIT_KINDS), "gaussian", None),
    "sim.zeta": (float, 3.0, lambda v: v > 0),
    "sim.cov": (_floats(9), None, None),
    "sim.radius": (float, 1.0, lambda v: v > 0),
    "sim.splitting": (_choice("strang", "lie"), "strang", None),
    "sim.speed_floor": (float, 0.1, lambda v: v > 0),
    "sim.majorant_factor": (float, 1.5, lambda v: v >= 1),
    "sim.rho0": (float, 1.0, lambda v: v > 0),
    "sim.threads": (_int, 1, lambda v: v >= 1),
    "analysis.b": (float, None, lambda v: v > 0),
    "analysis.M0": (_floats(9), None, None),
    "analysis.n_out": (_int, 101, lambda v: v >= 2),
    "analysis.eigen": (_bool, False, None),
    "analysis.T": (float, None, lambda v: v >= 0),
    "analysis.level": (_int, 5, lambda v: 0 <= v <= 7),
    "analysis.K_over_b": (_floats(), [0.1, 0.3, 0.5, 1.0], lambda v: len(v) >= 1),
    "analysis.samples": (str, None, None),
    "analysis.t": (float, 10.0, lambda v: v >= 0),
    "analysis.window": (float, None, lambda v: v > 0),
    "analysis.t_max": (float, None, lambda v: v > 0),
    "analysis.measure_beta": (_bool, True, None),
    "output.plots": (_bool, True, None),
    "output.outdir": (str, "out", None),
}

ALIASES = {key.split(".", 1)[1]: key for key in SCHEMA}
ALIASES.update({"flow": "flow.name", "kernel": "kernel.name", "kernel_values": "kernel.values",
                "threads": "sim.threads", "outdir": "output.outdir", "plots": "output.plots"})
for _k in ("name", "values"):
    ALIASES.pop(_k, None)

# per-subcommand default overrides
SUB_DEFAULTS = {
    "moments": {"sim.t_end": 10.0},
    "classify": {"sim.t_end": 10.0},
    "selfsim": {"sim.N": 20_000},
    "entropy": {"sim.N": 20_000},
    "sweep": {"sim.N": 20_000, "flow.name": "simple_shear"},
    "stability-check": {"flow.name": "simple_shear"},
}


def _resolve_key(key):
    if key in SCHEMA:
        return key
    if key in ALIASES:
        return ALIASES[key]
    raise ConfigError(key, "unknown key")


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        name = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, name + "."))
        else:
            out[name] = v
    return out


@dataclass
class RunConfig:
    subcommand: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def to_dict(self):
        nested = {"subcommand": self.subcommand}
        for key, v in sorted(self.values.items()):
            section, name = key.split(".", 1)
            nested.setdefault(section, {})[name] = v
        return nested

    def kernel(self):
        v = self.values
        return make_kernel(v["kernel.name"], v["kernel.gamma"], v["kernel.values"])

    @property
    def flow_name(self):
        return self.values["flow.name"]

    def flow_matrix(self, K=None):
        """Deformation matrix A; ``K`` overrides flow.K (used by sweeps)."""
        v = self.values
        name = v["flow.name"]
        K = v["flow.K"] if K is None else K
        if name == "none":
            return np.zeros((3, 3))
        if name == "matrix":
            return flows.as_matrix(v["flow.A"])
        if name == "simple_shear":
            return flows.simple_shear(K)
        if name == "planar_shear":
            return flows.planar_shear(K)
        if name == "homogeneous_dilatation":
            return flows.homogeneous_dilatation()
        if name == "cylindrical_dilatation":
            return flows.cylindrical_dilatation(K)
        Ks = (v["flow.K1"], v["flow.K2"], v["flow.K3"])
        if name == "combined_shear":
            return flows.combined_shear(*Ks)
        return flows.simple_shear_decaying(*Ks)

    def b(self):
        return self.values["analysis.b"] or self.kernel().b

    def initial_state(self):
        v = self.values
        kind = v["sim.init"]
        if kind == "gaussian":
            return {"kind": kind, "zeta": v["sim.zeta"]}
        if kind == "anisotropic":
            return {"kind": kind, "cov": np.reshape(v["sim.cov"], (3, 3)).tolist()}
        if kind == "shell":
            return {"kind": kind, "radius": v["sim.radius"]}
        if kind == "two_point":
            return {"kind": kind, "v": [np.sqrt(v["sim.zeta"]), 0.0, 0.0]}
        return None  # eigencone: filled in by the caller

    def sim_config(self, **overrides):
        from .dsmc import SimConfig
        from .moments import leading_eigenpair

        v = self.values
        A = self.flow_matrix()
        init = self.initial_state()
        if init is None:
            L = flows.asymptotic_generator(A)[0] if np.any(A) else np.zeros((3, 3))
            N_bar = leading_eigenpair(L, self.kernel().b).N_bar
            init = {"kind": "eigencone", "K_scale": 3.0 / np.trace(N_bar), "N_bar": N_bar.tolist()}
        kw = dict(N=v["sim.N"], t_end=v["sim.t_end"], flow=A, kernel=self.kernel(), seed=v["sim.seed"],
                  dt=v["sim.dt"], mode=v["sim.mode"], alpha=v["sim.alpha"], init=init,
                  output_interval=v["sim.output_interval"], rho0=v["sim.rho0"],
                  replicas=v["sim.replicas"], threads=v["sim.threads"], splitting=v["sim.splitting"],
                  speed_floor=v["sim.speed_floor"], majorant_factor=v["sim.majorant_factor"])
        kw.update(overrides)
        return SimConfig(**kw)


def _convert(key, raw):
    conv, _, check = SCHEMA[key]
    if raw is None:
        return None
    try:
        val = conv(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, f"invalid value {raw!r} ({exc})") from None
    if check is not None and not check(val):
        raise ConfigError(key, f"value {raw!r} out of range")
    return val


def parse_config(tokens=None, path=None, subcommand=None):
    """Build a validated RunConfig from ``key=value`` tokens and/or a JSON file.

    The first token may be the subcommand. A JSON file may be a nested
    config (as written by ``RunConfig.to_dict``) or a run manifest.
    Flags override the file.
    """
    tokens = list(tokens or [])
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from None
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]
        data = dict(data)
        subcommand = subcommand or data.pop("subcommand", None)
        data.pop("subcommand", None)
        for key, v in _flatten(data).items():
            if v is not None:  # null means "use the default"
                raw[_resolve_key(key)] = v
    if tokens and "=" not in tokens[0]:
        subcommand = tokens.pop(0)
    if subcommand not in SUBCOMMANDS:
        raise ConfigError("subcommand", f"must be one of {', '.join(SUBCOMMANDS)}")
    for tok in tokens:
        if "=" not in tok:
            raise ConfigError(tok, "expected key=value")
        key, val = tok.split("=", 1)
        raw[_resolve_key(key.strip())] = val.strip()

    values = {key: default for key, (_, default, _) in SCHEMA.items()}
    values.update(SUB_DEFAULTS.get(subcommand, {}))
    for key, v in raw.items():
        values[key] = _convert(key, v)
    cfg = RunConfig(subcommand, values)
    _validate(cfg, set(raw))
    return cfg


def _validate(cfg, given):
    v = cfg.values
    sub = cfg.subcommand
    if "flow.A" in given and "flow.name" not in given:
        v["flow.name"] = "matrix"
    name = v["flow.name"]
    needed = FLOW_PARAMS[name]
    sweeping = sub == "sweep"
    for p in needed:
        if sweeping and p == "K":
            continue
        if v[f"flow.{p}"] is None:
            raise ConfigError(f"flow.{p}", f"required for flow {name}")
    for p in ("K", "K1", "K2", "K3", "A"):
        if f"flow.{p}" in given and p not in needed:
            raise ConfigError(f"flow.{p}", f"not used by flow {name}")
    if sweeping and name not in ("simple_shear", "planar_shear"):
        raise ConfigError("flow.name", "sweep supports simple_shear and planar_shear")
    if sub == "stability-check" and name != "simple_shear":
        raise ConfigError("flow.name", "the stability criterion is defined for simple shear")
    if sub == "classify" and name == "none":
        raise ConfigError("flow.name", "classify needs a flow")

    if v["kernel.name"] == "custom" and v["kernel.values"] is None:
        raise ConfigError("kernel.values", "required for the custom kernel")
    if v["kernel.values"] is not None and v["kernel.name"] != "custom":
        raise ConfigError("kernel.values", "only used by the custom kernel")
    try:
        kernel = cfg.kernel()
    except ValueError as exc:
        raise ConfigError("kernel.values" if v["kernel.name"] == "custom" else "kernel.name", str(exc)) from None
    if kernel.gamma != 0 and (v["sim.mode"] == "rescaled" or sub in ("selfsim", "entropy", "sweep",
                                                                      "stability-check", "eigen", "moments")):
        raise ConfigError("kernel.gamma", "this mode requires Maxwell molecules (gamma = 0)")
    if v["sim.alpha"] is not None and v["sim.mode"] != "rescaled":
        raise ConfigError("sim.alpha", "extra friction only applies in rescaled mode")
    if v["sim.init"] == "anisotropic":
        if v["sim.cov"] is None:
            raise ConfigError("sim.cov", "required for the anisotropic initial state")
        C = np.reshape(v["sim.cov"], (3, 3))
        if not np.allclose(C, C.T) or np.any(np.linalg.eigvalsh(0.5 * (C + C.T)) <= 0):
            raise ConfigError("sim.cov", "must be symmetric positive definite")
    if v["sim.init"] == "two_point" and v["sim.N"] % 2:
        raise ConfigError("sim.N", "two-point initial state needs an even N")
    if v["analysis.M0"] is not None:
        M0 = np.reshape(v["analysis.M0"], (3, 3))
        if not np.allclose(M0, M0.T) or np.linalg.eigvalsh(0.5 * (M0 + M0.T))[0] < 0:
            raise ConfigError("analysis.M0", "must be symmetric positive semidefinite")
    if (kernel.is_zero or kernel.b == 0) and sub in ("eigen", "selfsim", "stability-check", "sweep", "entropy"):
        raise ConfigError("kernel.name", "needs a kernel with b > 0")
    if name == "matrix" or name in ("simple_shear", "planar_shear", "cylindrical_dilatation") and not sweeping:
        A = cfg.flow_matrix()
        if not np.any(A) and sub == "classify":
            raise ConfigError("flow.A", "A = 0 has no deformation")
    if v["sim.mode"] == "rescaled" and sub in ("simulate",):
        A = cfg.flow_matrix()
        if np.any(A):
            fam = flows.classify_flow(A).family
            if fam not in flows.DECAYING and fam != flows.Family.SIMPLE_SHEAR:
                raise ConfigError("flow.name", "rescaled mode needs a flow with a constant asymptotic generator")
