"""Experiment configuration: TOML file plus ``--set section.key=value`` overrides.

Schema (all sections optional)::

    master_seed = 0
    output_dir = "runs/example"
    workers = 1

    [landscape]
    N = [64]              # grids are lists
    k = [3]
    alpha = [0.2, 1.0]    # or lam = [...]; alpha = [1.0] when neither is set
    beta = ["inf"]        # "inf" selects gradient descent
    mixture = {3 = 1.0}   # degree -> a_p
    pure_signal = false   # H0 = 0

    [replicas]
    n_disorder = 10
    n_init = 20

    [success]
    rule = "strong"       # strong: min m >= 1 - eps, weak: min m >= eps
    eps = 0.1
    T0 = 1.0
    T = 20.0
    alt_T0 = 2.0          # second window, reported for sensitivity
    alt_T = 20.0

    [integrator]
    step_h = 0.01         # omit for the default step
    record_every = 0.05
    scheme = "euler"      # or "rk4" (gradient descent only)

    [init]
    kind = "uniform_hemisphere"

    [threshold]
    lam_lo = 1.0
    lam_hi = 10.0
    rel_tol = 0.1         # stop when lam_hi / lam_lo - 1 <= rel_tol
    target = 0.5
    max_widen = 4         # bracket widenings (x4 each way) before giving up

    [fewell]              # first grid cell, first disorder
    eps = 0.01            # window exponent; needs eps < ((k-2)/2 - alpha)/k
    n_samples = 2000
    n_temps = 200         # annealing temperatures per window
    n_chains = 100
    horizon = 50.0
    recover_at = 0.5

    [check_init]
    delta = 0.25
    level = "weak_infty"  # or 1, 2, 3
    T = 2.0
    n_samples = 500
    n_replicas = 100

    [baseline]
    N = 64
    k = 3
    lam = 0.0
    n_trials = 100
    iters = 50
    n_obs = 1

    [recipe]              # keyword arguments of the chosen recipe
    N = 64
"""

from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..dynamics import IntegratorConfig
from ..initializers import InitSpec
from ..landscape import MixtureSpec

DEFAULTS = {
    "master_seed": 0,
    "output_dir": "runs/default",
    "workers": 1,
    "landscape": {"N": [64], "k": [3], "alpha": None, "lam": None, "beta": ["inf"],
                  "mixture": {"3": 1.0}, "pure_signal": False},
    "replicas": {"n_disorder": 10, "n_init": 20},
    "success": {"rule": "strong", "eps": 0.1, "T0": 1.0, "T": 20.0, "alt_T0": 2.0, "alt_T": None},
    "integrator": {"step_h": None, "record_every": 0.05, "scheme": "euler"},
    "init": {"kind": "uniform_hemisphere"},
    "threshold": {"lam_lo": 1.0, "lam_hi": 10.0, "rel_tol": 0.1, "target": 0.5, "max_widen": 4},
    "fewell": {"eps": 0.01, "n_samples": 2000, "n_chains": 100, "horizon": 50.0,
               "recover_at": 0.5, "n_temps": 200},
    "check_init": {"delta": 0.25, "T": 2.0, "n_samples": 500, "n_replicas": 100, "level": "weak_infty"},
    "baseline": {"N": 64, "k": 3, "lam": 0.0, "n_trials": 100, "iters": 50, "n_obs": 1},
    "recipe": {},
}


class ConfigError(ValueError):
    pass


def parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(cfg: dict, assignment: str):
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{key} does not name a config table entry")
    node[parts[-1]] = parse_value(value.strip())


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "mixture":
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _as_list(v):
    if v is None:
        return None
    return list(v) if isinstance(v, (list, tuple)) else [v]


def as_beta(v) -> float:
    if isinstance(v, str) and v.lower() in ("inf", "infinity"):
        return math.inf
    return float(v)


@dataclass
class ExperimentConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def load(cls, path=None, overrides=()) -> "ExperimentConfig":
        data = {}
        if path is not None:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        return cls.from_dict(data, overrides)

    @classmethod
    def from_dict(cls, data: dict, overrides=()) -> "ExperimentConfig":
        raw = _merge(DEFAULTS, data)
        for o in overrides:
            apply_override(raw, o)
        cfg = cls(raw)
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def mixture(self) -> dict:
        return {int(p): float(a) for p, a in self.raw["landscape"]["mixture"].items()}

    @property
    def master_seed(self) -> int:
        return int(self.raw["master_seed"])

    @property
    def output_dir(self) -> Path:
        return Path(self.raw["output_dir"])

    def grid(self) -> list:
        """Cells as dicts (N, k, alpha, lam, beta) in a fixed order."""
        ls = self.raw["landscape"]
        alphas, lams = _as_list(ls.get("alpha")), _as_list(ls.get("lam"))
        if alphas is not None and lams is not None:
            raise ConfigError("give only one of landscape.alpha and landscape.lam")
        if alphas is None and lams is None:
            alphas = [1.0]
        cells = []
        for N in _as_list(ls["N"]):
            for k in _as_list(ls["k"]):
                for beta in _as_list(ls["beta"]):
                    for s in (alphas if alphas is not None else lams):
                        alpha = float(s) if alphas is not None else None
                        lam = float(N) ** alpha if alphas is not None else float(s)
                        cells.append({"N": int(N), "k": float(k), "alpha": alpha, "lam": lam,
                                      "beta": as_beta(beta)})
        return cells

    def spec_for(self, cell: dict) -> MixtureSpec:
        return MixtureSpec(N=cell["N"], mixture=self.mixture, k=cell["k"], lam=cell["lam"],
                           alpha=cell["alpha"], beta=cell["beta"])

    def integrator(self, beta=None, horizon=None, seed: int = 0) -> IntegratorConfig:
        ic = self.raw["integrator"]
        return IntegratorConfig(step_h=ic.get("step_h"), record_every=float(ic["record_every"]),
                                horizon_T=float(self.raw["success"]["T"] if horizon is None else horizon),
                                beta=beta, seed=seed, scheme=ic["scheme"])

    def init_spec(self) -> InitSpec:
        return InitSpec(**self.raw["init"])

    def windows(self):
        s = self.raw["success"]
        T = float(s["T"])
        alt_T = float(s["alt_T"]) if s.get("alt_T") is not None else T
        return (float(s["T0"]), T), (float(s["alt_T0"]), alt_T)

    def validate(self):
        s = self.raw["success"]
        if s["rule"] not in ("strong", "weak"):
            raise ConfigError("success.rule must be 'strong' or 'weak'")
        (t0, t1), (a0, a1) = self.windows()
        if not 0 <= t0 <= t1:
            raise ConfigError("success window must satisfy 0 <= T0 <= T")
        if not 0 <= a0 <= a1 <= t1:
            raise ConfigError("sensitivity window must lie inside [0, T]")
        r = self.raw["replicas"]
        if int(r["n_disorder"]) < 1 or int(r["n_init"]) < 1:
            raise ConfigError("replica counts must be positive")
        for cell in self.grid():
            self.spec_for(cell)
        self.init_spec()
        self.integrator(beta=self.grid()[0]["beta"])

    def success(self, window_min):
        s = self.raw["success"]
        eps = float(s["eps"])
        thr = 1.0 - eps if s["rule"] == "strong" else eps
        return window_min >= thr
