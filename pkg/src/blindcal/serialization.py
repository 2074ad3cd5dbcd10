"""JSON/CSV formats for instances, configs, results and sweep tables.

Complex numbers are written as ``[re, im]`` pairs. Floats use Python's
shortest round-trip repr, so reading back a written instance is bit-exact.
"""

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import InvalidConfig
from .model import CalibrationVector, FrequencySet, ProblemInstance

FORMAT_VERSION = 1
METHODS = ("algebraic", "optim", "both")


def complex_to_pairs(z):
    return [[float(v.real), float(v.imag)] for v in np.asarray(z, dtype=complex)]


def pairs_to_complex(pairs):
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    return arr[:, 0] + 1j * arr[:, 1]


def instance_to_dict(inst):
    return {
        "format_version": FORMAT_VERSION,
        "kind": "instance",
        "N": int(inst.N),
        "sigma": float(inst.sigma),
        "seed": int(inst.seed),
        "frequencies": [float(w) for w in inst.freq.omegas],
        "gammas": [float(x) for x in inst.freq.gammas],
        "gains": complex_to_pairs(inst.cal.g),
    }


def instance_from_dict(d):
    version = d.get("format_version")
    if version != FORMAT_VERSION:
        raise InvalidConfig("format_version", f"unsupported instance format {version!r}")
    try:
        freq = FrequencySet(np.array(d["frequencies"], dtype=float), np.array(d["gammas"], dtype=float))
        cal = CalibrationVector(pairs_to_complex(d["gains"]))
        inst = ProblemInstance(freq, cal, sigma=float(d.get("sigma", 0.0)), seed=int(d.get("seed", 0)))
    except KeyError as exc:
        raise InvalidConfig(exc.args[0], "missing field") from exc
    except ValueError as exc:
        raise InvalidConfig("instance", str(exc)) from exc
    if "N" in d and int(d["N"]) != inst.N:
        raise InvalidConfig("N", f"declares {d['N']} but has {inst.N} gains")
    return inst


def write_instance(inst, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_dict(inst), fh, indent=2)
        fh.write("\n")


def read_instance(path):
    with open(path, encoding="utf-8") as fh:
        return instance_from_dict(json.load(fh))


@dataclass
class ExperimentConfig:
    N: int = 64
    s: int = 20
    separation: float = 2.0
    DR_gamma: float = 2.0
    DR_g: float = 2.0
    sigma_list: list = field(default_factory=lambda: [0.5])
    L_list: list = field(default_factory=lambda: [500])
    trials: int = 1
    master_seed: int = 0
    method: str = "both"
    grid_size: int | None = None
    output_path: str | None = None

    def validate(self):
        if not isinstance(self.N, int) or self.N < 2:
            raise InvalidConfig("N", "must be an integer >= 2")
        if not isinstance(self.s, int) or self.s < 1:
            raise InvalidConfig("s", "must be a positive integer")
        if self.N < self.s + 1:
            raise InvalidConfig("s", f"need N >= s + 1 (N={self.N}, s={self.s})")
        if self.separation <= 0:
            raise InvalidConfig("separation", "must be positive")
        if self.separation * self.s > self.N:
            raise InvalidConfig("separation", "separation * s exceeds N: frequencies do not fit on the torus")
        if self.DR_gamma < 1 or self.DR_g < 1:
            raise InvalidConfig("DR_gamma" if self.DR_gamma < 1 else "DR_g", "dynamic range must be >= 1")
        if not self.sigma_list or any(s < 0 for s in self.sigma_list):
            raise InvalidConfig("sigma_list", "must be a nonempty list of nonnegative values")
        if not self.L_list:
            raise InvalidConfig("L_list", "must be nonempty")
        for L in self.L_list:
            if L != "inf" and (not isinstance(L, int) or L < 1):
                raise InvalidConfig("L_list", f"entries must be positive integers or 'inf', got {L!r}")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise InvalidConfig("trials", "must be >= 1")
        if self.method not in METHODS:
            raise InvalidConfig("method", f"must be one of {METHODS}")
        if self.grid_size is not None and self.grid_size < 8 * self.N:
            raise InvalidConfig("grid_size", f"must be >= 8N = {8 * self.N}")
        return self

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known - {"format_version", "kind"}
        if unknown:
            raise InvalidConfig(sorted(unknown)[0], "unknown config field")
        return cls(**{k: v for k, v in d.items() if k in known}).validate()

    def to_dict(self):
        return {"format_version": FORMAT_VERSION, "kind": "experiment_config", **asdict(self)}


def read_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidConfig("config", f"not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)


TRIAL_COLUMNS = (
    "trial_index",
    "method",
    "L",
    "sigma",
    "cal_error_mean",
    "supp_error",
    "success",
    "runtime_ms",
    "iterations",
    "final_objective",
    "error_code",
)


@dataclass
class TrialRecord:
    trial_index: int
    method: str
    L: object
    sigma: float
    cal_error_mean: float | None = None
    supp_error: float | None = None
    success: int = 0
    runtime_ms: float = 0.0
    iterations: int | None = None
    final_objective: float | None = None
    error_code: str = ""

    def row(self):
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(float(v))
            return str(v)

        return [fmt(getattr(self, c)) for c in TRIAL_COLUMNS]
