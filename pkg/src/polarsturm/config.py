"""JSON problem configs: schema validation and typed option records."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .errors import ConfigError
from .flow import CoefficientModel, MatrixFunction

SCHEMA_VERSION = 1
KINDS = ("hamiltonian", "morse", "sturm-liouville", "bc-check", "appendix")

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_mfun = {
    "oneOf": [
        {"type": "number"},
        {
            "type": "object",
            "properties": {
                "kind": {"enum": ["constant", "polynomial", "tabulated"]},
                "value": {"oneOf": [{"type": "number"}, _matrix]},
                "coefficients": {"type": "array", "items": _matrix},
                "tau": {"type": "array", "items": {"type": "number"}},
                "values": {"type": "array", "items": _matrix},
            },
            "additionalProperties": False,
        },
    ]
}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "kind"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"enum": list(KINDS)},
        "n": {"type": "integer", "minimum": 1, "maximum": 64},
        "t": {"type": "number", "exclusiveMinimum": 0},
        "coefficients": {
            "type": "object",
            "properties": {k: _mfun for k in ("A", "B", "C", "A_lin", "B_lin", "C_lin")},
            "additionalProperties": False,
        },
        "N": _matrix,
        "sl": {
            "type": "object",
            "required": ["alpha0", "beta0", "gamma1", "delta1"],
            "properties": {
                "C0": _mfun,
                "D": _mfun,
                "E": _mfun,
                "alpha0": _matrix,
                "beta0": _matrix,
                "gamma1": _matrix,
                "delta1": _matrix,
            },
            "additionalProperties": False,
        },
        "bc": {
            "type": "object",
            "properties": {k: _matrix for k in ("alpha0", "beta0", "gamma0", "delta0",
                                                 "alpha1", "beta1", "gamma1", "delta1")},
            "additionalProperties": False,
        },
        "appendix": {
            "type": "object",
            "properties": {
                "L0": _matrix,
                "L1": _matrix,
                "L2": _matrix,
                "case": {"enum": ["a", "b", "c", "d", "e"]},
                "x": {"type": "array", "items": {"type": "number"}, "minItems": 5, "maxItems": 5},
                "a": {"type": "number"},
                "b": {"type": "number"},
                "c": {"type": "number"},
                "nu": {"enum": [1, -1]},
            },
            "additionalProperties": False,
        },
        "options": {
            "type": "object",
            "properties": {
                "h": {"type": "number", "exclusiveMinimum": 0},
                "lambda_min": {"type": "number"},
                "lambda_max": {"type": "number"},
                "lambda": {"type": "number"},
                "lambda_grid": {"type": "array", "items": {"type": "number"}},
                "branches": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "count": {"type": "integer", "minimum": 1, "maximum": 200},
                "seed": {"type": "integer", "minimum": 0},
                "oracle": {"type": "integer", "minimum": 2},
                "samples": {"type": "integer", "minimum": 1},
                "sweep": {"enum": ["tau", "lambda"]},
                "stride": {"type": "integer", "minimum": 1},
                "k": {"type": "integer", "minimum": 0},
                "branch": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


@dataclass
class Options:
    h: float = 1e-3
    lambda_min: float = -10.0
    lambda_max: float = 10.0
    lam: float = 0.0
    lambda_grid: Optional[list] = None
    branches: Optional[list] = None
    count: int = 3
    seed: int = 0
    oracle: Optional[int] = None
    samples: int = 100
    sweep: str = "tau"
    stride: int = 1
    k: int = 0
    branch: int = 0


@dataclass
class ProblemConfig:
    kind: str
    raw: dict = field(repr=False)
    n: int = 1
    t: float = 1.0
    options: Options = field(default_factory=Options)

    @property
    def digest(self) -> str:
        return config_digest(self.raw)

    def model(self) -> CoefficientModel:
        spec = dict(self.raw.get("coefficients", {}))
        if not spec:
            raise ConfigError("config has no 'coefficients' section")
        spec["n"] = self.n
        model = CoefficientModel.from_spec(spec)
        model.validate(self.t)
        return model

    def N(self) -> np.ndarray:
        N = np.asarray(self.raw.get("N", np.zeros((self.n, self.n))), dtype=float)
        if N.shape != (self.n, self.n):
            raise ConfigError("N must be n x n")
        return N

    def sl_problem(self):
        from .sturm import SLProblem

        sl = self.raw.get("sl")
        if sl is None:
            raise ConfigError("config has no 'sl' section")
        n = self.n
        get = lambda k, d: MatrixFunction.from_spec(sl.get(k, d), n)
        return SLProblem(get("C0", 1.0), get("D", 0.0), get("E", 1.0), _mat(sl["alpha0"], n),
                         _mat(sl["beta0"], n), _mat(sl["gamma1"], n), _mat(sl["delta1"], n), self.t)

    def bc(self):
        from .bc import BCQuadruple

        spec = self.raw.get("bc")
        if spec is None:
            raise ConfigError("config has no 'bc' section")
        return BCQuadruple.from_spec({k: _mat(v, self.n) for k, v in spec.items()}, self.n)


def _mat(value, n: int) -> np.ndarray:
    m = np.asarray(value, dtype=float)
    if m.shape != (n, n):
        raise ConfigError(f"expected a {n} x {n} matrix, got shape {m.shape}")
    return m


def config_digest(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def parse_config(raw: dict) -> ProblemConfig:
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {path}: {exc.message}") from None
    opts = dict(raw.get("options", {}))
    if "lambda" in opts:
        opts["lam"] = opts.pop("lambda")
    options = Options(**opts)
    if options.lambda_min >= options.lambda_max:
        raise ConfigError("lambda_min must be below lambda_max")
    kind = raw["kind"]
    needs_t = kind in ("hamiltonian", "morse", "sturm-liouville")
    if needs_t and "t" not in raw:
        raise ConfigError(f"kind {kind!r} needs a horizon 't'")
    n = int(raw.get("n", 1))
    return ProblemConfig(kind, raw, n, float(raw.get("t", 1.0)), options)


def load_config(path) -> ProblemConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return parse_config(raw)
