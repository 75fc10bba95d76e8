"""Scenario configuration files.

A scenario is a TOML document::

    name = "fig1"
    model = "model1"            # model1 | model2 | custom-file
    t0 = 0.0
    initial_state = "excited"   # excited | ground | mixed | [x, y, z] (Bloch vector)
    methods = ["exact", "magnus1"]
    truncation = 8

    [params]
    omega_z = 1.0
    gamma = 0.2
    omega = 2.0

    [time]
    n_periods = 10
    points_per_period = 20

    [output]
    format = "csv"
    path = "fig1.csv"

    [sweep]                     # optional: one run per value
    parameter = "omega"
    values = [1.0, 1.5, 2.0, 3.0]

Numbers may be written as arithmetic strings in ``pi`` (``"pi/4"``).

For ``model = "custom-file"`` the ``[params]`` table holds ``file``, the path
of a TOML file describing a two-level (or larger) generator, see
:func:`load_custom_lindbladian`.
"""

from __future__ import annotations

import ast
import math
import operator
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

__all__ = [
    "ScenarioConfig",
    "METHODS",
    "load_config",
    "parse_config",
    "preset_path",
    "PRESETS",
    "expand_sweep",
    "build_lindbladian",
    "load_custom_lindbladian",
    "initial_density_matrix",
    "parse_number",
]

METHODS = ("exact", "exact-log", "magnus0", "magnus1", "magnus2", "analytic0", "analytic1")
MODELS = ("model1", "model2", "custom-file")
PRESETS = ("fig1", "fig2", "fig3", "fig4")
_NAMED_STATES = ("excited", "ground", "mixed")

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}


def parse_number(value, where: str = "value") -> float:
    """Accept a number or an arithmetic string over ``pi``."""
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{where}: expected a number, got {type(value).__name__}")
    try:
        tree = ast.parse(value.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"{where}: cannot parse {value!r}") from exc

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        raise ConfigError(f"{where}: unsupported expression {value!r}")

    return float(ev(tree))


@dataclass(frozen=True)
class ScenarioConfig:
    """A validated scenario. See the module docstring for the file format."""

    model: str = "model1"
    params: dict = field(default_factory=dict)
    name: str = "scenario"
    t0: float = 0.0
    initial_state: Any = "excited"
    n_periods: int = 10
    points_per_period: int = 20
    methods: tuple = ("exact", "magnus1")
    truncation: int = 8
    output_format: str = "csv"
    output_path: str | None = None
    sweep_parameter: str | None = None
    sweep_values: tuple = ()
    tol: float = 1e-10
    base_dir: str = "."

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model: expected one of {MODELS}, got {self.model!r}")
        if not self.methods:
            raise ConfigError("methods: at least one method is required")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"methods: unknown method {m!r}; expected a subset of {METHODS}")
        if self.model == "custom-file" and any(m.startswith("analytic") for m in self.methods):
            raise ConfigError("methods: analytic generators exist only for model1 and model2")
        if self.points_per_period < 1:
            raise ConfigError("time.points_per_period must be >= 1")
        if self.n_periods < 0:
            raise ConfigError("time.n_periods must be >= 0")
        if self.output_format not in ("csv", "json"):
            raise ConfigError(f"output.format must be csv or json, got {self.output_format!r}")
        if self.truncation < 0:
            raise ConfigError("truncation must be >= 0")
        _check_state_spec(self.initial_state)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        d["sweep_values"] = list(self.sweep_values)
        if isinstance(self.initial_state, tuple):
            d["initial_state"] = list(self.initial_state)
        d.pop("base_dir")
        return d

    def with_overrides(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)


def _check_state_spec(spec):
    if isinstance(spec, str):
        if spec not in _NAMED_STATES:
            raise ConfigError(f"initial_state: expected one of {_NAMED_STATES} or a Bloch vector, got {spec!r}")
        return
    vec = tuple(spec)
    if len(vec) != 3:
        raise ConfigError("initial_state: Bloch vector needs three components")
    if sum(x * x for x in vec) > 1 + 1e-12:
        raise ConfigError(f"initial_state: Bloch vector {vec} has norm > 1")


def initial_density_matrix(spec, dim: int = 2):
    from .superop import DensityMatrix

    if isinstance(spec, str):
        if spec == "excited":
            rho = np.zeros((dim, dim))
            rho[0, 0] = 1.0
            return DensityMatrix(rho)
        if spec == "ground":
            rho = np.zeros((dim, dim))
            rho[-1, -1] = 1.0
            return DensityMatrix(rho)
        return DensityMatrix.maximally_mixed(dim)
    if dim != 2:
        raise ConfigError("Bloch-vector initial states need a two-level model")
    return DensityMatrix.from_bloch(*spec)


def _section(doc: dict, key: str) -> dict:
    value = doc.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{key}] must be a table")
    return value


def parse_config(doc: dict, *, base_dir: str | Path = ".") -> ScenarioConfig:
    """Validate a parsed TOML document into a :class:`ScenarioConfig`."""
    known = {"name", "model", "t0", "initial_state", "methods", "truncation", "params", "time", "output", "sweep", "tol"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    params = {}
    for k, v in _section(doc, "params").items():
        params[k] = v if k == "file" or isinstance(v, bool) else parse_number(v, f"params.{k}")
    time = _section(doc, "time")
    output = _section(doc, "output")
    sweep = _section(doc, "sweep")
    state = doc.get("initial_state", "excited")
    if isinstance(state, list):
        state = tuple(parse_number(x, "initial_state") for x in state)
    kw = dict(
        model=doc.get("model", "model1"),
        params=params,
        name=str(doc.get("name", "scenario")),
        t0=parse_number(doc.get("t0", 0.0), "t0"),
        initial_state=state,
        methods=tuple(doc.get("methods", ("exact", "magnus1"))),
        truncation=int(doc.get("truncation", 8)),
        n_periods=int(time.get("n_periods", 10)),
        points_per_period=int(time.get("points_per_period", 20)),
        output_format=str(output.get("format", "csv")),
        output_path=output.get("path"),
        tol=parse_number(doc.get("tol", 1e-10), "tol"),
        base_dir=str(base_dir),
    )
    if sweep:
        if "parameter" not in sweep or "values" not in sweep:
            raise ConfigError("[sweep] needs 'parameter' and 'values'")
        kw["sweep_parameter"] = str(sweep["parameter"])
        kw["sweep_values"] = tuple(parse_number(v, "sweep.values") for v in sweep["values"])
    return ScenarioConfig(**kw)


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(doc, base_dir=path.parent)


def preset_path(name: str) -> Path:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {PRESETS}")
    return Path(__file__).with_name("presets") / f"{name}.toml"


def expand_sweep(config: ScenarioConfig) -> list[tuple[str, ScenarioConfig]]:
    """One ``(suffix, config)`` per sweep value; a single unsuffixed entry otherwise."""
    if not config.sweep_parameter:
        return [("", config)]
    out = []
    for v in config.sweep_values:
        params = dict(config.params)
        params[config.sweep_parameter] = v
        out.append((f"{config.sweep_parameter}={v:.6g}", replace(config, params=params, sweep_parameter=None,
                                                                  sweep_values=())))
    return out


# --------------------------------------------------------------------------
# model construction
# --------------------------------------------------------------------------


def model_params(config: ScenarioConfig):
    from .models import Model1Params, Model2Params

    cls = {"model1": Model1Params, "model2": Model2Params}[config.model]
    try:
        return cls(**config.params)
    except TypeError as exc:
        raise ConfigError(f"params: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from exc


def build_lindbladian(config: ScenarioConfig):
    """The periodic generator described by a scenario."""
    from .models import model1_lindbladian, model2_lindbladian

    if config.model == "model1":
        return model1_lindbladian(model_params(config))
    if config.model == "model2":
        return model2_lindbladian(model_params(config))
    if "file" not in config.params:
        raise ConfigError("params.file is required for model = 'custom-file'")
    path = Path(config.params["file"])
    if not path.is_absolute():
        path = Path(config.base_dir) / path
    return load_custom_lindbladian(path)


_NAMED_OPS = {
    "sx": "SIGMA_X",
    "sy": "SIGMA_Y",
    "sz": "SIGMA_Z",
    "sp": "SIGMA_PLUS",
    "sm": "SIGMA_MINUS",
    "id": "IDENTITY2",
}


def _operator(spec, where: str) -> np.ndarray:
    from . import superop

    if isinstance(spec, str):
        if spec not in _NAMED_OPS:
            raise ConfigError(f"{where}: unknown operator {spec!r}; expected one of {sorted(_NAMED_OPS)}")
        return np.array(getattr(superop, _NAMED_OPS[spec]))
    try:
        arr = np.array(spec, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: operator must be a name or a nested list") from exc
    if arr.ndim == 3 and arr.shape[-1] == 2:
        return arr[..., 0] + 1j * arr[..., 1]
    if arr.ndim == 2:
        return arr.astype(complex)
    raise ConfigError(f"{where}: operator has shape {arr.shape}; use [[a, b], ...] or [[[re, im], ...], ...]")


def _waveform(term: dict, omega: float, where: str):
    kind = term.get("kind", "const")
    n = int(term.get("harmonic", 0))
    c = complex(parse_number(term.get("amplitude", 1.0), f"{where}.amplitude"))
    if kind == "const":
        return lambda t: c * np.ones_like(np.asarray(t, dtype=float))
    if kind == "cos":
        return lambda t: c * np.cos(n * omega * np.asarray(t, dtype=float))
    if kind == "sin":
        return lambda t: c * np.sin(n * omega * np.asarray(t, dtype=float))
    raise ConfigError(f"{where}.kind must be const, cos or sin, got {kind!r}")


def load_custom_lindbladian(path: str | Path):
    """Read a generator ``H(t) = sum f_k(t) H_k`` with jumps ``A_j(t) = sum g_jk(t) A_jk``.

    File layout::

        period = 1.0

        [[hamiltonian]]
        operator = "sz"           # sx sy sz sp sm id, or a nested list matrix
        kind = "const"            # const | cos | sin
        harmonic = 0              # multiple of 2 pi / period
        amplitude = 0.5

        [[jumps]]
        rate = 0.1
        [[jumps.terms]]
        operator = "sm"
        kind = "cos"
        harmonic = 1

    Hamiltonian terms must be Hermitian with real amplitudes.
    """
    from .propagation import PeriodicLindbladian
    from .superop import hamiltonian_superop, left_multiplication, right_multiplication, sandwich

    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read custom model {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if "period" not in doc:
        raise ConfigError(f"{path}: 'period' is required")
    T = parse_number(doc["period"], "period")
    if T <= 0:
        raise ConfigError(f"{path}: period must be positive")
    w = 2 * math.pi / T
    terms = []
    for i, h in enumerate(doc.get("hamiltonian", [])):
        where = f"hamiltonian[{i}]"
        op = _operator(h.get("operator"), where)
        if np.max(np.abs(op - op.conj().T)) > 1e-12:
            raise ConfigError(f"{where}: operator is not Hermitian")
        f = _waveform(h, w, where)
        terms.append((f, hamiltonian_superop(op)))
    for j, jump in enumerate(doc.get("jumps", [])):
        where = f"jumps[{j}]"
        rate = parse_number(jump.get("rate", 1.0), f"{where}.rate")
        if rate < 0:
            raise ConfigError(f"{where}: negative rate {rate}")
        parts = [(_waveform(t, w, f"{where}.terms[{k}]"), _operator(t.get("operator"), f"{where}.terms[{k}]"))
                 for k, t in enumerate(jump.get("terms", []))]
        # D(sum f_a A_a) = sum_ab f_a conj(f_b) [2 A_a . A_b^dag - {A_b^dag A_a, .}]
        for fa, A in parts:
            for fb, B in parts:
                bda = B.conj().T @ A
                mat = rate * (2 * sandwich(A, B.conj().T) - left_multiplication(bda) - right_multiplication(bda))
                terms.append((lambda t, fa=fa, fb=fb: fa(t) * np.conj(fb(t)), mat))
    if not terms:
        raise ConfigError(f"{path}: no hamiltonian or jump terms")
    return PeriodicLindbladian.from_terms(terms, T, f"custom({path.name})")
