import io
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Any
from typing import Dict
from typing import List
from typing import Optional
import jinja2
import yaml
from yaml import safe_load
import dislocation
from dislocation import DislocationMeasure
from logger import logger
from observables import TestFunction, parse_function, parse_functions


class ConfigParseError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ConfigValidationError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def dyadic_schedule(first: int, last: int) -> List[float]:
    return [2.0**-k for k in range(first, last + 1)]


def log_schedule(hi: float, lo: float, n: int) -> List[float]:
    if n < 2:
        return [hi]
    step = (math.log(lo) - math.log(hi)) / (n - 1)
    return [math.exp(math.log(hi) + i * step) for i in range(n)]


@dataclass
class MeasureConfig:
    type: str = "discrete"
    atoms: List[List[Any]] = field(default_factory=list)
    density: str = "uniform"
    scale: float = 1.0
    beta: float = 0.5
    child_fraction: float = 1.0
    epsilon: float = 0.0
    p_lower: Optional[float] = None


@dataclass
class RunSettings:
    alpha: float = 0.0
    eta: float = 1e-3
    eta_schedule: List[float] = field(default_factory=lambda: dyadic_schedule(4, 16))
    replicas: int = 100
    master_seed: int = 20240101
    fragment_budget: int = 10**8
    lambdas: List[float] = field(default_factory=lambda: [0.5, 1.0, 2.0])
    p_grid: List[float] = field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0])
    t: float = 2.0
    x_grid: List[float] = field(default_factory=lambda: [math.log(10.0**k) for k in (2, 3, 4)])
    p: Optional[float] = None
    floor: float = 0.0


@dataclass
class OutputConfig:
    path: str = "-"
    format: str = "csv"


@dataclass
class RunConfig:
    measure: MeasureConfig
    run: RunSettings = field(default_factory=RunSettings)
    output: OutputConfig = field(default_factory=OutputConfig)
    functions: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def test_functions(self) -> List[TestFunction]:
        return parse_functions(self.functions)

    def build_measure(self) -> DislocationMeasure:
        m = self.measure
        if m.type == "discrete":
            p_lower = m.p_lower if m.p_lower is not None else dislocation.DISCRETE_P_LOWER
            try:
                return dislocation.discrete([(rate, terms) for rate, terms in m.atoms], p_lower)
            except ValueError as e:
                # SumExceedsOne and malformed atoms alike
                raise ConfigValidationError("measure.atoms", str(e)) from e

        try:
            density = dislocation.DENSITIES[m.density](m.beta, m.scale) if m.density == "power" else dislocation.DENSITIES[m.density](m.scale)
            nu: DislocationMeasure = dislocation.BinaryDensityDislocation(density, m.child_fraction, 0.0, m.p_lower)
        except ValueError as e:
            raise ConfigValidationError("measure", str(e)) from e
        if m.epsilon > 0.0:
            nu = dislocation.truncate(nu, m.epsilon)
        return nu


# All configurations that used to be supported but are not anymore.
# Used to tell the user what to write instead.
deprecated_configs: Dict[str, Optional[str]] = {"measure.eps": "measure.epsilon", "run.seed": "run.master_seed"}

SECTIONS = {"measure": MeasureConfig, "run": RunSettings, "output": OutputConfig}

FLOAT_KEYS = {"scale", "beta", "child_fraction", "epsilon", "p_lower", "alpha", "eta", "t", "p", "floor"}
INT_KEYS = {"replicas", "master_seed", "fragment_budget"}
FLOAT_LIST_KEYS = {"eta_schedule", "lambdas", "p_grid", "x_grid"}


def _apply_jinja(contents: str) -> str:
    try:
        template = jinja2.Template(contents)
    except jinja2.TemplateSyntaxError as e:
        raise ConfigParseError(e.message or "template error", e.lineno, 0) from e
    template.globals["dyadic_schedule"] = dyadic_schedule
    template.globals["log_schedule"] = log_schedule
    template.globals["golden_ratio"] = (1.0 + math.sqrt(5.0)) / 2.0
    template.globals["ln"] = math.log
    try:
        return template.render()
    except jinja2.TemplateError as e:
        raise ConfigParseError(str(e)) from e


def _to_float(key: str, value: Any) -> float:
    # PyYAML reads exponents without a dot ("1e-3") as strings
    if isinstance(value, bool):
        raise ConfigValidationError(key, f"expected a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigValidationError(key, f"expected a number, got {value!r}") from None


def _to_int(key: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise ConfigValidationError(key, f"expected an integer, got {value!r}")
    try:
        return int(value)
    except ValueError:
        raise ConfigValidationError(key, f"expected an integer, got {value!r}") from None


def _check_deprecated_config(full: Dict[str, Any]) -> None:
    for dotted, replacement in deprecated_configs.items():
        section, key = dotted.split(".")
        if isinstance(full.get(section), dict) and key in full[section]:
            err = f"deprecated config \"{dotted}\" found"
            if replacement is not None:
                err += f", please use \"{replacement}\" instead"
            raise ConfigValidationError(dotted, err)


def _convert(section: str, raw: Dict[str, Any]) -> Dict[str, Any]:
    known = SECTIONS[section].__dataclass_fields__
    converted: Dict[str, Any] = {}
    for key, value in raw.items():
        dotted = f"{section}.{key}"
        if key not in known:
            raise ConfigValidationError(dotted, "unknown key")
        if value is None and key in ("p", "p_lower"):
            converted[key] = None
        elif key in FLOAT_KEYS:
            converted[key] = _to_float(dotted, value)
        elif key in INT_KEYS:
            converted[key] = _to_int(dotted, value)
        elif key in FLOAT_LIST_KEYS:
            if not isinstance(value, list):
                raise ConfigValidationError(dotted, f"expected a list, got {value!r}")
            converted[key] = [_to_float(f"{dotted}[{i}]", v) for i, v in enumerate(value)]
        elif key == "atoms":
            converted[key] = _convert_atoms(dotted, value)
        else:
            if not isinstance(value, str):
                raise ConfigValidationError(dotted, f"expected a string, got {value!r}")
            converted[key] = value
    return converted


def _convert_atoms(key: str, value: Any) -> List[List[Any]]:
    if not isinstance(value, list):
        raise ConfigValidationError(key, "expected a list of [rate, [s1, s2, ...]] pairs")
    atoms = []
    for i, atom in enumerate(value):
        if not isinstance(atom, list) or len(atom) != 2 or not isinstance(atom[1], list):
            raise ConfigValidationError(f"{key}[{i}]", f"expected [rate, [s1, s2, ...]], got {atom!r}")
        atoms.append([_to_float(f"{key}[{i}]", atom[0]), [_to_float(f"{key}[{i}]", s) for s in atom[1]]])
    return atoms


def _validate(cfg: RunConfig) -> None:
    m, r, o = cfg.measure, cfg.run, cfg.output
    if m.type not in ("discrete", "binary_density"):
        raise ConfigValidationError("measure.type", f"must be discrete or binary_density, got '{m.type}'")
    if m.type == "discrete" and not m.atoms:
        raise ConfigValidationError("measure.atoms", "a discrete measure needs at least one atom")
    if m.type == "binary_density" and m.density not in dislocation.DENSITIES:
        raise ConfigValidationError("measure.density", f"must be one of {sorted(dislocation.DENSITIES)}, got '{m.density}'")
    if not 0.0 <= m.epsilon < 0.5:
        raise ConfigValidationError("measure.epsilon", f"must be in [0, 1/2), got {m.epsilon}")
    if not r.eta > 0.0:
        raise ConfigValidationError("run.eta", f"must be positive, got {r.eta}")
    if not r.eta_schedule or any(not 0.0 < e <= 1.0 for e in r.eta_schedule):
        raise ConfigValidationError("run.eta_schedule", f"values must lie in (0, 1], got {r.eta_schedule}")
    if any(b >= a for a, b in zip(r.eta_schedule, r.eta_schedule[1:])):
        raise ConfigValidationError("run.eta_schedule", f"must be strictly decreasing, got {r.eta_schedule}")
    if r.replicas < 1:
        raise ConfigValidationError("run.replicas", f"must be at least 1, got {r.replicas}")
    if not 0 <= r.master_seed < 2**64:
        raise ConfigValidationError("run.master_seed", f"must be a 64-bit unsigned integer, got {r.master_seed}")
    if r.fragment_budget < 1:
        raise ConfigValidationError("run.fragment_budget", f"must be at least 1, got {r.fragment_budget}")
    if r.t < 0.0 or r.floor < 0.0:
        raise ConfigValidationError("run.t" if r.t < 0.0 else "run.floor", "must be nonnegative")
    if any(x < 0.0 for x in r.x_grid) or any(b <= a for a, b in zip(r.x_grid, r.x_grid[1:])):
        raise ConfigValidationError("run.x_grid", f"must be nonnegative and increasing, got {r.x_grid}")
    if o.format not in ("csv", "json"):
        raise ConfigValidationError("output.format", f"must be csv or json, got '{o.format}'")
    for i, token in enumerate(cfg.functions):
        try:
            parse_function(token)
        except ValueError as e:
            raise ConfigValidationError(f"functions[{i}]", str(e)) from e


def parse_config(text: str) -> RunConfig:
    """Render the jinja template, parse the YAML, materialize defaults and validate."""
    contents = _apply_jinja(text)
    try:
        full = safe_load(io.StringIO(contents))
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark
        line, column = (mark.line + 1, mark.column + 1) if mark is not None else (0, 0)
        raise ConfigParseError(e.problem or str(e), line, column) from e
    except yaml.YAMLError as e:
        raise ConfigParseError(str(e)) from e

    if not isinstance(full, dict):
        raise ConfigParseError("the run file must be a mapping of sections", 1, 1)
    _check_deprecated_config(full)
    for key in full:
        if key not in SECTIONS and key != "functions":
            raise ConfigValidationError(str(key), "unknown key")
    if "measure" not in full:
        raise ConfigValidationError("measure", "missing section")

    sections: Dict[str, Any] = {}
    for name in SECTIONS:
        raw = full.get(name) or {}
        if not isinstance(raw, dict):
            raise ConfigValidationError(name, "expected a mapping")
        sections[name] = SECTIONS[name](**_convert(name, raw))

    functions = full.get("functions") or []
    if not isinstance(functions, list) or not all(isinstance(f, str) for f in functions):
        raise ConfigValidationError("functions", "expected a list of strings")

    cfg = RunConfig(sections["measure"], sections["run"], sections["output"], list(functions))
    _validate(cfg)
    # builds the measure once so partition errors surface as validation errors
    cfg.build_measure()
    logger.info(f"run configuration: {cfg.to_dict()}")
    return cfg


def load_config(yaml_path: str) -> RunConfig:
    if not os.path.exists(yaml_path):
        raise ConfigValidationError("config", f"could not find config in path: '{yaml_path}'")
    with open(yaml_path, 'r') as f:
        return parse_config(f.read())
