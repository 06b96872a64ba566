"""
Run configuration: JSON files with a versioned schema, checked against a per-case table
of required keys, with defaults taken from the environment (.env supported).
"""
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from dotenv import load_dotenv

from constructors import CASES, SignChoice
from exprdsl import Expr, ParseError, UnknownIdentifierError, parse
from invariants import FAMILIES, FIELD_NAMES, AmbientSpec, Tolerances

load_dotenv()

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_N = 129
SYSTEM_SOURCES = ("expression", "goursat")
EXPECT_KEYS = ("k_equals_L0", "normal_flat", "q_status", "q_zero_or_null", "lift_plus", "lift_minus")


def env_out_dir() -> str:
    return os.getenv("ZMC_OUT_DIR", "out")


def env_log_level() -> str:
    return os.getenv("ZMC_LOG_LEVEL", "WARNING")


def env_db_path(out_dir: Union[str, Path]) -> Path:
    value = os.getenv("ZMC_DB_PATH")
    return Path(value) if value else Path(out_dir) / "runs.db"


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.message = message


# Free functions of every case. "x" marks a function of one variable, "surface" a function
# over (u, v) or (s, t).
CASE_SCHEMAS = {
    "case_i": {
        "type": "object",
        "description": "Shape operator of a light-like normal field vanishes; K = L0.",
        "family": "neutral",
        "lambda_sources": ("expression", "liouville"),
        "properties": {
            "gamma": {"type": "surface", "description": "Gauge γ; μ1 = γ_u, μ2 = γ_v"},
            "p_plus": {"type": "x", "description": "p+ evaluated at u + v"},
            "p_minus": {"type": "x", "description": "p- evaluated at u - v"},
        },
        "required": ["gamma", "p_plus", "p_minus"],
        "constants": [],
    },
    "case_ii": {
        "type": "object",
        "description": "Shape operator of every normal field is zero or light-like; K = L0.",
        "family": "neutral",
        "lambda_sources": ("expression", "liouville"),
        "properties": {
            "gamma": {"type": "surface", "description": "Gauge γ; μ1 = γ_u, μ2 = γ_v"},
            "phi": {"type": "x", "description": "φ evaluated at u + εv"},
            "psi": {"type": "x", "description": "ψ evaluated at u + εv"},
        },
        "required": ["gamma", "phi", "psi"],
        "constants": [],
    },
    "flat_normal": {
        "type": "object",
        "description": "Flat normal connection with K ≠ L0.",
        "family": "neutral",
        "lambda_sources": ("expression", "goursat"),
        "properties": {
            "P_plus": {"type": "surface", "description": "Free gauge P+"},
        },
        "required": ["P_plus"],
        "constants": ["c"],
    },
    "one_lift": {
        "type": "object",
        "description": "Exactly one twistor lift has zero or light-like derivative.",
        "family": "neutral",
        "lambda_sources": (),
        "properties": {
            "P_tilde_minus": {"type": "surface", "description": "Free gauge P̃-"},
        },
        "required": ["P_tilde_minus"],
        "constants": [],
    },
    "lorentzian": {
        "type": "object",
        "description": "Zero mean curvature surfaces in a Lorentzian space form.",
        "family": "lorentzian",
        "lambda_sources": ("expression", "liouville"),
        "properties": {
            "gamma": {"type": "surface", "description": "Gauge γ; μ1 = γ_u, μ2 = γ_v"},
            "C": {"type": "x", "description": "C evaluated at u + εv"},
        },
        "required": ["gamma", "C"],
        "constants": [],
    },
}


def parse_surface(text: str, path: str) -> Expr:
    """A function over (u, v), or over (s, t) when it mentions characteristic coordinates."""
    try:
        return parse(text, ("u", "v"))
    except UnknownIdentifierError:
        pass
    except ParseError as exc:
        raise ConfigError(path, f"{exc} (offset {exc.offset})") from exc
    try:
        return parse(text, ("s", "t"))
    except ParseError as exc:
        raise ConfigError(path, f"{exc} (offset {exc.offset})") from exc


def parse_function(text: str, path: str, variable: str = "x") -> Expr:
    try:
        return parse(text, (variable,))
    except ParseError as exc:
        raise ConfigError(path, f"{exc} (offset {exc.offset})") from exc


@dataclass
class Domain:
    u_range: Tuple[float, float] = (0.0, 1.0)
    v_range: Tuple[float, float] = (0.0, 1.0)
    n: int = DEFAULT_N


@dataclass
class Pipeline:
    integrate_frame: bool = True
    export: bool = True
    reproject: bool = False


@dataclass
class Perturbation:
    name: str
    delta: float


@dataclass
class RunConfig:
    case: str
    ambient: AmbientSpec
    signs: SignChoice
    domain: Domain
    source: Dict[str, Any]
    functions: Dict[str, Expr]
    constants: Dict[str, float]
    tolerances: Tolerances
    pipeline: Pipeline
    out_dir: Path
    perturb: Optional[Perturbation] = None
    expect: Dict[str, Any] = field(default_factory=dict)
    raw: Dict[str, Any] = field(default_factory=dict)

    def with_grid(self, n: int) -> "RunConfig":
        self.domain = Domain(self.domain.u_range, self.domain.v_range, int(n))
        self.raw.setdefault("domain", {})["n"] = int(n)
        return self

    def with_tolerance(self, tol: float) -> "RunConfig":
        self.tolerances.verdict = float(tol)
        self.raw.setdefault("tolerances", {})["verdict"] = float(tol)
        return self

    def with_out_dir(self, out_dir: Union[str, Path]) -> "RunConfig":
        self.out_dir = Path(out_dir)
        self.raw["out"] = str(out_dir)
        return self


# =============================
# Validation helpers
# =============================

def _object(raw: Dict[str, Any], key: str, path: Optional[str] = None) -> Dict[str, Any]:
    value = raw.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(path or key, "must be an object")
    return value


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"must be a number, got {value!r}")
    return float(value)


def _string(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise ConfigError(path, f"must be a string, got {value!r}")
    return value


def _range(value: Any, path: str) -> Tuple[float, float]:
    if not isinstance(value, list) or len(value) != 2:
        raise ConfigError(path, "must be a [min, max] pair")
    lo, hi = _number(value[0], f"{path}[0]"), _number(value[1], f"{path}[1]")
    if not hi > lo:
        raise ConfigError(path, "max must exceed min")
    return lo, hi


def _ambient(raw: Dict[str, Any], case: str) -> AmbientSpec:
    block = _object(raw, "ambient")
    family = block.get("family", CASE_SCHEMAS[case]["family"])
    if family not in FAMILIES:
        raise ConfigError("ambient.family", f"must be one of {list(FAMILIES)}, got {family!r}")
    if family != CASE_SCHEMAS[case]["family"]:
        raise ConfigError("ambient.family", f"case '{case}' needs a {CASE_SCHEMAS[case]['family']} ambient")
    if "L0" not in block:
        raise ConfigError("ambient.L0", "required")
    return AmbientSpec(family, _number(block["L0"], "ambient.L0"))


def _signs(raw: Dict[str, Any]) -> SignChoice:
    block = _object(raw, "signs")
    values = {}
    for name in ("epsilon", "eps_prime_plus", "eps_prime_minus", "eps_prime", "eps_double_prime"):
        if name in block:
            value = block[name]
            if value not in (1, -1) or isinstance(value, bool):
                raise ConfigError(f"signs.{name}", f"must be +1 or -1, got {value!r}")
            values[name] = int(value)
    unknown = set(block) - set(SignChoice.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"signs.{sorted(unknown)[0]}", "unknown sign")
    return SignChoice(**values)


def _domain(raw: Dict[str, Any]) -> Domain:
    block = _object(raw, "domain")
    domain = Domain()
    if "u" in block:
        domain.u_range = _range(block["u"], "domain.u")
    if "v" in block:
        domain.v_range = _range(block["v"], "domain.v")
    if "n" in block:
        n = block["n"]
        if isinstance(n, bool) or not isinstance(n, int) or n < 5:
            raise ConfigError("domain.n", f"must be an integer >= 5, got {n!r}")
        domain.n = n
    return domain


def _boundary(block: Dict[str, Any], path: str) -> Tuple[Expr, Expr]:
    if "along_s" not in block or "along_t" not in block:
        raise ConfigError(path, "Goursat data need 'along_s' and 'along_t'")
    along_s = parse_function(_string(block["along_s"], f"{path}.along_s"), f"{path}.along_s", "s")
    along_t = parse_function(_string(block["along_t"], f"{path}.along_t"), f"{path}.along_t", "t")
    return along_s, along_t


def _lambda_source(raw: Dict[str, Any], case: str) -> Dict[str, Any]:
    allowed = CASE_SCHEMAS[case]["lambda_sources"]
    block = _object(raw, "lambda")
    source = block.get("source", "expression")
    if source not in allowed:
        raise ConfigError("lambda.source", f"case '{case}' accepts {list(allowed)}, got {source!r}")
    if source == "expression":
        text = _string(block.get("expr", "0"), "lambda.expr")
        return {"source": source, "expr": parse_surface(text, "lambda.expr")}
    if source == "liouville":
        for key in ("p", "q"):
            if key not in block:
                raise ConfigError(f"lambda.{key}", "required for a Liouville conformal factor")
        return {"source": source,
                "p": parse_function(_string(block["p"], "lambda.p"), "lambda.p"),
                "q": parse_function(_string(block["q"], "lambda.q"), "lambda.q")}
    return {"source": source, "boundary": _boundary(block, "lambda")}


def _system_source(raw: Dict[str, Any]) -> Dict[str, Any]:
    if "system" not in raw:
        raise ConfigError("system", "case 'one_lift' needs an (f1, f2) source")
    block = _object(raw, "system")
    source = block.get("source", "expression")
    if source not in SYSTEM_SOURCES:
        raise ConfigError("system.source", f"must be one of {list(SYSTEM_SOURCES)}, got {source!r}")
    out = {"source": source}
    for name in ("f1", "f2"):
        if name not in block:
            raise ConfigError(f"system.{name}", "required")
        if source == "expression":
            out[name] = parse_surface(_string(block[name], f"system.{name}"), f"system.{name}")
        else:
            out[name] = _boundary(_object(block, name, f"system.{name}"), f"system.{name}")
    return out


def _functions(raw: Dict[str, Any], case: str) -> Dict[str, Expr]:
    schema = CASE_SCHEMAS[case]
    block = _object(raw, "functions")
    missing = [name for name in schema["required"] if name not in block]
    if missing:
        raise ConfigError(f"functions.{missing[0]}", f"required for case '{case}'")
    out = {}
    for name, text in block.items():
        path = f"functions.{name}"
        if name not in schema["properties"]:
            raise ConfigError(path, f"not a free function of case '{case}'")
        text = _string(text, path)
        if schema["properties"][name]["type"] == "x":
            out[name] = parse_function(text, path)
        else:
            out[name] = parse_surface(text, path)
    return out


def _constants(raw: Dict[str, Any], case: str) -> Dict[str, float]:
    block = _object(raw, "constants")
    out = {name: 0.0 for name in CASE_SCHEMAS[case]["constants"]}
    for name, value in block.items():
        if name not in out:
            raise ConfigError(f"constants.{name}", f"not a constant of case '{case}'")
        out[name] = _number(value, f"constants.{name}")
    return out


def _tolerances(raw: Dict[str, Any]) -> Tolerances:
    block = _object(raw, "tolerances")
    tol = Tolerances()
    for name in ("eps_zero", "eps_null", "verdict", "precondition"):
        if name in block:
            value = _number(block[name], f"tolerances.{name}")
            if value <= 0:
                raise ConfigError(f"tolerances.{name}", "must be positive")
            setattr(tol, name, value)
    if "margin" in block:
        margin = block["margin"]
        if isinstance(margin, bool) or not isinstance(margin, int) or margin < 0:
            raise ConfigError("tolerances.margin", f"must be a non-negative integer, got {margin!r}")
        tol.margin = margin
    return tol


def _pipeline(raw: Dict[str, Any]) -> Pipeline:
    block = _object(raw, "pipeline")
    pipe = Pipeline()
    for name in ("integrate_frame", "export", "reproject"):
        if name in block:
            if not isinstance(block[name], bool):
                raise ConfigError(f"pipeline.{name}", "must be true or false")
            setattr(pipe, name, block[name])
    return pipe


def _perturb(raw: Dict[str, Any]) -> Optional[Perturbation]:
    if raw.get("perturb") is None:
        return None
    block = _object(raw, "perturb")
    name = block.get("field")
    if name not in FIELD_NAMES:
        raise ConfigError("perturb.field", f"must be one of {list(FIELD_NAMES)}, got {name!r}")
    return Perturbation(name, _number(block.get("delta", 0.1), "perturb.delta"))


def _expect(raw: Dict[str, Any]) -> Dict[str, Any]:
    block = _object(raw, "expect")
    unknown = set(block) - set(EXPECT_KEYS)
    if unknown:
        raise ConfigError(f"expect.{sorted(unknown)[0]}", f"must be one of {list(EXPECT_KEYS)}")
    return dict(block)


# =============================
# Entry points
# =============================

def validate(raw: Dict[str, Any]) -> RunConfig:
    """Check a decoded config document and turn it into a RunConfig."""
    if not isinstance(raw, dict):
        raise ConfigError("", "config must be a JSON object")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"must be {SCHEMA_VERSION}, got {version!r}")
    case = raw.get("case")
    if case not in CASES:
        raise ConfigError("case", f"must be one of {list(CASES)}, got {case!r}")

    if case == "one_lift":
        source = _system_source(raw)
    else:
        source = _lambda_source(raw, case)

    out_dir = Path(_string(raw.get("out", env_out_dir()), "out"))

    try:
        ambient = _ambient(raw, case)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("ambient", str(exc)) from exc

    config = RunConfig(
        case=case,
        ambient=ambient,
        signs=_signs(raw),
        domain=_domain(raw),
        source=source,
        functions=_functions(raw, case),
        constants=_constants(raw, case),
        tolerances=_tolerances(raw),
        pipeline=_pipeline(raw),
        out_dir=out_dir,
        perturb=_perturb(raw),
        expect=_expect(raw),
        raw=json.loads(json.dumps(raw)),
    )
    logger.debug("validated config for case %s", case)
    return config


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        with path.open() as handle:
            raw = json.load(handle)
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path} is not valid JSON (line {exc.lineno}, column {exc.colno})") from exc
    return validate(raw)
