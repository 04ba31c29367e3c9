"""Scenario files: a flat ``key = value`` format with one section per scenario.

::

    # comment
    [scenario.dong_hopfield]
    n = 3
    rule = dong_hopfield
    nu = 0.1
    gamma = [0.2, 0.4, 0.8]     # a list on a scalar key is a sweep
    W0 = w0_diag.txt            # matrices: file path or inline [[..], [..]]

Vectors are bracketed comma lists. Paths are resolved against the directory
of the config file.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from ._validation import ValidationError
from .dynamics import INPUT_TYPES, SimConfig
from .measures import MeasureId
from .rules import (
    RULE_TYPES,
    AntiHebbian,
    Covariance,
    DongHopfield,
    GradientFlow,
    HadamardHebbian,
    Presynaptic,
    load_matrix,
    make_psd,
)
from .verify import CHECK_NAMES, FAULTS

__all__ = [
    "ConfigError",
    "Scenario",
    "parse_config",
    "load_config",
    "render_scenarios",
    "build_config",
    "config_to_dict",
    "config_digest",
]

INT_KEYS = ("n", "seed", "record_stride", "K_seed", "target_seed")
FLOAT_KEYS = (
    "epsilon",
    "gamma",
    "gamma_mod_amplitude",
    "gamma_mod_frequency",
    "dt",
    "t_end",
    "k",
    "nu",
    "delta",
    "sigma_sq",
    "phi_max",
    "lipschitz",
    "K_scale",
    "target_scale",
    "input_frequency",
    "input_phase",
    "input_t_on",
    "input_t_off",
)
VECTOR_KEYS = ("x0", "b", "input_c", "input_amplitude")
MATRIX_KEYS = ("W0", "K", "target")
CHOICE_KEYS = {
    "rule": tuple(RULE_TYPES),
    "measure": tuple(m.value for m in MeasureId),
    "input": tuple(INPUT_TYPES),
    "fault": FAULTS,
}
BOOL_KEYS = ("normalize_window",)
LIST_KEYS = ("checks",)
KEY_ORDER = (
    ("rule", "n", "measure", "epsilon", "gamma", "gamma_mod_amplitude", "gamma_mod_frequency")
    + ("dt", "t_end", "record_stride", "k", "seed")
    + ("nu", "delta", "sigma_sq", "normalize_window", "b", "phi_max", "lipschitz")
    + ("K", "K_seed", "K_scale", "target", "target_seed", "target_scale")
    + ("input", "input_c", "input_amplitude", "input_frequency", "input_phase", "input_t_on", "input_t_off")
    + ("x0", "W0", "checks", "fault")
)
SWEEPABLE = INT_KEYS + FLOAT_KEYS

# (low, strict) bounds checked at parse time so errors carry a line number
BOUNDS = {
    "n": (1, False),
    "record_stride": (1, False),
    "epsilon": (0.0, True),
    "gamma": (0.0, False),
    "gamma_mod_amplitude": (0.0, False),
    "dt": (0.0, True),
    "t_end": (0.0, True),
    "k": (0.0, True),
    "nu": (0.0, False),
    "delta": (0.0, True),
    "sigma_sq": (0.0, False),
    "phi_max": (0.0, True),
    "lipschitz": (0.0, True),
    "K_scale": (0.0, True),
    "target_scale": (0.0, True),
}

DEFAULTS = {
    "measure": "mu2",
    "epsilon": 0.05,
    "gamma": 1.0,
    "dt": 0.005,
    "t_end": 10.0,
    "record_stride": 1,
    "k": 1.0,
    "seed": 0,
    "input": "zero",
}


class ConfigError(ValidationError):
    """Parse failure carrying ``(line, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(f"line {ln}: {msg}" for ln, msg in self.errors))


@dataclass(eq=False)
class Scenario:
    """A named scenario: raw parameters plus an optional one-key sweep."""

    name: str
    params: dict
    checks_enabled: tuple = None
    sweep: tuple = None
    fault: str = None
    base_dir: str = field(default=".", repr=False)

    @property
    def sim(self):
        return self.runs()[0][2]

    def runs(self):
        """Expanded runs as ``(run_name, sweep_value, SimConfig)`` triples."""
        if self.sweep is None:
            return [(self.name, None, build_config(self.params))]
        key, values = self.sweep
        return [
            (f"{self.name}__{key}={_fmt_scalar(v)}", v, build_config({**self.params, key: v}))
            for v in values
        ]

    def with_sweep(self, key, values):
        key = _sweep_key(key)
        if key not in SWEEPABLE:
            raise ValidationError(f"parameter {key!r} is not a numeric scenario field")
        values = tuple(_coerce_scalar(key, v) for v in values)
        params = {k: v for k, v in self.params.items() if k != key}
        return Scenario(self.name, params, self.checks_enabled, (key, values), self.fault, self.base_dir)

    def with_params(self, **changes):
        return Scenario(
            self.name, {**self.params, **changes}, self.checks_enabled, self.sweep, self.fault, self.base_dir
        )

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        if (self.name, self.checks_enabled, self.sweep, self.fault) != (
            other.name,
            other.checks_enabled,
            other.sweep,
            other.fault,
        ):
            return False
        if set(self.params) != set(other.params):
            return False
        for k, v in self.params.items():
            w = other.params[k]
            if isinstance(v, np.ndarray) or isinstance(w, np.ndarray):
                if not np.array_equal(v, w):
                    return False
            elif v != w:
                return False
        return True


def _sweep_key(path):
    path = path.strip()
    for prefix in ("rule.", "sim.", "input."):
        if path.startswith(prefix):
            path = path[len(prefix):]
    return path


def _coerce_scalar(key, v):
    if key in INT_KEYS:
        if isinstance(v, float) and not v.is_integer():
            raise ValidationError(f"{key} must be an integer, got {v}")
        return int(v)
    v = float(v)
    if not np.isfinite(v):
        raise ValidationError(f"{key} must be finite")
    return v


def _check_bound(key, v):
    if key in BOUNDS:
        low, strict = BOUNDS[key]
        if (strict and not v > low) or (not strict and not v >= low):
            raise ValidationError(f"{key} must be {'>' if strict else '>='} {low}, got {v}")
    if key == "gamma_mod_amplitude" and not v < 1.0:
        raise ValidationError(f"gamma_mod_amplitude must be < 1, got {v}")


def _parse_number(key, text):
    try:
        v = json.loads(text)
    except json.JSONDecodeError:
        raise ValidationError(f"{key}: cannot parse {text!r} as a number")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"{key}: expected a number, got {text!r}")
    return _coerce_scalar(key, v)


def _parse_value(key, text, base_dir):
    """Returns ``(value, sweep_values_or_None)``."""
    if key in INT_KEYS or key in FLOAT_KEYS:
        if text.startswith("["):
            try:
                items = json.loads(text)
            except json.JSONDecodeError:
                raise ValidationError(f"{key}: malformed sweep list {text!r}")
            if not isinstance(items, list) or not items:
                raise ValidationError(f"{key}: sweep list must be non-empty")
            values = []
            for item in items:
                if isinstance(item, bool) or not isinstance(item, (int, float)):
                    raise ValidationError(f"{key}: sweep values must be numbers")
                v = _coerce_scalar(key, item)
                _check_bound(key, v)
                values.append(v)
            return None, tuple(values)
        v = _parse_number(key, text)
        _check_bound(key, v)
        return v, None
    if key in VECTOR_KEYS:
        try:
            items = json.loads(text)
        except json.JSONDecodeError:
            raise ValidationError(f"{key}: malformed vector {text!r}")
        arr = np.asarray(items, dtype=np.float64) if isinstance(items, list) else None
        if arr is None or arr.ndim != 1 or not np.all(np.isfinite(arr)):
            raise ValidationError(f"{key}: expected a bracketed list of numbers")
        return arr, None
    if key in MATRIX_KEYS:
        if text.startswith("["):
            try:
                arr = np.asarray(json.loads(text), dtype=np.float64)
            except (json.JSONDecodeError, ValueError, TypeError):
                raise ValidationError(f"{key}: malformed inline matrix")
        else:
            path = text if os.path.isabs(text) else os.path.join(base_dir, text)
            try:
                arr = load_matrix(path)
            except OSError as exc:
                raise ValidationError(f"{key}: cannot read {text!r} ({exc.strerror})")
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or not np.all(np.isfinite(arr)):
            raise ValidationError(f"{key}: expected a finite square matrix")
        return arr, None
    if key in CHOICE_KEYS:
        choices = CHOICE_KEYS[key]
        if text not in choices:
            raise ValidationError(f"{key}: {text!r} not one of {', '.join(choices)}")
        return text, None
    if key in BOOL_KEYS:
        if text.lower() not in ("true", "false"):
            raise ValidationError(f"{key}: expected true or false")
        return text.lower() == "true", None
    if key in LIST_KEYS:
        names = tuple(s.strip() for s in text.split(",") if s.strip())
        bad = [s for s in names if s not in CHECK_NAMES]
        if bad:
            raise ValidationError(f"{key}: unknown check(s) {', '.join(bad)}")
        return names, None
    raise ValidationError(f"unknown key {key!r}")


def parse_config(text, base_dir="."):
    """Parse scenario text into a list of validated :class:`Scenario`.

    Raises
    ------
    ConfigError
        With every line-anchored problem found.
    """
    errors = []
    sections = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("["):
            if not (line.endswith("]") and line[1:-1].startswith("scenario.")):
                errors.append((lineno, f"malformed section header {line!r}"))
                current = None
                continue
            name = line[len("[scenario."):-1].strip()
            if not name or any(c in name for c in "/\\ "):
                errors.append((lineno, f"invalid scenario name {name!r}"))
            if any(s["name"] == name for s in sections):
                errors.append((lineno, f"duplicate scenario name {name!r}"))
            current = {"name": name, "line": lineno, "params": {}, "lines": {}, "sweep": None, "bad": False}
            sections.append(current)
            continue
        if "=" not in line:
            errors.append((lineno, f"expected 'key = value', got {line!r}"))
            continue
        if current is None:
            errors.append((lineno, "key outside of a [scenario.<name>] section"))
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key in current["lines"]:
            errors.append((lineno, f"duplicate key {key!r}"))
            continue
        current["lines"][key] = lineno
        try:
            v, sweep = _parse_value(key, value, base_dir)
        except ValidationError as exc:
            errors.append((lineno, str(exc)))
            current["bad"] = True
            continue
        if sweep is not None:
            if current["sweep"] is not None:
                errors.append((lineno, "only one swept parameter per scenario"))
                continue
            current["sweep"] = (key, sweep)
        else:
            current["params"][key] = v

    scenarios = []
    for sec in sections:
        if sec["bad"]:
            # the scenario cannot be assembled; its line errors already say why
            continue
        params = dict(sec["params"])
        checks = params.pop("checks", None)
        fault = params.pop("fault", None)
        scenario = Scenario(sec["name"], params, checks, sec["sweep"], fault, base_dir)
        try:
            if "rule" not in params:
                raise ValidationError("missing required key 'rule'")
            if "n" not in params:
                raise ValidationError("missing required key 'n'")
            scenario.runs()
        except ValidationError as exc:
            errors.append((_blame_line(sec, str(exc)), str(exc)))
            continue
        scenarios.append(scenario)
    if errors:
        raise ConfigError(sorted(errors))
    return scenarios


def _blame_line(section, message):
    for key, ln in section["lines"].items():
        if message.startswith((key + " ", key + ":", key + "=")) or f"'{key}'" in message:
            return ln
    return section["line"]


def load_config(path):
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))


def _require(params, key):
    if key not in params:
        raise ValidationError(f"missing required key '{key}' for this rule/input")
    return params[key]


def _build_rule(p):
    name = p["rule"]
    n = p["n"]
    seed = p.get("seed", DEFAULTS["seed"])
    if name == "anti_hebbian":
        return AntiHebbian()
    if name == "hadamard_hebbian":
        K = p.get("K")
        if K is None:
            K = make_psd(p.get("K_seed", seed), n, p.get("K_scale", 1.0))
        return HadamardHebbian(K)
    if name == "dong_hopfield":
        return DongHopfield(_require(p, "nu"))
    if name == "covariance":
        return Covariance(
            _require(p, "nu"), _require(p, "delta"), _require(p, "sigma_sq"), p.get("normalize_window", True)
        )
    if name == "presynaptic":
        return Presynaptic(_require(p, "b"), p.get("phi_max", 1.0))
    if name == "gradient_flow":
        target = p.get("target")
        if target is None:
            rng = np.random.default_rng(p.get("target_seed", seed))
            target = p.get("target_scale", 1.0) * rng.standard_normal((n, n)) / np.sqrt(n)
        return GradientFlow(target, _require(p, "lipschitz"))
    raise ValidationError(f"unknown rule {name!r}")


def _build_input(p):
    kind = p.get("input", DEFAULTS["input"])
    if kind == "zero":
        return INPUT_TYPES["zero"]()
    if kind == "constant":
        return INPUT_TYPES["constant"](_require(p, "input_c"))
    if kind == "sinusoid":
        return INPUT_TYPES["sinusoid"](
            _require(p, "input_amplitude"), _require(p, "input_frequency"), p.get("input_phase", 0.0)
        )
    return INPUT_TYPES["pulse"](_require(p, "input_c"), _require(p, "input_t_on"), _require(p, "input_t_off"))


def build_config(params):
    """Construct a validated :class:`SimConfig` from parsed parameters."""
    p = {**DEFAULTS, **params}
    return SimConfig(
        n=p["n"],
        rule=_build_rule(p),
        epsilon=p["epsilon"],
        gamma=p["gamma"],
        measure_id=p["measure"],
        input=_build_input(p),
        x0=p.get("x0"),
        W0=p.get("W0"),
        dt=p["dt"],
        t_end=p["t_end"],
        seed=p["seed"],
        k_threshold=p["k"],
        record_stride=p["record_stride"],
        gamma_mod_amplitude=p.get("gamma_mod_amplitude", 0.0),
        gamma_mod_frequency=p.get("gamma_mod_frequency", 0.0),
    )


def _fmt_scalar(v):
    return str(v) if isinstance(v, (int, np.integer)) else repr(float(v))


def _fmt_array(a):
    return json.dumps(np.asarray(a).tolist())


def _fmt_value(key, v):
    if key in VECTOR_KEYS or key in MATRIX_KEYS:
        return _fmt_array(v)
    if key in BOOL_KEYS:
        return "true" if v else "false"
    if key in LIST_KEYS:
        return ", ".join(v)
    if key in INT_KEYS or key in FLOAT_KEYS:
        return _fmt_scalar(v)
    return str(v)


def render_scenarios(scenarios):
    """Render scenarios back to config text; matrices are written inline."""
    out = []
    for sc in scenarios:
        out.append(f"[scenario.{sc.name}]")
        items = dict(sc.params)
        if sc.checks_enabled is not None:
            items["checks"] = sc.checks_enabled
        if sc.fault is not None:
            items["fault"] = sc.fault
        for key in KEY_ORDER:
            if sc.sweep is not None and sc.sweep[0] == key:
                out.append(f"{key} = [{', '.join(_fmt_scalar(v) for v in sc.sweep[1])}]")
            elif key in items:
                out.append(f"{key} = {_fmt_value(key, items[key])}")
        out.append("")
    return "\n".join(out)


def _rule_to_dict(rule):
    d = {"name": rule.name}
    for k, v in vars(rule).items():
        d[k] = np.asarray(v).tolist() if isinstance(v, np.ndarray) else v
    return d


def _input_to_dict(spec):
    d = {"kind": spec.kind}
    for k, v in vars(spec).items():
        d[k] = np.asarray(v).tolist() if isinstance(v, np.ndarray) else v
    return d


def config_to_dict(cfg):
    """Canonical JSON-ready description of a :class:`SimConfig`."""
    return {
        "n": cfg.n,
        "rule": _rule_to_dict(cfg.rule),
        "epsilon": cfg.epsilon,
        "gamma": cfg.gamma,
        "gamma_mod_amplitude": cfg.gamma_mod_amplitude,
        "gamma_mod_frequency": cfg.gamma_mod_frequency,
        "measure": cfg.measure_id.value,
        "input": _input_to_dict(cfg.input),
        "x0": None if cfg.x0 is None else cfg.x0.tolist(),
        "W0": None if cfg.W0 is None else cfg.W0.tolist(),
        "dt": cfg.dt,
        "t_end": cfg.t_end,
        "seed": int(cfg.seed),
        "k": cfg.k_threshold,
        "record_stride": cfg.record_stride,
    }


def config_digest(cfg):
    blob = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(blob.encode()).hexdigest()
