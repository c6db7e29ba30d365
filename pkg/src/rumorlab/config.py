"""Experiment configuration: JSON schema, validation and law construction."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import jsonschema

from .criteria_line import IndexedLawFamily
from .estimator import Scenario
from .laws import (
    BernoulliCount,
    DeterministicCount,
    DeterministicRadius,
    DomainError,
    GeometricCount,
    GeometricRadius,
    InverseTailRadius,
    OffspringLaw,
    PmfTable,
    PowerRadius,
    PowerTailCount,
    RadiusLaw,
    SlowlyVarying,
    StationLaw,
    TailTable,
    ThresholdCount,
    check_standing_assumption,
)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Raised for anything that makes a config unusable; the CLI maps it to exit status 1."""


def _law(kinds: Dict[str, dict]) -> dict:
    return {"oneOf": [
        {"type": "object", "additionalProperties": False, "required": ["kind", *props.get("_required", [])],
         "properties": {"kind": {"const": kind}, **{k: v for k, v in props.items() if k != "_required"}}}
        for kind, props in kinds.items()
    ]}


_NUM = {"type": "number"}
_PROB = {"type": "number", "minimum": 0, "maximum": 1}
_INT = {"type": "integer"}
_VEC = {"type": "array", "items": _PROB, "minItems": 1}

R_LAW = _law({
    "deterministic": {"r": {**_INT, "minimum": 0}, "_required": ["r"]},
    "tail_table": {"tails": _VEC, "_required": ["tails"]},
    "pmf": {"probs": _VEC, "_required": ["probs"]},
    "geometric": {"q": _PROB, "_required": ["q"]},
    "power": {"c": _NUM, "beta": _NUM, "shift": _NUM, "log_power": _NUM, "loglog_power": _NUM,
              "_required": ["beta"]},
    "inverse_tail": {"n_law": {"$ref": "#/$defs/n_law"}, "level": _NUM, "_required": ["n_law"]},
})

N_LAW = _law({
    "deterministic": {"k": {**_INT, "minimum": 0}, "_required": ["k"]},
    "bernoulli": {"p": _PROB, "_required": ["p"]},
    "geometric": {"r": _PROB, "_required": ["r"]},
    "pmf": {"probs": _VEC, "_required": ["probs"]},
    "power_tail": {"alpha": _NUM, "c": _NUM, "log_power": _NUM, "_required": ["alpha"]},
    "threshold": {"r_law": {"$ref": "#/$defs/r_law"}, "eps": _NUM, "delta": _PROB,
                  "_required": ["r_law", "eps", "delta"]},
})

OFFSPRING = _law({
    "deterministic": {"k": {**_INT, "minimum": 0}, "_required": ["k"]},
    "binomial": {"n": {**_INT, "minimum": 0}, "p": _PROB, "_required": ["n", "p"]},
    "poisson": {"lam": _NUM, "_required": ["lam"]},
    "geometric": {"r": _PROB, "_required": ["r"]},
    "two_point": {"m": _NUM, "_required": ["m"]},
    "pmf": {"probs": _VEC, "_required": ["probs"]},
})

FAMILY = {
    "type": "object", "additionalProperties": False, "required": ["kind", "pairs"],
    "properties": {
        "kind": {"const": "periodic"},
        "pairs": {"type": "array", "minItems": 1, "items": {
            "type": "object", "additionalProperties": False, "required": ["n_law", "r_law"],
            "properties": {"n_law": {"$ref": "#/$defs/n_law"}, "r_law": {"$ref": "#/$defs/r_law"}}}},
    },
}

SCENARIO = {
    "type": "object",
    "additionalProperties": False,
    "required": ["id", "graph", "process", "horizon"],
    "properties": {
        "id": {"type": "string", "minLength": 1},
        "graph": {"enum": ["line", "gw-tree"]},
        "process": {"enum": ["firework", "reverse"]},
        "n_law": {"$ref": "#/$defs/n_law"},
        "r_law": {"$ref": "#/$defs/r_law"},
        "family": FAMILY,
        "offspring": OFFSPRING,
        "horizon": {**_INT, "minimum": 1},
        "replicates": {**_INT, "minimum": 1},
        "protocol": {"enum": ["annealed", "quenched", "none"]},
        "env_seed": {**_INT, "minimum": 0},
        "forced_labels": {"type": "array", "items": {"type": "array", "items": _INT, "minItems": 2, "maxItems": 2}},
        "proxy": {"enum": ["tail", "strict"]},
        "engine": {"enum": ["auto", "explicit", "census"]},
        "node_budget": {**_INT, "minimum": 1},
        "expected": {"enum": ["ExtinctionAS", "SurvivalPositive", "SurvivalAS", "Inconclusive"]},
        "cell": {"type": "string"},
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "scenarios"],
    "$defs": {"n_law": N_LAW, "r_law": R_LAW},
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "master_seed": {**_INT, "minimum": 0},
        "confidence": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "replicates": {**_INT, "minimum": 1},
        "protocol": {"enum": ["annealed", "quenched", "none"]},
        "extinction_ceiling": _PROB,
        "scenarios": {"type": "array", "items": SCENARIO},
        "sweep": {
            "type": "object", "additionalProperties": False, "required": ["axis", "values"],
            "properties": {"axis": {"type": "string"}, "values": {"type": "array", "items": _NUM, "minItems": 1},
                           "column": {"type": "string"}},
        },
        "outputs": {
            "type": "object", "additionalProperties": False,
            "properties": {"csv": {"type": "string"}, "json": {"type": "string"}, "plot": {"type": "string"}},
        },
    },
}


# ---------------------------------------------------------------------------
# law builders


def build_radius_law(spec: dict) -> RadiusLaw:
    kind = spec["kind"]
    if kind == "deterministic":
        return DeterministicRadius(spec["r"])
    if kind == "tail_table":
        return TailTable(spec["tails"])
    if kind == "pmf":
        return TailTable.from_pmf(spec["probs"])
    if kind == "geometric":
        return GeometricRadius(spec["q"])
    if kind == "power":
        return PowerRadius(spec.get("c", 1.0), spec["beta"], spec.get("shift", 0.0),
                           spec.get("log_power", 0.0), spec.get("loglog_power", 0.0))
    if kind == "inverse_tail":
        return InverseTailRadius(build_station_law(spec["n_law"]), spec.get("level", 2.0))
    raise ConfigError(f"unknown radius law {kind!r}")


def build_station_law(spec: dict) -> StationLaw:
    kind = spec["kind"]
    if kind == "deterministic":
        return DeterministicCount(spec["k"])
    if kind == "bernoulli":
        return BernoulliCount(spec["p"])
    if kind == "geometric":
        return GeometricCount(spec["r"])
    if kind == "pmf":
        return PmfTable(spec["probs"])
    if kind == "power_tail":
        return PowerTailCount(spec["alpha"], SlowlyVarying(spec.get("c", 1.0), spec.get("log_power", 0.0)))
    if kind == "threshold":
        return ThresholdCount(build_radius_law(spec["r_law"]), spec["eps"], spec["delta"])
    raise ConfigError(f"unknown station law {kind!r}")


def build_offspring(spec: dict) -> OffspringLaw:
    kind = spec["kind"]
    if kind == "deterministic":
        return OffspringLaw.deterministic(spec["k"])
    if kind == "binomial":
        return OffspringLaw.binomial(spec["n"], spec["p"])
    if kind == "poisson":
        return OffspringLaw.poisson(spec["lam"])
    if kind == "geometric":
        return OffspringLaw.geometric(spec["r"])
    if kind == "two_point":
        return OffspringLaw.two_point(spec["m"])
    if kind == "pmf":
        return OffspringLaw(spec["probs"])
    raise ConfigError(f"unknown offspring law {kind!r}")


# ---------------------------------------------------------------------------
# parsed config


@dataclass
class ScenarioEntry:
    raw: dict
    scenario: Scenario
    horizon: int
    replicates: int
    protocol: str
    env_seed: Optional[int]
    expected: Optional[str]
    cell: str

    @property
    def id(self) -> str:
        return self.raw["id"]


@dataclass
class ExperimentConfig:
    raw: dict
    entries: List[ScenarioEntry]
    master_seed: int
    confidence: float
    extinction_ceiling: float
    outputs: Dict[str, str]
    sweep: Optional[dict]


def validate(raw: Any) -> None:
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema violation at {where}: {exc.message}") from None


def _scenario(item: dict, defaults: dict) -> ScenarioEntry:
    sid = item["id"]
    try:
        if "family" in item:
            if "n_law" in item or "r_law" in item:
                raise ConfigError(f"{sid}: give either a family or n_law/r_law, not both")
            pairs = [(build_station_law(p["n_law"]), build_radius_law(p["r_law"])) for p in item["family"]["pairs"]]
            for nl, rl in pairs:
                check_standing_assumption(nl, rl)
            nlaw, rlaw = IndexedLawFamily.periodic(pairs), None
        else:
            if "n_law" not in item or "r_law" not in item:
                raise ConfigError(f"{sid}: n_law and r_law are required")
            nlaw, rlaw = build_station_law(item["n_law"]), build_radius_law(item["r_law"])
            check_standing_assumption(nlaw, rlaw)
        offspring = build_offspring(item["offspring"]) if "offspring" in item else None
        sc = Scenario(item["graph"], item["process"], nlaw, rlaw, offspring, name=sid,
                      forced_labels=tuple(tuple(p) for p in item.get("forced_labels", ())),
                      proxy=item.get("proxy", "tail"), node_budget=item.get("node_budget", 10**6),
                      engine=item.get("engine", "auto"))
    except ConfigError:
        raise
    except (DomainError, ValueError) as exc:
        raise ConfigError(f"{sid}: {exc}") from None
    protocol = item.get("protocol", defaults["protocol"])
    env_seed = item.get("env_seed")
    if protocol == "quenched" and env_seed is None:
        raise ConfigError(f"{sid}: the quenched protocol needs env_seed")
    return ScenarioEntry(item, sc, item["horizon"], item.get("replicates", defaults["replicates"]), protocol,
                         env_seed, item.get("expected"), item.get("cell", ""))


def parse_config(raw: dict) -> ExperimentConfig:
    validate(raw)
    defaults = {"protocol": raw.get("protocol", "annealed"), "replicates": raw.get("replicates", 1000)}
    ids = [s["id"] for s in raw["scenarios"]]
    if len(set(ids)) != len(ids):
        raise ConfigError("scenario ids must be unique")
    entries = [_scenario(s, defaults) for s in raw["scenarios"]]
    return ExperimentConfig(raw, entries, raw.get("master_seed", 0), raw.get("confidence", 0.95),
                            raw.get("extinction_ceiling", 0.05), raw.get("outputs", {}), raw.get("sweep"))


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_config(raw)


def with_override(raw: dict, axis: str, value: float) -> dict:
    """Copy of the config with `axis` (a dotted path inside every scenario) set to value."""
    out = copy.deepcopy(raw)
    keys = axis.split(".")
    if not keys or not all(keys):
        raise ConfigError(f"bad sweep axis {axis!r}")
    for sc in out["scenarios"]:
        node = sc
        for k in keys[:-1]:
            if not isinstance(node, dict) or k not in node:
                raise ConfigError(f"sweep axis {axis!r} not present in scenario {sc['id']}")
            node = node[k]
        if not isinstance(node, dict) or keys[-1] not in node:
            raise ConfigError(f"sweep axis {axis!r} not present in scenario {sc['id']}")
        if not isinstance(node[keys[-1]], (int, float)) or isinstance(node[keys[-1]], bool):
            raise ConfigError(f"sweep axis {axis!r} is not numeric")
        node[keys[-1]] = int(value) if isinstance(node[keys[-1]], int) and float(value).is_integer() else value
    return out


def scenario_ids(cfg: ExperimentConfig) -> Tuple[str, ...]:
    return tuple(e.id for e in cfg.entries)
