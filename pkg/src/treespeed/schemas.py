"""Run-configuration schema, normalization, and canonical hashing.

A run configuration is one JSON object describing the environment law and
every knob of the bounds pipeline and the simulation campaign.  Unknown
keys are rejected everywhere (typos must not silently change a run), and
reports embed a sha256 over the *normalized* configuration — defaults
filled in, the execution-only ``workers`` knob stripped — so two runs of
the same experiment hash identically regardless of machine parallelism.
"""

from __future__ import annotations

import hashlib
import json

import jsonschema

from .model import EnvSpec

_UINT64_MAX = 2 ** 64 - 1

RUN_CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["env"],
    "properties": {
        "env": {
            "type": "object",
            "additionalProperties": False,
            "required": ["model", "b"],
            "properties": {
                "model": {"enum": ["rwre", "orrw"]},
                "b": {"type": "integer", "minimum": 2, "maximum": 64},
                "coupling": {"enum": ["identical", "iid"]},
                "support": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "array",
                        "minItems": 2,
                        "maxItems": 2,
                        "prefixItems": [
                            {"type": "number", "exclusiveMinimum": 0},
                            {"type": "number", "exclusiveMinimum": 0,
                             "maximum": 1},
                        ],
                    },
                },
                "delta": {"type": "number", "exclusiveMinimum": 0},
            },
            "allOf": [
                {
                    "if": {"properties": {"model": {"const": "rwre"}}},
                    "then": {"required": ["support"]},
                },
                {
                    "if": {"properties": {"model": {"const": "orrw"}}},
                    "then": {"required": ["delta"]},
                },
            ],
        },
        "psi": {
            "oneOf": [
                {"const": "auto"},
                {"type": "integer", "minimum": 1, "maximum": 16},
            ],
        },
        "psi_max": {"type": "integer", "minimum": 1, "maximum": 16},
        "seed": {"type": "integer", "minimum": 0, "maximum": _UINT64_MAX},
        "bounds": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eps": {"type": "integer", "minimum": 1, "maximum": 8},
                "geom_cap": {"type": "integer", "minimum": 4, "maximum": 64},
                "offspring_samples": {"type": "integer", "minimum": 1000,
                                      "maximum": 100000000},
                "enum_cap": {"type": "integer", "minimum": 1,
                             "maximum": 10000000},
                "ray_step_cap": {"type": "integer", "minimum": 100,
                                 "maximum": 1000000000},
            },
        },
        "campaign": {
            "type": "object",
            "additionalProperties": False,
            "required": ["replicas", "max_steps"],
            "properties": {
                "replicas": {"type": "integer", "minimum": 1,
                             "maximum": 1000000},
                "max_steps": {"type": "integer", "minimum": 1,
                              "maximum": 10000000000},
                "max_level": {"type": ["integer", "null"], "minimum": 1},
                "guard": {"type": "integer", "minimum": 1, "maximum": 100000},
                "workers": {"type": "integer", "minimum": 1, "maximum": 256},
                "pi_cap": {"type": "integer", "minimum": 2,
                           "maximum": 1000000},
                "beta_level": {"type": "integer", "minimum": 1},
                "tail_n_max": {"type": "integer", "minimum": 1,
                               "maximum": 64},
                "block_cap": {"type": "integer", "minimum": 1,
                              "maximum": 10000000},
            },
        },
    },
}

REPORT_ENVELOPE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["tool", "kind", "seed", "config_sha256", "payload"],
    "properties": {
        "tool": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name", "version"],
            "properties": {
                "name": {"const": "treespeed"},
                "version": {"type": "string"},
            },
        },
        "kind": {"enum": ["bounds", "simulate", "verify", "benchmark"]},
        "seed": {"type": ["integer", "null"]},
        "config_sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "payload": {"type": "object"},
    },
}

# Reports sanitize non-finite floats into the strings "inf"/"-inf"/"nan"
# (JSON has no spelling for them), so numeric leaves admit those strings.
_QUANTITY = {"type": ["number", "string", "null"]}

_BOUND_ROW = {
    "type": "object",
    "properties": {
        "p": {"type": "integer"},
        "eps": {"type": "integer"},
        "value": _QUANTITY,
        "applicable": {"type": "boolean"},
        "reason": {"type": "string"},
    },
    "required": ["p", "eps", "value", "applicable"],
}

BOUNDS_PAYLOAD_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["env", "transience", "branching", "speed", "root_visits",
                 "tau1_moments", "covariance", "first_regeneration",
                 "pi_moments", "env_moments", "theta", "eps", "notes"],
    "properties": {
        "env": {"type": "object"},
        "transience": {
            "type": "object",
            "required": ["verdict"],
            "properties": {
                "verdict": {"enum": ["transient", "recurrent",
                                     "inapplicable"]},
                "criterion_value": _QUANTITY,
                "argmin_t": _QUANTITY,
                "threshold": _QUANTITY,
                "note": {"type": "string"},
            },
        },
        "branching": {
            "type": "object",
            "required": ["status", "psi", "m_psi", "alpha_psi", "zeta",
                         "gamma", "vartheta"],
            "properties": {
                "status": {"type": "string"},
                "psi": {"type": ["integer", "null"]},
                "m_psi": _QUANTITY,
                "alpha_psi": _QUANTITY,
                "zeta": {"type": ["integer", "null"]},
                "gamma": _QUANTITY,
                "vartheta": _QUANTITY,
            },
        },
        "speed": {
            "type": "object",
            "required": ["lower", "lower_applicable", "upper",
                         "upper_applicable"],
            "properties": {
                "lower": _QUANTITY,
                "lower_applicable": {"type": "boolean"},
                "lower_method": {"type": "string"},
                "lower_reason": {"type": "string"},
                "lower_components": {"type": "object"},
                "upper": _QUANTITY,
                "upper_applicable": {"type": "boolean"},
            },
        },
        "root_visits": {"type": "array", "items": _BOUND_ROW},
        "tau1_moments": {"type": "array", "items": _BOUND_ROW},
        "covariance": {
            "type": "object",
            "required": ["a", "lower", "upper", "applicable"],
            "properties": {
                "a": {"type": ["integer", "null"]},
                "lower": _QUANTITY,
                "upper": _QUANTITY,
                "applicable": {"type": "boolean"},
                "reason": {"type": "string"},
                "components": {"type": "object"},
            },
        },
        "first_regeneration": {
            "type": "object",
            "properties": {
                "tail_base": _QUANTITY,
                "block_level": {"type": ["integer", "null"]},
                "second_moment": _QUANTITY,
            },
        },
        "pi_moments": {"type": "object"},
        "env_moments": {"type": "object"},
        "theta": {"type": "array"},
        "eps": {"type": "integer"},
        "notes": {"type": "array", "items": {"type": "string"}},
    },
}

VERIFICATION_PAYLOAD_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["env", "campaign", "overall", "entries", "notes", "bounds"],
    "properties": {
        "env": {"type": "object"},
        "campaign": {"type": "object"},
        "overall": {"enum": ["pass", "fail", "inconclusive"]},
        "entries": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "verdict"],
                "properties": {
                    "name": {"type": "string"},
                    "verdict": {"enum": ["pass", "fail", "inconclusive",
                                         "inapplicable"]},
                    "note": {"type": "string"},
                },
            },
        },
        "notes": {"type": "array", "items": {"type": "string"}},
        # the verification report embeds the analytic report wholesale
        "bounds": {k: v for k, v in BOUNDS_PAYLOAD_SCHEMA.items()
                   if k != "$schema"},
    },
}


def report_schema(kind: str, payload_schema: dict | None = None) -> dict:
    """The envelope schema specialized to one report kind."""
    out = json.loads(json.dumps(REPORT_ENVELOPE_SCHEMA))
    out["properties"]["kind"] = {"const": kind}
    if payload_schema is not None:
        out["properties"]["payload"] = {
            k: v for k, v in payload_schema.items() if k != "$schema"}
    return out


_DEFAULTS = {
    "psi": "auto",
    "psi_max": 8,
    "seed": 0,
    "bounds": {"eps": 1, "geom_cap": 24, "offspring_samples": 100000,
               "enum_cap": 4096, "ray_step_cap": 10000000},
    "campaign": {"max_level": None, "guard": 32, "workers": 1,
                 "pi_cap": 1024, "beta_level": 64, "tail_n_max": 5,
                 "block_cap": 2048},
}


def validate_run_config(obj) -> list[str]:
    """All schema violations as '<json path>: <message>' strings."""
    validator = jsonschema.Draft202012Validator(RUN_CONFIG_SCHEMA)
    errors = []
    for err in sorted(validator.iter_errors(obj), key=lambda e: e.json_path):
        errors.append(f"{err.json_path}: {err.message}")
    return errors


def normalize_run_config(obj: dict) -> dict:
    """Fill defaults into a schema-valid configuration (input untouched)."""
    cfg = json.loads(json.dumps(obj))  # deep copy, JSON types only
    env = cfg["env"]
    if env["model"] == "rwre":
        env.setdefault("coupling", "identical")
    for key in ("psi", "psi_max", "seed"):
        cfg.setdefault(key, _DEFAULTS[key])
    cfg.setdefault("bounds", {})
    for key, val in _DEFAULTS["bounds"].items():
        cfg["bounds"].setdefault(key, val)
    if "campaign" in cfg:
        for key, val in _DEFAULTS["campaign"].items():
            cfg["campaign"].setdefault(key, val)
    return cfg


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      allow_nan=False)


def config_digest(normalized: dict) -> str:
    """sha256 over the canonical JSON, with execution-only knobs stripped."""
    hashed = json.loads(json.dumps(normalized))
    if "campaign" in hashed:
        hashed["campaign"].pop("workers", None)
    return hashlib.sha256(canonical_json(hashed).encode()).hexdigest()


def spec_from_config(normalized: dict) -> EnvSpec:
    env = normalized["env"]
    if env["model"] == "rwre":
        support = tuple((float(v), float(p)) for v, p in env["support"])
        return EnvSpec(model="rwre", b=env["b"], support=support,
                       coupling=env.get("coupling", "identical"))
    return EnvSpec(model="orrw", b=env["b"], delta=float(env["delta"]))


def campaign_from_config(normalized: dict):
    """Build the campaign settings; raises KeyError if absent."""
    from .mc import CampaignConfig

    c = normalized["campaign"]
    return CampaignConfig(replicas=c["replicas"], max_steps=c["max_steps"],
                          seed=normalized["seed"], max_level=c["max_level"],
                          guard=c["guard"], workers=c["workers"],
                          pi_cap=c["pi_cap"], beta_level=c["beta_level"],
                          tail_n_max=c["tail_n_max"],
                          block_cap=c["block_cap"])
