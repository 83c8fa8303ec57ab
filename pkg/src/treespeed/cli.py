"""Command-line interface.

Subcommands:

* ``bounds``        — analytic bounds report from a run configuration;
* ``simulate``      — seeded Monte Carlo campaign: per-replica table plus
                      speed / return-probability / covariance estimators;
* ``verify``        — bounds + campaign + one verdict per check;
* ``paper-example`` — the worked binary-tree example family: pipeline
                      values against exact closed forms.

Reports go to ``--out`` (written atomically, never partially) or stdout.
JSON reports carry a provenance envelope (tool version, sha256 of the
normalized configuration, seed); CSV output is a single RFC-4180 table
(CRLF line endings) with the raw rows.

Exit codes: 0 success; 1 reference mismatch in paper-example; 2 invalid
configuration or flags; 3 the requested bounds are inapplicable for this
environment; 4 a runtime cap was hit (vertex arena or ray step cap).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from fractions import Fraction

import numpy as np

from . import __version__, benchmark, bounds as bounds_mod, mc
from .branching import (build_branching_summary, extinction_probability,
                        offspring_exact_rwre_psi1, zeta_horizon)
from .model import EnvSpec
from .schemas import (campaign_from_config, config_digest,
                      normalize_run_config, spec_from_config,
                      validate_run_config)

_UINT64_MAX = 2 ** 64 - 1

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INVALID = 2
EXIT_INAPPLICABLE = 3
EXIT_RUNTIME_CAP = 4


def _err(msg: str) -> None:
    print(f"treespeed: {msg}", file=sys.stderr)


def _sanitize(obj):
    """JSON-safe deep copy: numpy scalars unwrapped, non-finite floats and
    Fractions stringified, tuples listed."""
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, Fraction):
        return str(obj)
    return obj


def _envelope(kind: str, seed, digest: str, payload: dict) -> dict:
    return {"tool": {"name": "treespeed", "version": __version__},
            "kind": kind, "seed": seed, "config_sha256": digest,
            "payload": _sanitize(payload)}


def _write_text(out: str | None, text: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    tmp = out + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, out)


def _emit_json(out: str | None, envelope: dict) -> None:
    _write_text(out, json.dumps(envelope, indent=2, sort_keys=True) + "\n")


def _csv_text(header: list[str], rows: list[list]) -> str:
    sink = io.StringIO()
    writer = csv.writer(sink, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else
                         (v if isinstance(v, str) else json.dumps(_sanitize(v)))
                         for v in row])
    return sink.getvalue()


def _flat_rows(obj, prefix="") -> list[list]:
    """Flatten nested dicts/lists into dotted key / JSON value rows."""
    rows = []
    if isinstance(obj, dict):
        for k in sorted(obj):
            rows.extend(_flat_rows(obj[k], f"{prefix}.{k}" if prefix else k))
    elif isinstance(obj, list) and obj and isinstance(obj[0], (dict, list)):
        for i, v in enumerate(obj):
            rows.extend(_flat_rows(v, f"{prefix}[{i}]"))
    else:
        rows.append([prefix, obj])
    return rows


def _load_and_validate(path: str) -> dict | None:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        _err(f"cannot read config: {exc}")
        return None
    except json.JSONDecodeError as exc:
        _err(f"config is not valid JSON: {exc}")
        return None
    errors = validate_run_config(raw)
    if errors:
        for line in errors:
            _err(f"config invalid at {line}")
        return None
    return normalize_run_config(raw)


def _apply_overrides(cfg: dict, args) -> bool:
    if getattr(args, "seed", None) is not None:
        if not 0 <= args.seed <= _UINT64_MAX:
            _err("--seed must fit in 64 bits")
            return False
        cfg["seed"] = args.seed
    if getattr(args, "replicas", None) is not None:
        if "campaign" not in cfg:
            _err("--replicas given but the config has no campaign section")
            return False
        if args.replicas < 1:
            _err("--replicas must be >= 1")
            return False
        cfg["campaign"]["replicas"] = args.replicas
    return True


def _build_spec(cfg: dict) -> EnvSpec | None:
    try:
        return spec_from_config(cfg)
    except ValueError as exc:
        _err(f"invalid environment: {exc}")
        return None


def _build_bounds(spec: EnvSpec, cfg: dict) -> bounds_mod.BoundsReport:
    b = cfg["bounds"]
    return bounds_mod.build_bounds_report(
        spec, psi=cfg["psi"], eps=b["eps"], psi_max=cfg["psi_max"],
        offspring_samples=b["offspring_samples"], seed=cfg["seed"],
        geom_cap=b["geom_cap"], enum_cap=b["enum_cap"],
        ray_step_cap=b["ray_step_cap"])


def cmd_bounds(args) -> int:
    cfg = _load_and_validate(args.config)
    if cfg is None or not _apply_overrides(cfg, args):
        return EXIT_INVALID
    spec = _build_spec(cfg)
    if spec is None:
        return EXIT_INVALID
    report = _build_bounds(spec, cfg)
    envelope = _envelope("bounds", cfg["seed"], config_digest(cfg),
                         report.to_dict())
    if args.format == "csv":
        rows = _flat_rows(envelope)
        _write_text(args.out, _csv_text(["key", "value"], rows))
    else:
        _emit_json(args.out, envelope)
    offspring = report.branching.offspring
    if offspring is not None and offspring.ray_cap_hits:
        return EXIT_RUNTIME_CAP
    if not report.speed_lower.applicable:
        return EXIT_INAPPLICABLE
    return EXIT_OK


def _replica_row(r: mc.ReplicaStats) -> dict:
    return {"replica": r.replica, "status": r.status,
            "final_step": r.final_step, "final_level": r.final_level,
            "speed": r.speed, "max_level_reached": r.max_level_reached,
            "l_root": r.l_root, "distinct": r.distinct,
            "first_return_step": r.first_return_step,
            "max_level_before_return": r.max_level_before_return,
            "n_vertices": r.n_vertices, "n_blocks": len(r.blocks),
            "censor_fraction": r.censor_fraction,
            "pi_to_tau1": r.pi_to_tau1}


def _simulate_payload(result: mc.CampaignResult) -> dict:
    return {"env": result.spec.to_dict(),
            "campaign": result.config.to_dict(),
            "transience": result.transience_verdict,
            "replicas": [_replica_row(r) for r in result.replicas],
            "speed": mc.estimate_speed(result),
            "return_probability": mc.estimate_beta(result),
            "root_visits": mc.estimate_root_visits(result),
            "covariance": mc.estimate_covariance(result)}


_REPLICA_COLUMNS = ["replica", "status", "final_step", "final_level",
                    "speed", "max_level_reached", "l_root", "distinct",
                    "first_return_step", "max_level_before_return",
                    "n_vertices", "n_blocks", "censor_fraction",
                    "pi_to_tau1"]


def _write_simulate_csv(args, result: mc.CampaignResult) -> None:
    rows = [[_replica_row(r)[c] for c in _REPLICA_COLUMNS]
            for r in result.replicas]
    _write_text(args.out, _csv_text(_REPLICA_COLUMNS, rows))
    if args.out is None:
        return
    stem, _ = os.path.splitext(args.out)
    block_header = ["replica", "block_index", "ell_prev", "ell_next",
                    "tau_prev", "tau_next", "delta_ell", "delta_tau",
                    "censored"]
    block_rows = []
    for r in result.replicas:
        for i, blk in enumerate(r.blocks):
            block_rows.append([r.replica, i, blk.ell_prev, blk.ell_next,
                               blk.tau_prev, blk.tau_next, blk.delta_ell,
                               blk.delta_tau, int(blk.censored)])
    _write_text(stem + ".blocks.csv", _csv_text(block_header, block_rows))


def cmd_simulate(args) -> int:
    cfg = _load_and_validate(args.config)
    if cfg is None or not _apply_overrides(cfg, args):
        return EXIT_INVALID
    if "campaign" not in cfg:
        _err("simulate needs a campaign section in the config")
        return EXIT_INVALID
    spec = _build_spec(cfg)
    if spec is None:
        return EXIT_INVALID
    result = mc.run_campaign(spec, campaign_from_config(cfg))
    if args.format == "csv":
        _write_simulate_csv(args, result)
    else:
        _emit_json(args.out, _envelope("simulate", cfg["seed"],
                                       config_digest(cfg),
                                       _simulate_payload(result)))
    if any(r.status == "memory_cap" for r in result.replicas):
        return EXIT_RUNTIME_CAP
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load_and_validate(args.config)
    if cfg is None or not _apply_overrides(cfg, args):
        return EXIT_INVALID
    if "campaign" not in cfg:
        _err("verify needs a campaign section in the config")
        return EXIT_INVALID
    spec = _build_spec(cfg)
    if spec is None:
        return EXIT_INVALID
    report = _build_bounds(spec, cfg)
    verification = mc.verify(spec, campaign_from_config(cfg), bounds=report)
    payload = verification.to_dict()
    payload["bounds"] = report.to_dict()
    if args.format == "csv":
        header = ["name", "verdict", "analytic", "empirical", "interval",
                  "note"]
        rows = [[e["name"], e["verdict"], e.get("analytic"),
                 e.get("empirical"), e.get("interval"), e.get("note")]
                for e in verification.entries]
        _write_text(args.out, _csv_text(header, rows))
    else:
        _emit_json(args.out, _envelope("verify", cfg["seed"],
                                       config_digest(cfg), payload))
    offspring = report.branching.offspring
    if offspring is not None and offspring.ray_cap_hits:
        return EXIT_RUNTIME_CAP
    if not report.speed_lower.applicable:
        return EXIT_INAPPLICABLE
    return EXIT_OK


def _benchmark_payload(kappa: Fraction) -> tuple[dict, bool]:
    ref = benchmark.reference_values(kappa)
    spec = benchmark.benchmark_spec(kappa)
    dist = offspring_exact_rwre_psi1(spec)
    summary = build_branching_summary(spec, psi=1)
    alpha = extinction_probability(dist)
    zeta = zeta_horizon(summary.m_psi)

    pipeline = {"p0": dist.probs[0], "p1": dist.probs[1], "p2": dist.probs[2],
                "m1": summary.m_psi, "alpha1": alpha,
                "env_inverse_moment_2": bounds_mod.env_inverse_moment(spec, 2),
                "env_drift_moment_2": bounds_mod.env_drift_moment(spec, 2)}
    rows = []
    all_ok = True
    for name, value in pipeline.items():
        target = float(ref[name])
        rel = abs(value - target) / abs(target)
        ok = rel < 1e-10
        all_ok &= ok
        rows.append({"name": name, "pipeline": value,
                     "reference": str(ref[name]), "rel_err": rel, "ok": ok})
    zeta_ok = zeta == ref["zeta"]
    all_ok &= zeta_ok
    rows.append({"name": "zeta", "pipeline": zeta,
                 "reference": str(ref["zeta"]), "rel_err": None,
                 "ok": zeta_ok})

    speed = bounds_mod.speed_lower_bound(spec, summary, eps=1)
    window = None
    if kappa == benchmark.SPEED_WINDOW_KAPPA:
        lo, hi = benchmark.SPEED_WINDOW
        ok = speed.applicable and lo <= speed.value <= hi
        all_ok &= ok
        window = {"low": lo, "high": hi, "ok": ok}
    rows.append({"name": "speed_lower_bound", "pipeline": speed.value,
                 "reference": None, "rel_err": None,
                 "ok": window["ok"] if window else None})

    payload = {"kappa": str(kappa), "rows": rows, "speed_window": window,
               "all_ok": all_ok}
    return payload, all_ok


def cmd_paper_example(args) -> int:
    try:
        kappa = benchmark.validate_kappa(Fraction(args.kappa))
    except (ValueError, ZeroDivisionError) as exc:
        _err(f"invalid --kappa: {exc}")
        return EXIT_INVALID
    payload, all_ok = _benchmark_payload(kappa)
    digest_src = {"kappa": str(kappa)}
    envelope = _envelope("benchmark", None, config_digest(digest_src),
                         payload)
    if args.format == "csv":
        header = ["name", "pipeline", "reference", "rel_err", "ok"]
        rows = [[r["name"], r["pipeline"], r["reference"], r["rel_err"],
                 r["ok"]] for r in payload["rows"]]
        _write_text(args.out, _csv_text(header, rows))
    else:
        _emit_json(args.out, envelope)
    return EXIT_OK if all_ok else EXIT_MISMATCH


def _add_common(p: argparse.ArgumentParser, config: bool,
                replicas: bool = False) -> None:
    if config:
        p.add_argument("--config", required=True,
                       help="path to a JSON run configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override the configured seed")
    if replicas:
        p.add_argument("--replicas", type=int, default=None,
                       help="override the configured replica count")
    p.add_argument("--out", default=None,
                   help="output path (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treespeed",
        description="Speed bounds and seeded simulation for biased walks "
                    "on rooted trees")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="analytic bounds report")
    _add_common(p, config=True)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("simulate", help="run a Monte Carlo campaign")
    _add_common(p, config=True, replicas=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify",
                       help="check bounds against a seeded campaign")
    _add_common(p, config=True, replicas=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("paper-example",
                       help="worked binary-tree example with exact "
                            "closed-form references")
    p.add_argument("--kappa", default="1/30",
                   help="mixing weight, a fraction like 1/30 (in (0, 1/2])")
    _add_common(p, config=False)
    p.set_defaults(func=cmd_paper_example)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
