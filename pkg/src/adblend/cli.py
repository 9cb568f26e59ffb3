"""Command-line entry point: simulate / allocate / tune-vb / experiment / pipeline.

Plain files in, plain files out. Every subcommand is deterministic given
its inputs and seed; reports carry no timestamps. Exit codes: 0 success,
2 validation failure, 3 I/O failure. BLEND_SEED overrides the configured
seed for CI sweeps.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .allocator import VirtualBid, optimize_impression
from .core import AD, iter_impression_log, read_impression_log
from .ctr import ListwisePredictor, PointwisePredictor, load_model_config, save_model_config
from .errors import AdBlendError, ConfigError, ValidationError
from .payments import GSP, VCG, gsp_payments, vcg_payments
from .simharness import (
    Epoch,
    SimConfig,
    config_from_dict,
    generate_epoch,
    load_sim_config,
    render_report_text,
    report_to_dict,
    report_to_json,
    run_experiment_suite,
    subcat_revenue_csv,
)
from .simharness.scenarios import SCENARIOS
from .tuner import tune_virtual_bid

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3

_RUN_CONFIG_KEYS = {"schema_version", "sim", "scenarios", "payment_scheme", "tuner"}
_TUNER_KEYS = {"method", "bracket", "tol", "max_iter", "seed", "theta0"}


def _seed_override() -> int | None:
    raw = os.environ.get("BLEND_SEED")
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"BLEND_SEED must be an integer, got {raw!r}") from None


def _apply_seed(config: SimConfig) -> SimConfig:
    seed = _seed_override()
    if seed is None:
        return config
    return dataclasses.replace(config, seed=seed)


def _require_files(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise ValidationError(f"input file does not exist: {p}")


def _default_threads() -> int:
    return os.cpu_count() or 1


def cmd_simulate(args) -> int:
    _require_files(args.config)
    config = _apply_seed(load_sim_config(args.config))
    epoch = generate_epoch(config)
    from .core import write_impression_log

    n = write_impression_log(args.out, epoch.impressions)
    model_out = args.model_out or (str(args.out) + ".model.json")
    save_model_config(model_out, epoch.truth)
    print(f"wrote {n} impressions to {args.out}; model config to {model_out}")
    return EXIT_OK


def _slots_doc(mixed) -> list[dict]:
    return [
        {
            "position": s.position,
            "kind": s.kind,
            "id": s.item.ad_id if s.kind == AD else s.item.item_id,
            "source_index": s.source_index,
        }
        for s in mixed.slots
    ]


def cmd_allocate(args) -> int:
    _require_files(args.log, args.model_config)
    model = load_model_config(args.model_config)
    listwise = ListwisePredictor(model)
    pointwise = PointwisePredictor(model)
    v = VirtualBid(args.v_a)
    n_records = 0
    with open(args.out, "w", encoding="utf-8") as out:
        for imp in iter_impression_log(args.log):
            n_prime = args.n_prime if args.n_prime is not None else imp.n_ads
            result = optimize_impression(imp, listwise, v, n_prime)
            bids = {a.ad_id: a.bid_cpc for a in imp.ads}
            if args.scheme == VCG:
                schedule = vcg_payments(imp, listwise, v, n_prime, allocation=result)
            else:
                pw = pointwise.predict(imp, result.chosen)
                schedule = gsp_payments(result, pw, bids, t=args.t, floor=args.floor)
            record = {
                "impression_id": imp.impression_id,
                "v_a": v.v_a,
                "objective_value": result.objective_value,
                "v_ia": result.v_ia,
                "v_ir": result.v_ir,
                "ad_ctr_sum": result.ad_ctr_sum,
                "org_ctr_sum": result.org_ctr_sum,
                "slots": _slots_doc(result.chosen),
                "payments": [
                    {
                        "ad_id": p.ad_id,
                        "scheme": schedule.scheme,
                        "price_per_click": p.price_per_click,
                        "expected_payment": p.expected_payment,
                    }
                    for p in schedule.payments
                ],
            }
            out.write(json.dumps(record, separators=(",", ":")))
            out.write("\n")
            n_records += 1
    print(f"wrote {n_records} allocation records to {args.out}")
    return EXIT_OK


def cmd_tune_vb(args) -> int:
    _require_files(args.log, args.model_config)
    log = read_impression_log(args.log)
    model = ListwisePredictor(load_model_config(args.model_config))
    bracket = None
    if args.bracket:
        lo, _, hi = args.bracket.partition(",")
        try:
            bracket = (float(lo), float(hi))
        except ValueError:
            raise ValidationError(f"--bracket must be 'lo,hi', got {args.bracket!r}") from None
    seed = _seed_override()
    if seed is None:
        seed = args.seed
    n_prime = args.n_prime if args.n_prime is not None else (log[0].n_ads if log else 1)
    result = tune_virtual_bid(
        log,
        model,
        n_prime,
        method=args.method,
        bracket=bracket,
        tol=args.tol,
        max_iter=args.max_iter,
        seed=seed,
    )
    doc = {
        "v_a": result.v.v_a,
        "distance": result.distance,
        "utopia": {"u_ctr": result.utopia.u_ctr, "u_rev": result.utopia.u_rev},
        "frontier_trace": [
            {
                "v_a": point.v.v_a,
                "mean_ctr": point.mean_ctr,
                "mean_rev": point.mean_rev,
                "distance": dist,
            }
            for point, dist in result.trace
        ],
        "method": args.method,
        "evaluations": len(result.trace),
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"tuned v_a = {result.v.v_a:.6f} (distance {result.distance:.6f}) -> {args.out}")
    return EXIT_OK


def _write_report(report, report_path, csv_path=None) -> None:
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report_to_json(report))
    text_path = str(report_path) + ".txt"
    with open(text_path, "w", encoding="utf-8") as fh:
        fh.write(render_report_text(report))
    if csv_path:
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(subcat_revenue_csv(report))


def cmd_experiment(args) -> int:
    _require_files(args.config, args.log, args.model_config)
    config = _apply_seed(load_sim_config(args.config))
    epoch = None
    if args.log is not None:
        if args.model_config is None:
            raise ValidationError("--log requires --model-config for the ground-truth model")
        impressions = tuple(read_impression_log(args.log))
        truth = load_model_config(args.model_config)
        epoch = Epoch(config=config, impressions=impressions, truth=truth)
    report = run_experiment_suite(
        config, args.scenario, threads=args.threads, scheme=args.scheme, epoch=epoch
    )
    _write_report(report, args.report, args.csv)
    print(render_report_text(report))
    return EXIT_OK


def _load_run_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a JSON object")
    if doc.get("schema_version") != 1:
        raise ConfigError(f"unsupported run config schema_version: {doc.get('schema_version')!r}")
    unknown = set(doc) - _RUN_CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown run config keys: {sorted(unknown)}")
    if "sim" not in doc:
        raise ConfigError("run config needs a 'sim' block")
    tuner_doc = doc.get("tuner", {})
    unknown = set(tuner_doc) - _TUNER_KEYS
    if unknown:
        raise ConfigError(f"unknown tuner keys: {sorted(unknown)}")
    scenarios = doc.get("scenarios", list(SCENARIOS))
    bad = [s for s in scenarios if s not in SCENARIOS]
    if bad:
        raise ConfigError(f"unknown scenarios: {bad}")
    scheme = doc.get("payment_scheme", GSP)
    if scheme not in (GSP, VCG):
        raise ConfigError(f"unknown payment_scheme: {scheme!r}")
    return doc


def cmd_pipeline(args) -> int:
    _require_files(args.config)
    doc = _load_run_config(args.config)
    config = _apply_seed(config_from_dict(doc["sim"]))
    scenarios = doc.get("scenarios", list(SCENARIOS))
    scheme = doc.get("payment_scheme", GSP)
    tuner_doc = doc.get("tuner", {})

    epoch = generate_epoch(config)
    tune_log = epoch.impressions[: min(config.n_tune, len(epoch.impressions))]
    bracket = tuner_doc.get("bracket")
    tuned = tune_virtual_bid(
        tune_log,
        ListwisePredictor(epoch.truth),
        config.n_prime,
        method=tuner_doc.get("method", "golden"),
        bracket=tuple(bracket) if bracket is not None else None,
        tol=float(tuner_doc.get("tol", 1e-3)),
        max_iter=int(tuner_doc.get("max_iter", 80)),
        seed=int(tuner_doc.get("seed", config.seed)),
    )

    combined = {
        "schema_version": 1,
        "tuned": {
            "v_a": tuned.v.v_a,
            "distance": tuned.distance,
            "utopia": {"u_ctr": tuned.utopia.u_ctr, "u_rev": tuned.utopia.u_rev},
        },
        "scenarios": {},
    }
    texts = []
    for scenario in scenarios:
        report = run_experiment_suite(
            config, scenario, threads=args.threads, scheme=scheme, epoch=epoch, tuned=tuned
        )
        combined["scenarios"][scenario] = report_to_dict(report)
        texts.append(render_report_text(report))

    with open(args.report, "w", encoding="utf-8") as fh:
        json.dump(combined, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(str(args.report) + ".txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(texts))
    print("\n".join(texts))
    print(f"pipeline report -> {args.report}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adblend",
        description="Blended ad/organic allocation: simulate, allocate, tune, experiment.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic impression log")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model-out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("allocate", help="optimize each impression in a log and price it")
    p.add_argument("--log", required=True)
    p.add_argument("--model-config", required=True)
    p.add_argument("--v-a", type=float, required=True)
    p.add_argument("--n-prime", type=int, default=None)
    p.add_argument("--scheme", choices=[GSP, VCG], default=GSP)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--floor", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("tune-vb", help="tune the virtual bid on a logged epoch")
    p.add_argument("--log", required=True)
    p.add_argument("--model-config", required=True)
    p.add_argument("--method", choices=["golden", "spsa"], default="golden")
    p.add_argument("--bracket", default=None, help="lo,hi")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-prime", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tune_vb)

    p = sub.add_parser("experiment", help="run one experiment scenario")
    p.add_argument("--scenario", choices=list(SCENARIOS), required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--log", default=None, help="use this log as the epoch instead of generating")
    p.add_argument("--model-config", default=None)
    p.add_argument("--report", required=True)
    p.add_argument("--csv", default=None)
    p.add_argument("--scheme", choices=[GSP, VCG], default=GSP)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("pipeline", help="simulate, tune, and run the experiment suite")
    p.add_argument("--config", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except AdBlendError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
