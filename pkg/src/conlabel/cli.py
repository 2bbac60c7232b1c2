"""``conlabel`` command line.

Exit codes: 0 success, 2 configuration error, 3 stage failure, 4 the
self-training loop stalled.  ``CONLABEL_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import data as D
from .config import load_config
from .dedup import DEFAULT_THRESHOLD
from .exceptions import ConfigError, ConlabelError
from .learner import load_model
from .metrics import evaluate
from .pipeline import (
    S_TR,
    StageError,
    baselines_stage,
    error_code,
    dedup_store,
    run_experiment,
    run_ssl_stage,
    write_json,
)
from .ssl import STALLED, build_concordance
from .synth import SynthSpec, corrupt_pool, generate

EXIT_OK, EXIT_CONFIG, EXIT_STAGE, EXIT_STALLED = 0, 2, 3, 4

logger = logging.getLogger("conlabel")


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def cmd_synth(args) -> int:
    try:
        spec = SynthSpec.from_dict(_read_json(args.spec)) if args.spec else SynthSpec(seed=args.seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    store = generate(spec)
    if args.corrupt:
        store = corrupt_pool(store, args.corrupt, spec.seed)
    D.save_manifest(store, args.out)
    print(f"wrote {len(store)} instances to {args.out}")
    return EXIT_OK


def cmd_dedup(args) -> int:
    images = D.load_manifest(args.input)
    report = dedup_store(images, args.threshold, os.path.dirname(os.path.abspath(args.input)))
    write_json(args.out, report.to_dict())
    print(f"kept {len(report.kept)}, removed {len(report.removed)}")
    return EXIT_OK


def cmd_partition(args) -> int:
    store = D.load_manifest(args.input)
    D.partition_store(store, (args.train, args.val, args.test), args.seed, args.strict)
    D.save_manifest(store, args.out or args.input)
    for name in (D.SEED, D.VALIDATION, D.TEST):
        print(f"{name}: {len(store.pools[name])}")
    return EXIT_OK


def cmd_run_ssl(args) -> int:
    config = load_config(args.config)
    state = run_ssl_stage(config, args.out)
    print(f"{state.status} after {state.iteration} iterations: |S1| = {len(state.s1)}, |S2| = {len(state.s2)}")
    return EXIT_STALLED if state.status == STALLED else EXIT_OK


def cmd_concordance(args) -> int:
    s1_store = D.load_manifest(args.s1)
    s1 = s1_store.pool("S1") or list(s1_store.instances.values())
    s2_store = D.load_manifest(args.s2)
    s2 = s2_store.pool("S2") or list(s2_store.instances.values())
    s_tr = build_concordance(s1, s2, load_model(args.model1), load_model(args.model2))
    D.save_manifest(s1_store.derive(S_TR, s_tr), args.out)
    print(f"|S_tr| = {len(s_tr)}")
    return EXIT_OK


def cmd_baselines(args) -> int:
    config = load_config(args.config)
    report = baselines_stage(config, args.out, args.ssl_dir)
    print(report.format_table())
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    store = D.load_manifest(args.test)
    test = store.pool(args.pool) if args.pool in store.pools else list(store.instances.values())
    report = evaluate(model, store.features(test), D.labels_of(test), store.n_classes)
    write_json(args.out, report.to_dict())
    print(f"accuracy {100 * report.accuracy:.1f}% on {report.n_samples} instances")
    return EXIT_OK


def cmd_run_experiment(args) -> int:
    config = load_config(args.config)
    result = run_experiment(config, args.out)
    print(json.dumps(result.summary, indent=1))
    return EXIT_STALLED if result.summary["status"] == STALLED else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conlabel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic feature manifest")
    p.add_argument("--spec", help="JSON file with synth spec fields")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt", type=float, default=0.0, help="fraction of D_u to replace with boundary noise")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("dedup", help="near-duplicate report for an image manifest")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--threshold", type=int, default=DEFAULT_THRESHOLD)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dedup)

    p = sub.add_parser("partition", help="balanced S_i/V1/T1 split of D_l")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--train", type=int, required=True)
    p.add_argument("--val", type=int, required=True)
    p.add_argument("--test", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strict", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out", help="output manifest (default: overwrite input)")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("run-ssl", help="dual-learner self-training")
    p.add_argument("--config")
    p.add_argument("--out", help="output directory (default: config output_dir)")
    p.set_defaults(func=cmd_run_ssl)

    p = sub.add_parser("concordance", help="build S_tr from S1/S2 and two model snapshots")
    p.add_argument("--s1", required=True)
    p.add_argument("--s2", required=True)
    p.add_argument("--model1", required=True)
    p.add_argument("--model2", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_concordance)

    p = sub.add_parser("baselines", help="lower/mid/upper/ssl comparison on T1")
    p.add_argument("--config")
    p.add_argument("--ssl-dir", help="directory written by run-ssl (default: config output_dir)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baselines)

    p = sub.add_parser("evaluate", help="score a model snapshot on a test manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--pool", default=D.TEST)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run-experiment", help="the whole pipeline end to end")
    p.add_argument("--config", help="JSON config (default: bundled full-scale synthetic config)")
    p.add_argument("--out", help="output directory (default: config output_dir)")
    p.set_defaults(func=cmd_run_experiment)
    return parser


def _fail(stage: str, code: str, message: str, status: int) -> int:
    print(json.dumps({"stage": stage, "code": code, "message": message}), file=sys.stderr)
    return status


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("CONLABEL_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail("config", exc.code, str(exc), EXIT_CONFIG)
    except StageError as exc:
        if exc.code == ConfigError.code:
            return _fail(exc.stage, exc.code, exc.message, EXIT_CONFIG)
        return _fail(exc.stage, exc.code, exc.message, EXIT_STAGE)
    except (ConlabelError, OSError, ValueError, KeyError) as exc:
        return _fail(args.command, error_code(exc), str(exc), EXIT_STAGE)


if __name__ == "__main__":
    sys.exit(main())
