"""
Experiment front end.

    python backend/cli.py generate --spec poisson-hsmm --seed 7 --out data/poisson
    python backend/cli.py fit --dataset data/poisson --out runs/poisson --chains 25 --iterations 200
    python backend/cli.py fit --dataset data/poisson --out runs/poisson --gamma 2 --set duration.prior_rate=0.5
    python backend/cli.py eval --traces runs/poisson --truth data/poisson

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

import argparse
import asyncio
import csv
import json
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from blocksampler import SegmentSequence
from chain_runner import ChainRunner
from config import MODELS, RunConfig, apply_overrides, load_settings, worker_count
from durations import DURATION_FAMILIES
from errors import HSMMError, InvalidConfigError
from evaluation import duration_summary, hamming_error, summarize_traces
from genmodel import EXPERIMENTS, load_dataset, make_experiment, write_bundle
from run_manager import RunManager, read_finals, read_traces

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hsmm-npb", description="HDP-HSMM experiments: generate, fit, eval")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    gen = sub.add_parser("generate", help="write a synthetic dataset")
    gen.add_argument("--spec", required=True, help=f"one of: {', '.join(EXPERIMENTS)}")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--sequences", type=int, default=5)
    gen.add_argument("--T", type=int, default=500)

    fit = sub.add_parser("fit", help="run sampler chains on a dataset")
    fit.add_argument("--config", help="JSON settings file merged over the defaults")
    fit.add_argument("--dataset")
    fit.add_argument("--out")
    fit.add_argument("--seed", type=int)
    fit.add_argument("--chains", type=int)
    fit.add_argument("--iterations", type=int)
    fit.add_argument("--model", help=f"one of: {', '.join(MODELS)}")
    fit.add_argument("--duration", help=f"one of: {', '.join(DURATION_FAMILIES)}")
    fit.add_argument("--emission", help="gaussian or mixture")
    fit.add_argument("--L", type=int)
    fit.add_argument("--dmax", type=int)
    fit.add_argument("--gamma", type=float, help="top-level concentration")
    fit.add_argument("--alpha", type=float, help="transition concentration")
    fit.add_argument("--init", choices=["kmeans", "blocks"], help="starting segmentation")
    fit.add_argument("--init-segment-length", type=int, help="block length for --init blocks")
    fit.add_argument("--censoring", action=argparse.BooleanOptionalAction, default=None,
                     help="treat the last segment as right-censored")
    fit.add_argument("--used-state-threshold", type=float)
    fit.add_argument("--sequence", type=int, help="fit every chain to this sequence")
    fit.add_argument("--verbose", action="store_true")
    fit.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="dotted settings override, e.g. observation.niw.dof=5 (value parsed as JSON)")

    ev = sub.add_parser("eval", help="summarize trace files")
    ev.add_argument("--traces", required=True, help="run directory or its traces/ directory")
    ev.add_argument("--truth", help="dataset directory with truth.csv")
    ev.add_argument("--out", help="directory for summary.csv and used_states.csv (default: run directory)")
    ev.add_argument("--threshold", type=float, default=0.0,
                    help="minimum frame share for a state to enter the duration summary")
    return parser


def cmd_generate(args) -> int:
    bundle = make_experiment(args.spec, args.seed, n_sequences=args.sequences, T=args.T)
    out = write_bundle(bundle, args.out)
    print(f"[CLI] Wrote {args.spec} dataset ({len(bundle.sequences)} x {args.T} frames, dim {bundle.dim}) to {out}")
    return EXIT_OK


def parse_set(items: List[str]) -> dict:
    """KEY=VALUE pairs to a dotted-key dict; values are JSON when they parse, strings otherwise."""
    overrides = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            overrides[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[key.strip()] = raw
    return overrides


def fit_config(args) -> RunConfig:
    settings = load_settings(args.config)
    settings = apply_overrides(settings, parse_set(args.set), skip_none=False)
    settings = apply_overrides(settings, {
        "dataset": args.dataset,
        "output": args.out,
        "seed": args.seed,
        "chains": args.chains,
        "iterations": args.iterations,
        "model": args.model,
        "duration.family": args.duration,
        "observation.emission": args.emission,
        "sampler.L": args.L,
        "sampler.d_max": args.dmax,
        "sampler.gamma": args.gamma,
        "sampler.alpha": args.alpha,
        "sampler.init": args.init,
        "sampler.init_segment_length": args.init_segment_length,
        "sampler.censoring": args.censoring,
        "used_state_threshold": args.used_state_threshold,
        "sequence": args.sequence,
        "verbose": True if args.verbose else None,
    })
    config = RunConfig.from_settings(settings)
    if not config.dataset:
        raise InvalidConfigError("no dataset given (--dataset or \"dataset\" in the config)")
    if not config.output:
        raise InvalidConfigError("no output directory given (--out or \"output\" in the config)")
    return config


def cmd_fit(args) -> int:
    config = fit_config(args)
    sequences, truths, meta = load_dataset(config.dataset)
    config.observation.niw.check_dim(sequences[0].shape[1])
    if truths is None:
        print("[FIT] [WARN] dataset has no truth.csv; Hamming errors will not be traced")
    manager = RunManager(config.output)
    manager.save_config(config.to_settings())
    runner = ChainRunner(config, sequences, truths, manager,
                         workers=min(worker_count(), config.chains))
    results = asyncio.run(runner.run())
    failed = [c for c, r in enumerate(results) if isinstance(r, BaseException)]
    if failed:
        print(f"[FIT] [ERR] {len(failed)} of {config.chains} chain(s) failed: {failed}")
        return EXIT_RUNTIME
    print(f"[FIT] All {config.chains} chain(s) finished; traces in {manager.traces_dir}")
    return EXIT_OK


def _write_csv(path: Path, rows: List[dict], fields: List[str]):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def cmd_eval(args) -> int:
    traces = Path(args.traces)
    run_dir = traces if (traces / "traces").is_dir() else traces.parent
    traces_dir = traces / "traces" if (traces / "traces").is_dir() else traces
    records = read_traces(traces_dir)
    if not records:
        raise FileNotFoundError(f"no trace records under {traces_dir}")
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)

    summary, histogram = summarize_traces(records)
    if summary:
        _write_csv(out / "summary.csv", summary, ["iteration", "chains", "median", "p10", "p90"])
        last = summary[-1]
        print(f"[EVAL] iteration {last['iteration']}: median Hamming {last['median']:.4f} "
              f"(p10 {last['p10']:.4f}, p90 {last['p90']:.4f}) over {last['chains']} chain(s)")
    else:
        print("[EVAL] [WARN] no Hamming errors in the traces; summary.csv not written")
    _write_csv(out / "used_states.csv", histogram, ["used_states", "chains", "frequency"])
    for row in histogram:
        print(f"[EVAL] used_states={row['used_states']}: {row['chains']} chain(s)")

    finals = read_finals(run_dir / "final")
    if finals:
        durations = duration_summary(finals, threshold=args.threshold)
        with open(out / "durations.json", "w", encoding="utf-8") as f:
            json.dump(durations, f, indent=2, sort_keys=True)
        print(f"[EVAL] duration families of used states: {durations['families']}")
        if args.truth:
            _, truths, _ = load_dataset(args.truth)
            if truths is None:
                print(f"[EVAL] [WARN] {args.truth} has no truth.csv; final-sample errors omitted")
            else:
                for state in finals:
                    labels = SegmentSequence.from_dict(state["seg"]).to_frame_labels()
                    err = hamming_error(labels, truths[state.get("sequence", 0)])
                    print(f"[EVAL] chain {state.get('chain')}: final Hamming {err:.4f}")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "fit": cmd_fit, "eval": cmd_eval}


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: generate, fit or eval")
        return COMMANDS[args.command](args)
    except (UsageError, InvalidConfigError) as e:
        print(f"[CLI] [ERR] {e}", file=sys.stderr)
        return EXIT_USAGE
    except (HSMMError, OSError) as e:
        print(f"[CLI] [ERR] {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
