"""Command line entry point: ``kvfunnel {allocate,run,bench,analyze,sweep}``.

Exit codes: 0 success, 1 usage or spec error, 2 runtime failure.
"""

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

from ..analysis import compare_vs_full, layer_stats, memory_account
from ..errors import ConfigError, KVFunnelError
from ..io import dump_attention, load_weights, read_token_file
from ..model import generate_weights, prefill, random_tokens
from ..policies import schedule_for
from . import results
from .config import load_spec

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", metavar="PATH", default=argparse.SUPPRESS, help="run spec file")
    common.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--workers", type=int, metavar="N", default=argparse.SUPPRESS,
                        help="concurrent grid cells")
    common.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS,
                        help="result file format")

    parser = _Parser(prog="kvfunnel", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("allocate", parents=[common], help="print the per-layer budget schedule")
    sub.add_parser("run", parents=[common], help="one policy against FullKV")
    sub.add_parser("bench", parents=[common], help="policy x budget x seed grid")
    sub.add_parser("analyze", parents=[common], help="per-layer attention statistics")
    sub.add_parser("sweep", parents=[common], help="pyramid beta x alpha x budget x seed grid")
    return parser


def _apply_overrides(spec, args):
    changes = {}
    if getattr(args, "out", None):
        changes["out_dir"] = args.out
    if getattr(args, "workers", None) is not None:
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        changes["workers"] = args.workers
    if getattr(args, "format", None):
        changes["fmt"] = args.format
    return replace(spec, **changes) if changes else spec


def model_weights(spec, seed):
    if spec.weights_path:
        weights = load_weights(spec.weights_path)
        want = replace(spec.model, seed=weights.config.seed)
        if weights.config != want:
            raise ConfigError(
                f"model.weights: file config {weights.config} does not match spec {spec.model}",
                field="model.weights",
            )
        return weights
    return generate_weights(spec.model.with_seed(seed))


def tokens_for(spec, seed):
    if spec.token_source == "file":
        toks = read_token_file(spec.token_path)
    else:
        toks = random_tokens((spec.token_seed + seed) % (1 << 64), spec.token_length,
                             spec.model.vocab_size)
    return toks


def _out_path(spec, name):
    os.makedirs(spec.out_dir, exist_ok=True)
    return os.path.join(spec.out_dir, name)


def _ext(spec):
    return "json" if spec.fmt == "json" else "csv"


def cmd_allocate(spec, stream=sys.stdout, to_file=False):
    sched = schedule_for(replace(spec.policy, beta=spec.beta or spec.policy.beta),
                         spec.model.num_layers, spec.average_budget, spec.renormalize)
    rows = [{"layer": i, "budget": b} for i, b in enumerate(sched.per_layer)]
    text = results.csv_text(rows, ("layer", "budget"))
    s = sched.summary()
    text += (f"# mode={s['mode']} sum={s['sum']} mean={results.fmt_value(s['mean'])} "
             f"raw_ratio={results.fmt_value(float(s['raw_ratio']))} "
             f"ratio={results.fmt_value(float(s['ratio']))}\n")
    stream.write(text)
    if to_file:
        with open(_out_path(spec, "allocate.csv"), "w") as fh:
            fh.write(text)
    return sched


def _run_cell(spec, kind, budget, seed, alpha, beta):
    policy = replace(spec.policy, kind=kind, alpha=alpha,
                     beta=beta if beta is not None else spec.policy.beta)
    weights = model_weights(spec, seed)
    tokens = tokens_for(spec, seed)
    sched = schedule_for(policy, spec.model.num_layers, budget, spec.renormalize)
    report = compare_vs_full(weights, tokens, policy, sched, spec.decode_steps,
                             teacher_forcing=spec.teacher_forcing,
                             bytes_per_scalar=spec.bytes_per_scalar)
    if kind != "full":
        retained, full, _ = memory_account(weights.config, len(tokens), sched, spec.bytes_per_scalar)
        if (retained, full) != (report.retained_bytes, report.full_bytes):
            raise RuntimeError(f"cache bytes {report.retained_bytes} disagree with schedule bytes {retained}")
    return report, policy


def cmd_run(spec):
    seed = spec.model.seed
    report, policy = _run_cell(spec, spec.policy.kind, spec.average_budget, seed,
                               spec.policy.alpha, spec.beta if spec.policy.kind == "pyramid" else None)
    beta = policy.beta if policy.kind == "pyramid" else None
    summary = results.run_row(report, spec.average_budget, seed, policy.alpha, beta)
    if spec.fmt == "json":
        payload = {"summary": summary, "report": report.to_dict()}
        with open(_out_path(spec, "run.json"), "w") as fh:
            fh.write(results.json_text(payload))
    else:
        results.write_table(_out_path(spec, "run_summary.csv"), [summary], results.RUN_COLUMNS)
        results.write_table(_out_path(spec, "run_steps.csv"), results.step_rows(report), results.STEP_COLUMNS)
        results.write_table(_out_path(spec, "run_layers.csv"), results.layer_rows(report), results.LAYER_COLUMNS)
    return report


def _grid(spec, cells, name):
    def work(cell):
        kind, budget, seed, alpha, beta = cell
        try:
            report, policy = _run_cell(spec, kind, budget, seed, alpha, beta)
        except Exception as exc:  # one bad cell must not sink the grid
            return None, {"policy": kind, "budget": budget, "seed": seed, "alpha": alpha,
                          "beta": beta, "error": f"{type(exc).__name__}: {exc}"}
        shown_beta = policy.beta if kind == "pyramid" else None
        return results.run_row(report, budget, seed, alpha, shown_beta), None

    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            outcomes = list(pool.map(work, cells))
    else:
        outcomes = [work(c) for c in cells]

    rows = [row for row, _ in outcomes if row is not None]
    failures = [fail for _, fail in outcomes if fail is not None]
    results.write_table(_out_path(spec, f"{name}.{_ext(spec)}"), rows, results.RUN_COLUMNS, spec.fmt)
    manifest = _out_path(spec, f"{name}_failures.csv")
    if failures:
        results.write_table(manifest, failures, results.FAILURE_COLUMNS)
    elif os.path.exists(manifest):
        os.remove(manifest)
    return rows, failures


def bench_cells(spec):
    return [
        (kind, budget, seed, spec.policy.alpha, spec.beta if kind == "pyramid" else None)
        for kind in spec.sweep_policies
        for budget in spec.sweep_budgets
        for seed in spec.sweep_seeds
    ]


def sweep_cells(spec):
    return [
        ("pyramid", budget, seed, alpha, beta)
        for beta in spec.sweep_betas
        for alpha in spec.sweep_alphas
        for budget in spec.sweep_budgets
        for seed in spec.sweep_seeds
    ]


def cmd_bench(spec):
    return _grid(spec, bench_cells(spec), "bench")


def cmd_sweep(spec):
    return _grid(spec, sweep_cells(spec), "sweep")


def cmd_analyze(spec):
    seed = spec.model.seed
    trace, _ = prefill(model_weights(spec, seed), tokens_for(spec, seed))
    stats = layer_stats(trace, spec.window)
    results.write_table(_out_path(spec, f"layer_stats.{_ext(spec)}"), results.stats_rows(stats),
                        results.STATS_COLUMNS, spec.fmt)
    if spec.dump_attention:
        dump_attention(trace, _out_path(spec, "attention.bin"))
    return stats


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if not args.command:
            raise UsageError("kvfunnel: a subcommand is required (allocate, run, bench, analyze, sweep)")
        if not getattr(args, "spec", None):
            raise UsageError("kvfunnel: --spec PATH is required")
        spec = _apply_overrides(load_spec(args.spec), args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "allocate":
            cmd_allocate(spec, to_file=getattr(args, "out", None) is not None)
        elif args.command == "run":
            cmd_run(spec)
        elif args.command == "analyze":
            cmd_analyze(spec)
        else:
            _, failures = cmd_bench(spec) if args.command == "bench" else cmd_sweep(spec)
            if failures:
                print(f"{len(failures)} cell(s) failed; see {spec.out_dir}", file=sys.stderr)
                return EXIT_RUNTIME
    except ConfigError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KVFunnelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
