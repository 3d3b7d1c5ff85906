"""Command-line surface: batch commands over benchmark / matrix / alpha
files with CSV and JSON outputs.

Subcommands: convert, encode, infer, rank, analyze, synth, stats.
Diagnostics go to standard error; data goes only to files (or stdout).
Every randomised command takes an explicit --seed, and any command rerun
with identical flags and seed writes byte-identical outputs.

Exit codes: 0 success, 2 usage, 3 file/parse, 4 numeric or convergence
failure.
"""

import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import (
    compute_stats,
    generate_synthetic,
    parse_benchmark,
    serialize_benchmark,
)
from .encoding import indel_residue_counts, fit_indel_model, prepare_records
from .errors import (
    AlnMmlError,
    BenchmarkFormatError,
    ConversionError,
    ConvergenceError,
    CorruptRecordError,
    DegenerateInputError,
    IncompleteBundleError,
    MatrixFormatError,
    ParameterDomainError,
    PrecisionError,
)
from .inference import (
    SearchConfig,
    fit_to_fixed_matrix,
    load_alphas,
    rng_stream,
    run_em,
    save_alphas,
    save_bundle,
)
from .markov import (
    column_convergence_curve,
    conditional_to_logodds,
    expected_change,
    find_base_matrix,
    kl_divergence,
    load_frequency_vector,
    load_scoring_matrix,
    load_stochastic_matrix,
    logodds_to_conditional,
    matrix_power,
    save_matrix_file,
    save_stochastic_matrix,
)
from .types import AMINO_ACIDS, IndelModel, ModelBundle, StochasticMatrix

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_NUMERIC = 4

_PARSE_ERRORS = (
    BenchmarkFormatError,
    MatrixFormatError,
    CorruptRecordError,
    IncompleteBundleError,
    ParameterDomainError,
)
_NUMERIC_ERRORS = (ConvergenceError, ConversionError, PrecisionError, DegenerateInputError)


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def _ordered_parallel(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _stem(path):
    return Path(path).stem


# ===========================================================================
# Config files: flat "key = value" lines overriding SearchConfig fields.
# ===========================================================================


def load_search_config(path, seed):
    overrides = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise MatrixFormatError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in SearchConfig.__dataclass_fields__:
                raise MatrixFormatError(f"{path}:{lineno}: unknown config key {key!r}")
            if key in ("mcmc_delta_range", "t_range"):
                parts = [p for p in value.replace(",", " ").split() if p]
                if len(parts) != 2:
                    raise MatrixFormatError(f"{path}:{lineno}: {key} needs two values")
                overrides[key] = (float(parts[0]), float(parts[1])) if key == "mcmc_delta_range" else (
                    int(parts[0]),
                    int(parts[1]),
                )
            elif key in ("sa_steps_per_temp", "mcmc_iters_per_bin", "em_max_iters", "rng_seed"):
                overrides[key] = int(value)
            else:
                overrides[key] = float(value)
    overrides["rng_seed"] = seed
    return replace(SearchConfig(), **overrides)


# ===========================================================================
# Subcommands
# ===========================================================================


def cmd_convert(args, parser):
    fallback = None
    if args.freqs:
        fallback = load_frequency_vector(args.freqs)
    scoring = load_scoring_matrix(args.scores, scale=args.scale, freqs=fallback)
    if scoring.background is None:
        parser.error("no amino-acid frequencies: supply --freqs or a '# freqs:' header")
    conversion = logodds_to_conditional(scoring)
    result = find_base_matrix(StochasticMatrix.from_unnormalized(conversion.conditional))
    save_stochastic_matrix(
        args.out,
        result.matrix,
        extra={
            "k": result.k,
            "expected_change": f"{result.expected_change:.8f}",
            "clipped_mass": f"{result.clipped_mass:.3g}",
            "column_drift_max": f"{conversion.column_drift.max():.3g}",
        },
    )
    _log(
        f"convert: k={result.k} expected_change={result.expected_change:.6f} "
        f"clipped_mass={result.clipped_mass:.3g} drift_max={conversion.column_drift.max():.3g}"
    )
    return EXIT_OK


def _resolve_indel(source, indel_file, matrix, preps, parser):
    if source == "fit":
        return fit_indel_model(indel_residue_counts(preps))
    if source == "stationary":
        return IndelModel.from_unnormalized(matrix.stationary)
    if indel_file is None:
        parser.error("--indel-source file requires --indel-file")
    return IndelModel.from_unnormalized(load_frequency_vector(indel_file))


def _encode_one(records, preps, matrix, dirichlets, indel):
    return fit_to_fixed_matrix(records, matrix, dirichlets, indel=indel, preps=preps)


def cmd_encode(args, parser):
    records = parse_benchmark(args.benchmark)
    preps = prepare_records(records)
    matrix = load_stochastic_matrix(args.matrix)
    dirichlets = load_alphas(args.alphas)
    indel = _resolve_indel(args.indel_source, args.indel_file, matrix, preps, parser)
    report, _ = _encode_one(records, preps, matrix, dirichlets, indel)
    out = Path(args.out)
    json_path = out if out.suffix == ".json" else out.with_suffix(out.suffix + ".json")
    csv_path = json_path.with_suffix(".csv")
    report.to_json(json_path)
    report.to_csv(csv_path)
    _log(
        f"encode: {len(records)} records, total {report.total:.2f} bits "
        f"(matrix {report.i_matrix:.2f}, indel {report.i_indel_model:.2f}, "
        f"alphas {report.i_alphas:.2f}) -> {json_path}, {csv_path}"
    )
    return EXIT_OK


def cmd_infer(args, parser):
    records = parse_benchmark(args.benchmark)
    matrix = load_stochastic_matrix(args.init_matrix)
    dirichlets = load_alphas(args.init_alphas)
    if args.config:
        cfg = load_search_config(args.config, args.seed)
    else:
        cfg = SearchConfig(rng_seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    init = ModelBundle(matrix=matrix, indel=IndelModel.uniform(), dirichlets=dirichlets)
    bundle, trace = run_em(records, init, cfg, checkpoint_dir=out / "checkpoints")
    save_bundle(out / "model.json", bundle)
    save_stochastic_matrix(out / "matrix.mat", bundle.matrix)
    save_alphas(out / "alphas.tsv", bundle.dirichlets)
    with open(out / "trace.csv", "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "total_bits"])
        for i, total in enumerate(trace):
            writer.writerow([i, f"{total:.2f}"])
    _log(f"infer: {len(trace) - 1} iterations, {trace[0]:.2f} -> {trace[-1]:.2f} bits -> {out}")
    return EXIT_OK


def cmd_rank(args, parser):
    benchmarks = [(Path(p).name, parse_benchmark(p)) for p in args.benchmarks]
    matrices = [(_stem(p), load_stochastic_matrix(p)) for p in args.matrices]
    names = [name for name, _ in matrices]
    if len(set(names)) != len(names):
        parser.error("matrix file names must be distinct (stems are used as labels)")
    dirichlets = load_alphas(args.alphas)

    jobs = []
    for b, (bname, records) in enumerate(benchmarks):
        preps = prepare_records(records)
        for m, (mname, matrix) in enumerate(matrices):
            jobs.append((b, m, records, preps, matrix))

    def run(job):
        b, m, records, preps, matrix = job
        indel = _resolve_indel(args.indel_source, args.indel_file, matrix, preps, parser)
        report, _ = _encode_one(records, preps, matrix, dirichlets, indel)
        return b, m, report.total

    totals = np.zeros((len(benchmarks), len(matrices)))
    for b, m, total in _ordered_parallel(run, jobs, args.threads):
        totals[b, m] = total

    # Rank 1 = smallest total within each benchmark column; ties break by
    # matrix name and are reported.
    ranks = np.zeros_like(totals, dtype=int)
    for b, (bname, _) in enumerate(benchmarks):
        order = sorted(range(len(matrices)), key=lambda m: (totals[b, m], names[m]))
        for pos, m in enumerate(order, start=1):
            ranks[b, m] = pos
        for i, j in zip(order, order[1:]):
            if totals[b, i] == totals[b, j]:
                _log(f"rank: tie on {bname} between {names[i]} and {names[j]} "
                     f"(broken lexicographically)")

    with open(args.out, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        header = ["matrix"]
        for bname, _ in benchmarks:
            header += [f"{_stem(bname)}_bits", f"{_stem(bname)}_rank"]
        header.append("ranksum")
        writer.writerow(header)
        for m, name in enumerate(names):
            row = [name]
            for b in range(len(benchmarks)):
                row += [f"{totals[b, m]:.2f}", int(ranks[b, m])]
            row.append(int(ranks[:, m].sum()))
            writer.writerow(row)
    _log(f"rank: {len(matrices)} matrices x {len(benchmarks)} benchmarks -> {args.out}")
    return EXIT_OK


def cmd_analyze(args, parser):
    matrix = load_stochastic_matrix(args.matrix)
    modes = [
        args.expected_change is not None,
        args.kl is not None,
        args.convergence is not None,
        args.logodds is not None,
    ]
    if sum(modes) != 1:
        parser.error("choose exactly one of --expected-change / --kl / --convergence / --logodds")

    if args.expected_change is not None:
        with open(args.out, "w", newline="", encoding="ascii") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "expected_change"])
            for t in range(1, args.expected_change + 1):
                writer.writerow([t, f"{expected_change(matrix, t):.8f}"])
    elif args.kl is not None:
        other = load_stochastic_matrix(args.kl)
        a, b = _stem(args.matrix), _stem(args.kl)
        with open(args.out, "w", newline="", encoding="ascii") as fh:
            writer = csv.writer(fh)
            writer.writerow(["matrix_a", "matrix_b", "mode", "kl_bits"])
            writer.writerow([a, b, args.mode, f"{kl_divergence(matrix, other, args.mode):.8f}"])
            writer.writerow([b, a, args.mode, f"{kl_divergence(other, matrix, args.mode):.8f}"])
    elif args.convergence is not None:
        curves = column_convergence_curve(matrix, args.convergence)
        with open(args.out, "w", newline="", encoding="ascii") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + list(AMINO_ACIDS))
            for t in range(1, args.convergence + 1):
                writer.writerow([t] + [f"{v:.8f}" for v in curves[:, t - 1]])
    else:
        if args.scale is None:
            parser.error("--logodds requires --scale")
        powered = matrix_power(matrix, args.logodds)
        pi = matrix.stationary
        scores = conditional_to_logodds(powered.entries, pi, args.scale)
        save_matrix_file(
            args.out,
            scores,
            mtype="logodds",
            scale=args.scale,
            freqs=pi,
            extra={"divergence_time": args.logodds},
        )
    _log(f"analyze -> {args.out}")
    return EXIT_OK


def cmd_synth(args, parser):
    matrix = load_stochastic_matrix(args.matrix)
    dirichlets = load_alphas(args.alphas)
    if args.indel_file:
        indel = IndelModel.from_unnormalized(load_frequency_vector(args.indel_file))
    else:
        indel = IndelModel.from_unnormalized(matrix.stationary)
    bundle = ModelBundle(matrix=matrix, indel=indel, dirichlets=dirichlets)
    times = None
    if args.times:
        times = [int(tok) for tok in args.times.split(",") if tok]
    rng = rng_stream(args.seed, "synth")
    records = generate_synthetic(bundle, args.n, args.mean_length, rng, times=times)
    serialize_benchmark(args.out, records)
    _log(f"synth: {len(records)} records -> {args.out}")
    return EXIT_OK


def cmd_stats(args, parser):
    records = parse_benchmark(args.benchmark, on_error=args.on_error)
    stats = compute_stats(records)
    out = Path(args.out)
    json_path = out if out.suffix == ".json" else out.with_suffix(out.suffix + ".json")
    stats.to_json(json_path)
    stats.to_csv(json_path.with_suffix(".csv"))
    _log(f"stats: {stats.n_pairs} pairs, avg identity {stats.avg_seq_identity:.1f}%")
    return EXIT_OK


# ===========================================================================
# Parser
# ===========================================================================


def build_parser():
    parser = argparse.ArgumentParser(
        prog="alnmml",
        description="Minimum-message-length models of pairwise protein alignments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="calibrate a log-odds matrix into a base stochastic matrix")
    p.add_argument("--scores", required=True, help="log-odds matrix file")
    p.add_argument("--scale", type=float, default=None, help="score scale c (S = c*log2 odds)")
    p.add_argument("--freqs", default=None, help="fallback amino-acid frequency file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("encode", help="itemised encoding length of a benchmark under a fixed matrix")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--matrix", required=True)
    p.add_argument("--alphas", required=True, help="time-binned Dirichlet parameter file")
    p.add_argument("--indel-source", choices=["fit", "stationary", "file"], default="fit")
    p.add_argument("--indel-file", default=None, help="20-vector file for --indel-source file")
    p.add_argument("--out", required=True, help="report path (writes .json and .csv)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("infer", help="infer matrix, times and Dirichlets by alternating search")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--init-matrix", required=True)
    p.add_argument("--init-alphas", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config", default=None, help="key = value overrides of SearchConfig")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("rank", help="encode every (matrix, benchmark) pair and rank by total bits")
    p.add_argument("--benchmarks", required=True, nargs="+")
    p.add_argument("--matrices", required=True, nargs="+")
    p.add_argument("--alphas", required=True)
    p.add_argument("--indel-source", choices=["fit", "stationary", "file"], default="fit")
    p.add_argument("--indel-file", default=None)
    p.add_argument("--out", required=True, help="ranking table CSV")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("analyze", help="expected-change / KL / convergence curves, log-odds export")
    p.add_argument("--matrix", required=True)
    p.add_argument("--expected-change", type=int, default=None, metavar="TMAX")
    p.add_argument("--kl", default=None, metavar="OTHER_MATRIX")
    p.add_argument("--mode", choices=["joint", "conditional"], default="conditional")
    p.add_argument("--convergence", type=int, default=None, metavar="TMAX")
    p.add_argument("--logodds", type=int, default=None, metavar="T")
    p.add_argument("--scale", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="sample a synthetic benchmark from a model")
    p.add_argument("--matrix", required=True)
    p.add_argument("--alphas", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--mean-length", type=int, default=200)
    p.add_argument("--times", default=None, help="comma-separated divergence times to draw from")
    p.add_argument("--indel-file", default=None, help="indel 20-vector (default: stationary)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="benchmark composition statistics")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--on-error", choices=["abort", "skip"], default="abort")
    p.add_argument("--out", required=True, help="stats path (writes .json and .csv)")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except _NUMERIC_ERRORS as exc:
        _log(f"error: {exc}")
        return EXIT_NUMERIC
    except _PARSE_ERRORS as exc:
        _log(f"error: {exc}")
        return EXIT_PARSE
    except FileNotFoundError as exc:
        _log(f"error: {exc}")
        return EXIT_PARSE
    except AlnMmlError as exc:
        _log(f"error: {exc}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
