"""Command-line driver for streaming sensitivity analyses.

Subcommands
-----------
analyze
    Stream samples from a CSV/f64le file or a built-in model, estimate the
    first-order indices, apply the noise filter, and write a JSON artifact
    (optionally with running snapshots and a resumable accumulator state).
study
    Run seeded replicate analyses of a built-in model, emitting replicate
    index distributions and, with ``--sweep-n``, noise-convergence tables.
filter
    Re-apply the noise threshold to a previously written artifact.
diagnose
    Per-bin comparison of estimated vs. exact conditional statistics for the
    normal-inputs polynomial model, for both equiprobable and equidistant
    partitions.

Exit status is 0 on success, 1 for data/parameter/model errors, 2 for usage
errors, and 3 when the noise threshold could not be estimated because no
index came out negative (the artifact, if any, is still written).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import NoNegativeIndicesError, ParameterError, SobolStreamError
from .estimator import SobolAccumulator, all_at_once
from .heuristic import SIGMA_CONVENTION, filter_indices
from .models import (
    ModelSpec,
    analytic_indices,
    evaluate,
    exact_bin_statistics,
    gamma_output,
    ishigami,
    linear_model,
    polynomial,
    sample_inputs,
    sobol_g,
)
from .partition import Partition, build_partition
from .sampleio import CsvSampleReader, F64leSampleReader, ModelSampleReader
from .streamstats import batch_moments_by_bin, sample_variance_arrays

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_NEGATIVES = 3

MODELS = {
    "polynomial-uniform": (
        lambda p: polynomial("uniform", **p),
        ("a", "b", "c"),
    ),
    "polynomial-normal": (
        lambda p: polynomial("normal", **p),
        ("a", "b", "c"),
    ),
    "polynomial-exponential": (
        lambda p: polynomial("exponential", **p),
        ("a", "b", "c"),
    ),
    "polynomial-spike-slab": (
        lambda p: polynomial("spike_slab", **p),
        ("a", "b", "c", "p", "mu", "sigma"),
    ),
    "sobol-g": (lambda p: sobol_g(**{k: int(v) for k, v in p.items()}), ("d",)),
    "ishigami": (lambda p: ishigami(**p), ("a", "b")),
    "gamma-output": (lambda p: gamma_output(**p), ("alpha",)),
    "linear": (
        lambda p: linear_model(**{k: int(v) for k, v in p.items()}),
        ("d", "active"),
    ),
}


def parse_model_params(text: str | None) -> dict:
    """Parse ``k=v`` pairs separated by commas into a name/float mapping."""
    if not text:
        return {}
    params = {}
    for item in text.split(","):
        if not item.strip():
            continue
        key, sep, value = item.partition("=")
        if not sep:
            raise ParameterError(f"model parameter {item!r} is not of the form k=v")
        try:
            params[key.strip()] = float(value)
        except ValueError as err:
            raise ParameterError(f"model parameter {item!r}: {err}") from err
    return params


def build_model(name: str, params_text: str | None) -> ModelSpec:
    if name not in MODELS:
        raise ParameterError(
            f"unknown model {name!r}; available: {', '.join(sorted(MODELS))}"
        )
    factory, allowed = MODELS[name]
    params = parse_model_params(params_text)
    unknown = set(params) - set(allowed)
    if unknown:
        raise ParameterError(
            f"model {name} does not accept parameter(s) {sorted(unknown)}; "
            f"allowed: {list(allowed)}"
        )
    return factory(params)


def _parse_truncation(text: str | None):
    if text is None:
        return None
    parts = text.split(",")
    if len(parts) != 2:
        raise ParameterError(f"--truncate takes LO,HI quantile levels, got {text!r}")
    return float(parts[0]), float(parts[1])


def _derived_seed(*parts) -> int:
    return int(np.random.SeedSequence(entropy=tuple(int(p) for p in parts)).generate_state(1, np.uint64)[0])


def _artifact_hash(artifact: dict) -> str:
    clone = json.loads(json.dumps(artifact))
    clone.get("meta", {}).pop("timestamp", None)
    clone.get("meta", {}).pop("determinism_hash", None)
    canonical = json.dumps(clone, sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canonical.encode()).hexdigest()


def _stamp_and_write(artifact: dict, out_path, t_start: float) -> None:
    artifact["meta"]["determinism_hash"] = _artifact_hash(artifact)
    artifact["meta"]["timestamp"] = {
        "written_at": datetime.now(timezone.utc).isoformat(),
        "runtime_seconds": round(time.perf_counter() - t_start, 6),
    }
    text = json.dumps(artifact, indent=2, sort_keys=True)
    if out_path is None:
        print(text)
    else:
        Path(out_path).write_text(text)


def _make_reader(args):
    if args.model:
        if args.n is None:
            raise ParameterError("--model requires --n (total sample count)")
        spec = build_model(args.model, args.model_params)
        return ModelSampleReader(spec, args.n, args.seed)
    if not args.input:
        raise ParameterError("either --input PATH or --model NAME is required")
    if args.format == "csv":
        return CsvSampleReader(args.input)
    return F64leSampleReader(args.input)


def run_streaming_analysis(
    reader,
    scheme: str,
    bins: int,
    batch_size: int,
    init_samples: int | None,
    truncation=None,
    snapshot_every: int = 0,
):
    """Shared analyze pipeline: initialize from the head of the stream, ingest
    everything (head included), and snapshot at sample-count boundaries.

    Returns ``(accumulator, result, snapshots)``.
    """
    if batch_size < 1:
        raise ParameterError(f"batch size must be >= 1, got {batch_size}")
    n0 = init_samples if init_samples is not None else batch_size
    if n0 < bins:
        raise ParameterError(
            f"init samples ({n0}) must be at least the bin count ({bins})"
        )
    batches = reader.iter_batches(batch_size)
    head, have = [], 0
    for x, y in batches:
        head.append((x, y))
        have += y.size
        if have >= n0:
            break
    if have == 0:
        raise ParameterError("input stream is empty")
    head_x = np.vstack([h[0] for h in head])
    head_y = np.concatenate([h[1] for h in head])
    n0 = min(n0, head_y.size)
    acc = SobolAccumulator.initialize(
        head_x[:n0], head_y[:n0], scheme=scheme, m=bins, truncation=truncation
    )
    if head_y.size > n0:
        acc.ingest(head_x[n0:], head_y[n0:])

    snapshots = []
    next_boundary = snapshot_every if snapshot_every else None

    def maybe_snapshot():
        # coarse batches can cross several boundaries at once: one record
        nonlocal next_boundary
        if next_boundary is not None and acc.n_seen >= next_boundary:
            snapshots.append(_snapshot_record(acc))
            while next_boundary <= acc.n_seen:
                next_boundary += snapshot_every

    maybe_snapshot()
    for x, y in batches:
        acc.ingest(x, y)
        maybe_snapshot()
    return acc, acc.finalize(), snapshots


def _snapshot_record(acc: SobolAccumulator) -> dict:
    try:
        res = acc.finalize()
    except SobolStreamError as err:
        return {"n": acc.n_seen, "error": str(err)}
    return {
        "n": res.n,
        "total_variance": res.total_variance,
        "s": [float(v) for v in res.s],
        "ev": [float(v) for v in res.ev],
    }


def _threshold_section(indices: np.ndarray, k: float) -> tuple[dict, list, float, bool]:
    try:
        filt = filter_indices(indices, k)
    except NoNegativeIndicesError as err:
        section = {"available": False, "reason": str(err), "k": k}
        return section, [], 0.0, False
    thr = filt.threshold
    section = {
        "available": True,
        "sigma": thr.sigma,
        "k": thr.k,
        "value": thr.threshold,
        "n_negative": thr.n_negative,
    }
    significant = [{"index": i, "s": s} for i, s in filt.significant]
    return section, significant, filt.explained_sum, True


def cmd_analyze(args) -> int:
    t0 = time.perf_counter()
    reader = _make_reader(args)
    truncation = _parse_truncation(args.truncate)
    acc, result, snapshots = run_streaming_analysis(
        reader,
        scheme=args.scheme,
        bins=args.bins,
        batch_size=args.batch_size,
        init_samples=args.init_samples,
        truncation=truncation,
        snapshot_every=args.snapshot_every,
    )
    threshold, significant, explained, have_threshold = _threshold_section(
        result.s, args.filter_k
    )
    artifact = result.to_dict(include_bin_counts=args.bin_counts)
    artifact.update(
        {
            "meta": {
                "command": "analyze",
                "version": __version__,
                "scheme": args.scheme,
                "bins": args.bins,
                "m_effective": [int(m) for m in result.bins],
                "init_samples": args.init_samples if args.init_samples is not None else args.batch_size,
                "n": result.n,
                "batch_size": args.batch_size,
                "seed": args.seed,
                "model": args.model,
                "model_params": args.model_params,
                "input": args.input,
                "format": args.format if args.input else "model",
                "truncation": list(truncation) if truncation else None,
                "filter_k": args.filter_k,
                "snapshot_every": args.snapshot_every,
                "init_ingested": True,
                "sigma_convention": SIGMA_CONVENTION,
            },
            "threshold": threshold,
            "significant": significant,
            "explained_variance_sum": explained,
            "snapshots": snapshots,
        }
    )
    if args.state_out:
        acc.save_state(args.state_out)
    _stamp_and_write(artifact, args.out, t0)
    if not have_threshold:
        print(
            "warning: no negative indices; noise threshold unavailable",
            file=sys.stderr,
        )
        return EXIT_NO_NEGATIVES
    return EXIT_OK


def cmd_study(args) -> int:
    t0 = time.perf_counter()
    if args.model is None:
        raise ParameterError("study requires --model")
    if args.replicates < 2:
        raise ParameterError(f"study needs --replicates >= 2, got {args.replicates}")
    if args.n is None:
        raise ParameterError("study requires --n")
    spec = build_model(args.model, args.model_params)
    truncation = _parse_truncation(args.truncate)
    sweep = args.sweep_n or [args.n]

    try:
        _, reference = analytic_indices(spec)
        reference = [float(v) for v in reference]
    except SobolStreamError:
        reference = None

    levels = []
    replicate_rows = []
    convergence_rows = []
    for n in sweep:
        s_matrix = np.empty((args.replicates, spec.d))
        sigmas, thresholds = [], []
        for r in range(args.replicates):
            seed_r = _derived_seed(args.seed, n, r)
            reader = ModelSampleReader(spec, n, seed_r)
            _, result, _ = run_streaming_analysis(
                reader,
                scheme=args.scheme,
                bins=args.bins,
                batch_size=args.batch_size,
                init_samples=args.init_samples,
                truncation=truncation,
            )
            s_matrix[r] = result.s
            section, _, _, ok = _threshold_section(result.s, args.filter_k)
            sigma = section["sigma"] if ok else None
            threshold = section["value"] if ok else None
            sigmas.append(sigma)
            thresholds.append(threshold)
            convergence_rows.append(
                {"n": n, "replicate": r, "sigma_symm": sigma, "threshold": threshold}
            )
            for i in range(spec.d):
                replicate_rows.append(
                    {"n": n, "replicate": r, "input": i, "s": float(s_matrix[r, i])}
                )
        per_input = [
            {
                "index": i,
                "mean": float(s_matrix[:, i].mean()),
                "std": float(s_matrix[:, i].std(ddof=1)),
                "p5": float(np.percentile(s_matrix[:, i], 5)),
                "p95": float(np.percentile(s_matrix[:, i], 95)),
                "reference": reference[i] if reference else None,
            }
            for i in range(spec.d)
        ]
        valid_sigmas = [s for s in sigmas if s is not None]
        levels.append(
            {
                "n": n,
                "per_input": per_input,
                "sigma_symm": sigmas,
                "threshold": thresholds,
                "sigma_symm_mean": float(np.mean(valid_sigmas)) if valid_sigmas else None,
            }
        )

    artifact = {
        "meta": {
            "command": "study",
            "version": __version__,
            "model": args.model,
            "model_params": args.model_params,
            "scheme": args.scheme,
            "bins": args.bins,
            "batch_size": args.batch_size,
            "init_samples": args.init_samples if args.init_samples is not None else args.batch_size,
            "replicates": args.replicates,
            "seed": args.seed,
            "sweep_n": sweep,
            "truncation": list(truncation) if truncation else None,
            "filter_k": args.filter_k,
            "sigma_convention": SIGMA_CONVENTION,
        },
        "reference": reference,
        "levels": levels,
    }
    _stamp_and_write(artifact, args.out, t0)
    if args.out:
        base = Path(args.out)
        _write_csv_rows(
            base.with_name(base.stem + "_replicates.csv"),
            ["n", "replicate", "input", "s"],
            replicate_rows,
        )
        _write_csv_rows(
            base.with_name(base.stem + "_convergence.csv"),
            ["n", "replicate", "sigma_symm", "threshold"],
            convergence_rows,
        )
    return EXIT_OK


def _write_csv_rows(path, fields, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def cmd_filter(args) -> int:
    t0 = time.perf_counter()
    source = json.loads(Path(args.result).read_text())
    per_input = sorted(source.get("per_input", []), key=lambda e: e["index"])
    if not per_input:
        raise ParameterError(f"{args.result}: artifact has no per_input section")
    indices = np.array([e["s"] for e in per_input])
    threshold, significant, explained, have_threshold = _threshold_section(
        indices, args.filter_k
    )
    artifact = {
        "meta": {
            "command": "filter",
            "version": __version__,
            "source": str(args.result),
            "filter_k": args.filter_k,
            "sigma_convention": SIGMA_CONVENTION,
        },
        "threshold": threshold,
        "significant": significant,
        "explained_variance_sum": explained,
    }
    _stamp_and_write(artifact, args.out, t0)
    if not have_threshold:
        print(
            "error: no negative indices; noise threshold unavailable",
            file=sys.stderr,
        )
        return EXIT_NO_NEGATIVES
    return EXIT_OK


def cmd_diagnose(args) -> int:
    t0 = time.perf_counter()
    if args.model != "polynomial-normal":
        raise ParameterError("diagnose supports only --model polynomial-normal")
    spec = build_model(args.model, args.model_params)
    i = args.input_index
    if not 0 <= i < spec.d:
        raise ParameterError(f"--input-index must be in [0, {spec.d}), got {i}")
    if args.n is None:
        raise ParameterError("diagnose requires --n")

    whole_ev, whole_p = exact_bin_statistics(
        spec, i, Partition(np.empty(0), "equidistant", 2)
    )
    exact_numerator = float((whole_ev * whole_p).sum())

    schemes = {}
    bin_rows = []
    for scheme in ("quantile", "equidistant"):
        ref_x = sample_inputs(spec, args.n, _derived_seed(args.seed, 1))
        ref_partition = build_partition(ref_x[:, i], scheme, args.bins)
        exact_ev, exact_p = exact_bin_statistics(spec, i, ref_partition)
        m = ref_partition.m_effective

        s2 = np.empty((args.replicates, m))
        p_hat = np.empty((args.replicates, m))
        numerators = np.empty(args.replicates)
        for r in range(args.replicates):
            seed_r = _derived_seed(args.seed, 2, r)
            x = sample_inputs(spec, args.n, seed_r)
            y = evaluate(spec, x)
            idx = ref_partition.assign(x[:, i])
            counts, _, uvs = batch_moments_by_bin(idx, y, m)
            s2[r] = sample_variance_arrays(counts, uvs)
            p_hat[r] = counts / args.n
            numerators[r] = all_at_once(x, y, scheme=scheme, m=args.bins).ev[i]

        per_bin = {
            "s2_mean": s2.mean(axis=0),
            "s2_p5": np.percentile(s2, 5, axis=0),
            "s2_p95": np.percentile(s2, 95, axis=0),
            "p_mean": p_hat.mean(axis=0),
            "product_mean": (s2 * p_hat).mean(axis=0),
            "exact_ev": exact_ev,
            "exact_p": exact_p,
            "exact_product": exact_ev * exact_p,
        }
        schemes[scheme] = {
            "edges": [float(e) for e in ref_partition.interior_edges],
            "m_effective": m,
            "per_bin": {k: [float(v) for v in arr] for k, arr in per_bin.items()},
            "numerator": {
                "replicate_mean": float(numerators.mean()),
                "replicate_std": float(numerators.std(ddof=1)),
                "bias": float(numerators.mean() - exact_numerator),
            },
        }
        for k in range(m):
            bin_rows.append(
                {
                    "scheme": scheme,
                    "bin": k,
                    "s2_mean": float(per_bin["s2_mean"][k]),
                    "exact_ev": float(per_bin["exact_ev"][k]),
                    "p_mean": float(per_bin["p_mean"][k]),
                    "exact_p": float(per_bin["exact_p"][k]),
                    "product_mean": float(per_bin["product_mean"][k]),
                    "exact_product": float(per_bin["exact_product"][k]),
                }
            )

    artifact = {
        "meta": {
            "command": "diagnose",
            "version": __version__,
            "model": args.model,
            "model_params": args.model_params,
            "input_index": i,
            "bins": args.bins,
            "n": args.n,
            "replicates": args.replicates,
            "seed": args.seed,
        },
        "exact_numerator": exact_numerator,
        "schemes": schemes,
    }
    _stamp_and_write(artifact, args.out, t0)
    if args.out:
        base = Path(args.out)
        _write_csv_rows(
            base.with_name(base.stem + "_bins.csv"),
            [
                "scheme",
                "bin",
                "s2_mean",
                "exact_ev",
                "p_mean",
                "exact_p",
                "product_mean",
                "exact_product",
            ],
            bin_rows,
        )
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser, with_stream: bool = True) -> None:
    parser.add_argument(
        "--scheme",
        choices=("quantile", "kde", "equidistant"),
        default="equidistant",
        help="partitioning scheme (default: equidistant)",
    )
    parser.add_argument("--bins", type=int, default=50, help="bins per input")
    parser.add_argument("--seed", type=int, default=0, help="run seed")
    parser.add_argument("--out", type=str, default=None, help="artifact path (default: stdout)")
    parser.add_argument(
        "--filter-k", type=float, default=4.0, help="noise-threshold multiplier"
    )
    if with_stream:
        parser.add_argument(
            "--batch-size", type=int, default=10_000, help="rows per streamed batch"
        )
        parser.add_argument(
            "--init-samples",
            type=int,
            default=None,
            help="rows used to build the partitions (default: one batch)",
        )
        parser.add_argument(
            "--truncate",
            type=str,
            default=None,
            metavar="LO,HI",
            help="quantile levels truncating the equidistant range",
        )


def _add_model_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--model", choices=sorted(MODELS), default=None, help="built-in model name"
    )
    parser.add_argument(
        "--model-params",
        type=str,
        default=None,
        help="comma-separated k=v model parameters, e.g. a=1,b=1,c=10",
    )
    parser.add_argument("--n", type=int, default=None, help="total samples to generate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sobolstream",
        description="Streaming given-data estimation of first-order Sobol' indices.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_analyze = sub.add_parser("analyze", help="estimate indices from a sample stream")
    _add_common(p_analyze)
    _add_model_args(p_analyze)
    p_analyze.add_argument("--input", type=str, default=None, help="sample file path")
    p_analyze.add_argument(
        "--format", choices=("csv", "f64le"), default="csv", help="sample file format"
    )
    p_analyze.add_argument(
        "--snapshot-every",
        type=int,
        default=0,
        metavar="N",
        help="record a snapshot every N samples (0 = off)",
    )
    p_analyze.add_argument(
        "--bin-counts", action="store_true", help="include full per-input bin counts"
    )
    p_analyze.add_argument(
        "--state-out", type=str, default=None, help="write resumable accumulator state"
    )
    p_analyze.set_defaults(func=cmd_analyze)

    p_study = sub.add_parser("study", help="replicate study of a built-in model")
    _add_common(p_study)
    _add_model_args(p_study)
    p_study.add_argument("--replicates", type=int, default=100, help="replicate count")
    p_study.add_argument(
        "--sweep-n",
        type=lambda s: [int(v) for v in s.split(",")],
        default=None,
        metavar="LIST",
        help="comma-separated sample counts to sweep",
    )
    p_study.set_defaults(func=cmd_study)

    p_filter = sub.add_parser("filter", help="re-apply the noise threshold")
    p_filter.add_argument("result", type=str, help="path of an analyze artifact")
    p_filter.add_argument("--filter-k", type=float, default=4.0)
    p_filter.add_argument("--out", type=str, default=None)
    p_filter.set_defaults(func=cmd_filter)

    p_diag = sub.add_parser("diagnose", help="per-bin bias decomposition")
    _add_common(p_diag, with_stream=False)
    _add_model_args(p_diag)
    p_diag.add_argument("--input-index", type=int, default=1)
    p_diag.add_argument("--replicates", type=int, default=100)
    p_diag.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SobolStreamError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
