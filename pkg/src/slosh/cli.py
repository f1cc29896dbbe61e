"""Command-line entry point: ``slosh {gen,embed,index,query,eval,bench}``.

Every command writes ``run-config.txt`` (the fully resolved arguments) into
its output directory. ``SLOSH_OUTPUT_DIR`` and ``SLOSH_THREADS`` override
the defaults of ``--out-dir`` and ``--threads``; everything else is a flag.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench, dataio
from .batchfile import EmbeddingBatch
from .poolings import GEM_SIGN_CONVENTION
from .retrieval import EMBEDDERS, INDEX_VARIANTS, Pipeline, PipelineConfig, evaluate_repeated
from .slicing import sample_slicers
from .swe import ReferenceSet, embed_many

SWEEPS = ("none", "L", "code-length", "reference")


def _ints(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _default_threads() -> int:
    env = os.environ.get("SLOSH_THREADS")
    return int(env) if env else (os.cpu_count() or 1)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", default=os.environ.get("SLOSH_OUTPUT_DIR", "slosh-out"),
                   help="output directory (env SLOSH_OUTPUT_DIR)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive, default=_default_threads(),
                   help="worker threads (env SLOSH_THREADS); results do not depend on it")


def _embedder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--embedder", default="swe", help=f"one of {', '.join(EMBEDDERS)}")
    p.add_argument("--L", type=_positive, default=16, help="number of slices")
    p.add_argument("--M", type=_positive, default=None,
                   help="reference size (default: median training cardinality)")
    p.add_argument("--reference", default="kmeans", choices=dataio.REFERENCE_METHODS)
    p.add_argument("--p-max", type=_positive, default=1, help="GeM: moments 1..p concatenated")
    p.add_argument("--lam", type=float, default=0.0, help="covariance trace regularizer")
    p.add_argument("--m-grid", type=_positive, default=16, help="FSPool interpolation points")


def _index_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--index-variant", default="binary", choices=INDEX_VARIANTS)
    p.add_argument("--k-bits", type=_positive, default=1024, help="binary code length")
    p.add_argument("--offsets", default="uniform", choices=("zero", "uniform"),
                   help="sign-hash thresholds for the binary index")
    p.add_argument("--k", type=_positive, default=8, help="floor hashes per table")
    p.add_argument("--T", type=_positive, default=16, help="number of tables")
    p.add_argument("--omega", type=float, default=None,
                   help="bucket width (default: median pairwise embedding distance)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slosh", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic labeled set dataset")
    _common(p)
    p.add_argument("--classes", type=_positive, default=10)
    p.add_argument("--sets-per-class", type=_positive, default=30)
    p.add_argument("--d", type=_positive, default=3)
    p.add_argument("--card-mean", type=_positive, default=64)
    p.add_argument("--card-std", type=float, default=8.0)
    p.add_argument("--components", type=_positive, default=4)
    p.add_argument("--component-std", type=float, default=0.1)
    p.add_argument("--binary", action="store_true", help="write the SSB1 binary twin format")
    p.add_argument("--output", default="dataset.ssd", help="file name inside --out-dir")

    p = sub.add_parser("embed", help="embed every set of a dataset into a batch file")
    _common(p)
    _embedder_flags(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--output", default="embeddings.bin")

    p = sub.add_parser("index", help="fit a pipeline on a training dataset and save it")
    _common(p)
    _embedder_flags(p)
    _index_flags(p)
    p.add_argument("--dataset", required=True)

    p = sub.add_parser("query", help="query a saved pipeline with the sets of a dataset")
    _common(p)
    p.add_argument("--index-dir", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--neighbors", type=_positive, default=4)
    p.add_argument("--exclude-self", action="store_true",
                   help="drop indexed records whose id equals the query id")

    p = sub.add_parser("eval", help="Precision@k / majority-vote accuracy, optionally swept")
    _common(p)
    _embedder_flags(p)
    _index_flags(p)
    p.add_argument("--dataset", help="labeled dataset split into train/test")
    p.add_argument("--test-count", type=_positive, default=None,
                   help="sets held out for testing when --dataset is used (default: one third)")
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--methods", default=None,
                   help="comma-separated embedders to compare (default: --embedder)")
    p.add_argument("--ks", type=_ints, default=[4, 8, 16])
    p.add_argument("--repeats", type=_positive, default=5)
    p.add_argument("--sweep", default="none", choices=SWEEPS)
    p.add_argument("--sweep-values", default=None,
                   help="comma-separated values (reference sweep: method names)")

    p = sub.add_parser("bench", help="embedding wall time versus N and L")
    _common(p)
    p.add_argument("--Ns", type=_ints, default=[1024, 2048, 4096, 8192, 16384])
    p.add_argument("--Ls", type=_ints, default=[64])
    p.add_argument("--d", type=_positive, default=3)
    p.add_argument("--methods", default="swe")
    p.add_argument("--reps", type=_positive, default=bench.MIN_REPS)
    p.add_argument("--M", type=_positive, default=None, help="fixed reference size (default: N)")
    return parser


def _echo_config(args, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"{k}={v}" for k, v in sorted(vars(args).items()) if k != "func"]
    (out / "run-config.txt").write_text("\n".join(lines) + "\n")


def _pipeline_config(args, embedder=None) -> PipelineConfig:
    return PipelineConfig(
        embedder=embedder or args.embedder, L=args.L, M=args.M, reference=args.reference,
        p_max=args.p_max, lam=args.lam, M_grid=args.m_grid,
        index=getattr(args, "index_variant", "binary"), k_bits=getattr(args, "k_bits", 1024),
        offsets=getattr(args, "offsets", "uniform"), k=getattr(args, "k", 8),
        T=getattr(args, "T", 16), omega=getattr(args, "omega", None),
        seed=args.seed, threads=args.threads)


def _load(path) -> dataio.SetDataset:
    if path is None or not Path(path).is_file():
        raise _UsageError(f"dataset not found: {path}")
    return dataio.load_dataset(path)


class _UsageError(Exception):
    pass


def cmd_gen(args) -> Path:
    if args.card_std < 0 or args.component_std < 0:
        raise _UsageError("--card-std and --component-std must be nonnegative")
    out = Path(args.out_dir)
    _echo_config(args, out)
    ds = dataio.gen_blobs(args.classes, args.sets_per_class, args.d, args.card_mean,
                          args.card_std, args.seed, args.components, args.component_std)
    path = out / args.output
    dataio.save_dataset(ds, path, binary=args.binary)
    print(path)
    return path


def cmd_embed(args) -> Path:
    if args.embedder not in EMBEDDERS:
        raise _UsageError(f"unknown embedder {args.embedder!r}; expected one of {', '.join(EMBEDDERS)}")
    ds = _load(args.dataset)
    out = Path(args.out_dir)
    _echo_config(args, out)
    cfg = _pipeline_config(args)
    path = out / args.output
    if cfg.embedder == "swe":
        seeds = cfg.child_seeds()
        bank = sample_slicers(ds.d, cfg.L, seeds["bank"])
        M = cfg.M or dataio.default_reference_size(ds)
        pts = dataio.build_reference(ds, cfg.reference, M, seeds["reference"])
        ref = ReferenceSet.build(pts, bank, cfg.reference, seeds["reference"])
        vecs = embed_many(ds.sets, ref, bank, args.threads)
        batch = EmbeddingBatch(vecs.astype(np.float32), ds.ids, ds.labels, bank.L, ref.M, ds.d,
                               seeds["bank"], bytes.fromhex(ref.digest))
    else:
        pipe = Pipeline(cfg)
        pipe.embedder = pipe._make_embedder(ds)
        vecs = pipe.embed(ds.sets)
        tag = {"gem": f"gem:p={cfg.p_max};{GEM_SIGN_CONVENTION}", "cov": f"cov:lam={cfg.lam!r}",
               "fspool_di": f"fspool_di:m={cfg.M_grid}"}[cfg.embedder]
        batch = EmbeddingBatch(vecs.astype(np.float32), ds.ids, ds.labels, 1, vecs.shape[1],
                               ds.d, None, b"\0" * 32, tag)
    batch.save(path)
    print(path)
    return path


def cmd_index(args) -> Path:
    ds = _load(args.dataset)
    out = Path(args.out_dir)
    _echo_config(args, out)
    pipe = Pipeline(_pipeline_config(args)).fit(ds)
    pipe.save(out)
    print(out / "index.slsh")
    return out


def cmd_query(args) -> Path:
    if not (Path(args.index_dir) / "pipeline.json").is_file():
        raise _UsageError(f"no saved pipeline in {args.index_dir}")
    ds = _load(args.dataset)
    out = Path(args.out_dir)
    _echo_config(args, out)
    pipe = Pipeline.load(args.index_dir)
    lines = ["query_id,rank,neighbor_id,label,distance,underfull"]
    for s in ds.sets:
        res = pipe.query(s, args.neighbors, exclude_id=s.id if args.exclude_self else None)
        for rank, (i, lab, dist) in enumerate(zip(res.ids, res.labels, res.distances), 1):
            lines.append(f"{s.id},{rank},{i},{lab},{float(dist)!r},{int(res.underfull)}")
    path = out / "neighbors.csv"
    path.write_text("\n".join(lines) + "\n")
    print(path)
    return path


def _eval_data(args):
    if args.train or args.test:
        if not (args.train and args.test):
            raise _UsageError("--train and --test must be given together")
        return _load(args.train), _load(args.test)
    if not args.dataset:
        raise _UsageError("give --dataset or --train/--test")
    ds = _load(args.dataset)
    n_test = args.test_count or max(1, len(ds) // 3)
    return dataio.train_test_split(ds, n_test, args.seed)


def _sweep_configs(args, base: PipelineConfig):
    """Yield (parameter value, config) pairs for the requested sweep."""
    if args.sweep == "none":
        yield "", base
        return
    raw = args.sweep_values
    if args.sweep == "L":
        for v in _ints(raw or "2,8,32"):
            yield v, replace(base, L=v)
    elif args.sweep == "code-length":
        for v in _ints(raw or "16,64,256,1024"):
            yield v, replace(base, k_bits=v)
    else:
        names = (raw or ",".join(dataio.REFERENCE_METHODS)).split(",")
        for v in names:
            if v not in dataio.REFERENCE_METHODS:
                raise _UsageError(f"unknown reference method {v!r}")
            yield v, replace(base, reference=v)


def cmd_eval(args) -> Path:
    methods = (args.methods or args.embedder).split(",")
    for m in methods:
        if m not in EMBEDDERS:
            raise _UsageError(f"unknown embedder {m!r}")
    train, test = _eval_data(args)
    out = Path(args.out_dir)
    _echo_config(args, out)
    csv = ["parameter,value,method,k,precision,accuracy,seconds"]
    for m in methods:
        base = _pipeline_config(args, m)
        if args.sweep != "none" and m != "swe" and args.sweep in ("L", "reference"):
            sweep = [("", base)]
        else:
            sweep = list(_sweep_configs(args, base))
        for value, cfg in sweep:
            rep = evaluate_repeated(cfg, train, test, args.ks, args.repeats)
            stem = f"report-{rep.method}" + (f"-{args.sweep}-{value}" if value != "" else "")
            rep.write(out, stem)
            for method, k, p, a, s in rep.csv_rows():
                csv.append(f"{args.sweep},{value},{method},{k},{p:.6f},{a:.6f},{s:.6f}")
    path = out / (f"sweep-{args.sweep}.csv" if args.sweep != "none" else "results.csv")
    path.write_text("\n".join(csv) + "\n")
    print(path)
    return path


def cmd_bench(args) -> Path:
    methods = args.methods.split(",")
    for m in methods:
        if m not in bench.BENCH_METHODS:
            raise _UsageError(f"unknown method {m!r}")
    if args.reps < bench.MIN_REPS:
        raise _UsageError(f"--reps must be >= {bench.MIN_REPS}")
    out = Path(args.out_dir)
    _echo_config(args, out)
    rows = bench.run_bench(args.Ns, args.Ls, args.d, methods, args.reps, args.seed, args.M)
    path = out / "bench.csv"
    path.write_text(bench.rows_to_csv(rows))
    print(path)
    return path


COMMANDS = {"gen": cmd_gen, "embed": cmd_embed, "index": cmd_index, "query": cmd_query,
            "eval": cmd_eval, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"slosh {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"slosh {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
