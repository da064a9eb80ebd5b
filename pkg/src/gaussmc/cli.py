"""Command-line interface: ``gaussmc {fit,predict,benchmark,synth}``.

Exit codes: 0 success, 1 numerical failure, 2 I/O or validation failure.
"""
import argparse
import csv
import logging
import os
import sys
import time

import numpy as np

from . import data, evaluation, modelio, plotting, report, synth
from .em import EmConfig, run_em
from .errors import DimensionMismatch, GaussmcError, NumericalError, ValidationError
from .gaussian import NoiseModel

log = logging.getLogger("gaussmc")


# --- argument parsing ------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="key=value file of defaults; flags override it")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads (default: all CPUs); results do not depend on it")
    p.add_argument("--output-dir", default=".")
    p.add_argument("-v", "--verbose", action="store_true")


def _dataset(p, min_user=0, min_item=0):
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("movielens", "csv"), default=None,
                   help="default: movielens for *.dat files, csv otherwise")
    p.add_argument("--rating-min", type=float, default=None)
    p.add_argument("--rating-max", type=float, default=None)
    p.add_argument("--min-user-ratings", type=int, default=min_user)
    p.add_argument("--min-item-ratings", type=int, default=min_item)
    p.add_argument("--sample-users", type=int, default=None,
                   help="keep a random subset of this many users after filtering")


def _em(p):
    p.add_argument("--epsilon", type=float, default=0.3)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--noise-var", type=float, default=0.0)
    p.add_argument("--init-fill", type=float, default=3.0)
    p.add_argument("--orientation", choices=("rows", "columns"), default="rows")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gaussmc", description="Matrix completion with a Gaussian prior and MAP-EM.")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a Gaussian model to a ratings file")
    _common(fit)
    _dataset(fit)
    _em(fit)
    fit.add_argument("--model-name", default="model.gmm")

    pred = sub.add_parser("predict", help="predict ratings for users under a saved model")
    _common(pred)
    pred.add_argument("--model", required=True)
    pred.add_argument("--input", required=True, help="observed ratings of the users to predict")
    pred.add_argument("--format", choices=("movielens", "csv"), default=None)
    pred.add_argument("--request", default=None,
                      help="CSV of user,item pairs to predict (default: every item for every user)")
    pred.add_argument("--noise-var", type=float, default=None,
                      help="default: the value the model was fitted with")
    pred.add_argument("--rating-min", type=float, default=None)
    pred.add_argument("--rating-max", type=float, default=None)
    pred.add_argument("--no-round", action="store_true", help="write raw MAP estimates")

    bench = sub.add_parser("benchmark", help="weak or strong generalization benchmark")
    _common(bench)
    _dataset(bench, min_user=20, min_item=2)
    _em(bench)
    bench.add_argument("--protocol", choices=("weak", "strong"), required=True)
    bench.add_argument("--runs", type=int, default=3)
    bench.add_argument("--n-test-users", type=int, default=None)
    bench.add_argument("--observed-fraction", type=float, default=0.5)
    bench.add_argument("--factor", type=float, default=None,
                       help="NMAE normalizer (default derived from the rating range)")
    bench.add_argument("--no-round", action="store_true",
                       help="score raw estimates instead of rounded integer ratings")
    bench.add_argument("--manifest", action="store_true", help="write each run's split as CSV")

    syn = sub.add_parser("synth", help="generate a synthetic dataset from a known Gaussian")
    _common(syn)
    syn.add_argument("--n-users", type=int, required=True)
    syn.add_argument("--n-items", type=int, required=True)
    syn.add_argument("--density", type=float, default=0.5, help="observed fraction 1/C")
    syn.add_argument("--rank", type=int, default=3)
    syn.add_argument("--scale", type=float, default=1.0)
    syn.add_argument("--diag-var", type=float, default=0.1)
    return parser


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        dests = {a.dest for a in sub._actions}
        values = {}
        for key, value in report.read_kv(args.config).items():
            dest = key.replace("-", "_")
            if dest not in dests:
                raise ValidationError(f"{args.config}: unknown option {key!r}")
            values[dest] = value
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


# --- helpers ------------------------------------------------------------------------

def _guess_format(path, fmt):
    if fmt:
        return fmt
    return "movielens" if path.endswith(".dat") else "csv"


def _rating_range(args):
    if args.rating_min is None and args.rating_max is None:
        return None
    if args.rating_min is None or args.rating_max is None:
        raise ValidationError("--rating-min and --rating-max must be given together")
    return (args.rating_min, args.rating_max)


def _load_dataset(args):
    m = data.load_ratings(args.input, _guess_format(args.input, args.format), _rating_range(args))
    if args.min_user_ratings or args.min_item_ratings:
        m = data.filter_matrix(m, args.min_user_ratings, args.min_item_ratings)
    if args.sample_users:
        m = data.sample_users(m, args.sample_users, args.seed)
    log.info("dataset: %d users x %d items, %d ratings (density %.4f)",
             m.n_users, m.n_items, len(m), m.density)
    return m


def _em_config(args):
    return EmConfig(epsilon=args.epsilon, iterations=args.iterations,
                    noise=NoiseModel(args.noise_var), init_fill=args.init_fill,
                    orientation=args.orientation)


def _echo(args, skip=("config", "verbose", "workers", "output_dir", "command")):
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}


def _outdir(args):
    os.makedirs(args.output_dir, exist_ok=True)
    return args.output_dir


def _write_echo(args, outdir):
    report.write_kv(os.path.join(outdir, "run.cfg"), {"command": args.command, **_echo(args)})


# --- commands -----------------------------------------------------------------------

def cmd_fit(args):
    m = _load_dataset(args)
    config = _em_config(args)
    result = run_em(m, config, args.workers)
    outdir = _outdir(args)
    labels = m.item_ids if config.orientation == "rows" else m.user_ids
    meta = {**{f"config.{k}": v for k, v in config.echo().items()},
            "input": args.input, "rating_min": m.rating_range[0], "rating_max": m.rating_range[1],
            "n_signals": m.n_users if config.orientation == "rows" else m.n_items}
    path = os.path.join(outdir, args.model_name)
    modelio.save_model(path, result.model, meta, labels)
    report.write_trace_csv(os.path.join(outdir, "trace.csv"), result.trace)
    plotting.plot_traces([result.trace], os.path.join(outdir, "trace.png"))
    _write_echo(args, outdir)
    print(f"wrote {path} (dim {result.model.dim}, {config.iterations} iterations)")
    return 0


def _read_requests(path):
    pairs = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (lineno == 1 and row[:2] == ["user", "item"]):
                continue
            if len(row) < 2:
                raise ValidationError(f"{path}:{lineno}: expected user,item")
            pairs.append((row[0].strip(), row[1].strip()))
    return pairs


def cmd_predict(args):
    model, meta = modelio.load_model(args.model)
    if meta.get("config.orientation", "rows") != "rows":
        raise ValidationError("predict needs a model fitted with --orientation rows")
    labels = meta.get("labels") or [str(k) for k in range(model.dim)]
    col = {lab: k for k, lab in enumerate(labels)}
    obs = data.load_ratings(args.input, _guess_format(args.input, args.format))
    unknown = [i for i in obs.item_ids if i not in col]
    if unknown:
        raise DimensionMismatch(
            f"{len(unknown)} items are not in the model's item universe (e.g. {unknown[0]!r})")
    item_map = np.array([col[i] for i in obs.item_ids], dtype=np.intp)
    observed = data.Triplets(obs.users, item_map[obs.items], obs.ratings)
    user_index = {u: k for k, u in enumerate(obs.user_ids)}
    if args.request:
        pairs = _read_requests(args.request)
        extra = [u for u, _ in pairs if u not in user_index]
        user_ids = list(obs.user_ids) + sorted(set(extra), key=extra.index)
        user_index = {u: k for k, u in enumerate(user_ids)}
        bad = [i for _, i in pairs if i not in col]
        if bad:
            raise DimensionMismatch(f"requested item {bad[0]!r} is not in the model's universe")
        req_u = np.array([user_index[u] for u, _ in pairs], dtype=np.intp)
        req_i = np.array([col[i] for _, i in pairs], dtype=np.intp)
    else:
        user_ids = list(obs.user_ids)
        req_u = np.repeat(np.arange(len(user_ids)), model.dim)
        req_i = np.tile(np.arange(model.dim), len(user_ids))
    requests = data.Triplets(req_u, req_i, np.zeros(req_u.size))
    noise_var = args.noise_var
    if noise_var is None:
        noise_var = float(meta.get("config.noise_var", 0.0))
    raw = evaluation.predict_users(model, observed, requests, NoiseModel(noise_var), args.workers)
    rng_ = _rating_range(args) or (float(meta["rating_min"]), float(meta["rating_max"]))
    outdir = _outdir(args)
    path = os.path.join(outdir, "predictions.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "item", "prediction"])
        for u, i, r in zip(req_u.tolist(), req_i.tolist(), raw.tolist()):
            value = repr(r) if args.no_round else evaluation.postprocess(r, rng_)
            w.writerow([user_ids[u], labels[i], value])
    _write_echo(args, outdir)
    print(f"wrote {path} ({req_u.size} predictions)")
    return 0


def cmd_benchmark(args):
    m = _load_dataset(args)
    config = _em_config(args)
    if args.runs < 1:
        raise ValidationError("--runs must be at least 1")
    factor = args.factor if args.factor is not None else evaluation.default_factor(m.rating_range)
    rounding = not args.no_round
    if args.protocol == "strong" and args.n_test_users is None:
        raise ValidationError("--n-test-users is required for the strong protocol")
    outdir = _outdir(args)
    runs, baselines, traces, seeds = [], [], [], []
    for r in range(args.runs):
        seed = args.seed + r
        t0 = time.perf_counter()
        if args.protocol == "weak":
            split = data.split_weak(m, seed)
            rep = evaluation.evaluate_weak(split, config, factor, args.workers, rounding, track=True)
            base = evaluation.baseline_weak(split, factor, rounding)
        else:
            split = data.split_strong(m, args.n_test_users, args.observed_fraction, seed)
            rep = evaluation.evaluate_strong(split, config, factor, args.workers, rounding,
                                             track=True)
            base = evaluation.baseline_strong(split, factor, rounding)
        if args.manifest:
            data.write_manifest(os.path.join(outdir, f"split_seed{seed}.csv"), split)
        log.info("run %d (seed %d): nmae %.4f, baseline %.4f, %.1fs",
                 r + 1, seed, rep.nmae, base.nmae, time.perf_counter() - t0)
        runs.append(rep)
        baselines.append(base)
        traces.append(rep.trace)
        seeds.append(seed)
    summary = evaluation.average_reports(runs, seeds)
    baseline = evaluation.average_reports(baselines, seeds)
    title = f"{args.protocol} generalization, {m.n_users} users x {m.n_items} items"
    text = report.format_table(summary, title, baseline)
    with open(os.path.join(outdir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    kv = {"protocol": args.protocol, **summary.as_dict(),
          "baseline_mae": baseline.mae, "baseline_nmae": baseline.nmae,
          "baseline_per_run_nmae": ",".join(repr(v) for v in baseline.per_run_nmae),
          **{f"config.{k}": v for k, v in _echo(args).items()}}
    report.write_kv(os.path.join(outdir, "report.kv"), kv)
    report.write_runs_csv(os.path.join(outdir, "runs.csv"), summary)
    plotting.plot_runs(summary, os.path.join(outdir, "nmae_runs.png"), baseline, title)
    plotting.plot_traces(traces, os.path.join(outdir, "trace.png"),
                         [f"seed {s}" for s in seeds])
    _write_echo(args, outdir)
    sys.stdout.write(text)
    return 0


def cmd_synth(args):
    ds = synth.generate(args.n_users, args.n_items, args.density, args.rank, args.scale,
                        args.diag_var, args.seed)
    outdir = _outdir(args)
    data.save_csv(ds.observed, os.path.join(outdir, "observed.csv"))
    u, i = np.indices(ds.truth.shape)
    truth = data.SparseRatingMatrix(
        ds.truth.shape[0], ds.truth.shape[1], u.ravel(), i.ravel(), ds.truth.ravel(),
        (float(ds.truth.min()), float(ds.truth.max())))
    data.save_csv(truth, os.path.join(outdir, "truth.csv"))
    modelio.save_model(os.path.join(outdir, "truth.gmm"), ds.model, _echo(args),
                       ds.observed.item_ids)
    _write_echo(args, outdir)
    print(f"wrote {len(ds.observed)} observed of {ds.truth.size} entries to {outdir}")
    return 0


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "benchmark": cmd_benchmark,
            "synth": cmd_synth}


def main(argv=None):
    try:
        args = parse_args(argv)
    except ValidationError as exc:
        print(f"gaussmc: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"gaussmc: numerical error: {exc}", file=sys.stderr)
        return 1
    except (GaussmcError, OSError) as exc:
        print(f"gaussmc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
