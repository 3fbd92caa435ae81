"""Command-line front end.

Exit codes: 0 success, 1 domain or validation failure, 2 I/O or parse failure.
"""

import argparse
import json
import logging
import sys

import numpy as np

from . import bench, dataio
from .embedding import embed
from .exceptions import RFSSError, UsageError
from .features import build_registry, cooccurrence_matrix, load_registry, save_registry, sparsity_stats
from .kernel_oracle import kernel_matrix
from .learner import TrainConfig, evaluate, load_model, make_teacher, save_model, train, write_predictions_csv
from .skeleton import complexity, sigma_prime_at_one, validate

EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 1, 2
SYNTH_LOCALITY = {"iid": 0.0, "local": 0.8}

log = logging.getLogger("rfss")


class CLIError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _skeleton(path, require_valid=True):
    try:
        sk = dataio.load_skeleton(path)
    except dataio.ConfigParseError as exc:
        raise CLIError(str(exc), EXIT_IO) from exc
    if require_valid:
        problems = validate(sk)
        if problems:
            raise CLIError("invalid skeleton:\n  " + "\n  ".join(problems), EXIT_DOMAIN)
    return sk


def _inputs(args, sk):
    if args.data and args.synth:
        raise CLIError("give either --data or --synth, not both", EXIT_DOMAIN)
    if args.data:
        return dataio.read_dataset(args.data, sk)
    if args.synth:
        kind, n = args.synth[0], args.synth[1] if len(args.synth) > 1 else None
        if kind not in SYNTH_LOCALITY or n is None:
            raise CLIError("--synth expects KIND N [locality] with KIND in {iid, local}", EXIT_DOMAIN)
        loc = float(args.synth[2]) if len(args.synth) > 2 else SYNTH_LOCALITY[kind]
        return bench.synth_inputs(sk, int(n), args.seed, loc), None
    raise CLIError("no input data: pass --data PATH or --synth KIND N [locality]", EXIT_DOMAIN)


def cmd_validate(args):
    sk = _skeleton(args.config, require_valid=False)
    problems = validate(sk)
    for p in problems:
        print(f"violation: {p}")
    if problems:
        return EXIT_DOMAIN
    print(f"ok: {sk.n_inputs} inputs, {len(sk.internal)} internal nodes, output {sk.output}")
    return EXIT_OK


def cmd_complexity(args):
    sk = _skeleton(args.config)
    total, per_node = complexity(sk, breakdown=True)
    print(f"C(S) = {total:.6f}")
    for v in sk.topological_order():
        if sk.is_input(v):
            print(f"  node {v}: input ({sk.space(v).kind}) C = 1.000000")
        else:
            node = sk.node(v)
            print(f"  node {v}: sigma'(1) = {sigma_prime_at_one(node.activation):.6f} "
                  f"x mean C{list(node.inputs)} -> C = {per_node[v]:.6f}")
    return EXIT_OK


def _print_stats(stats):
    print(f"draws {stats['draws']}")
    print(f"distinct {stats['distinct_count']}")
    print(f"dedup_ratio {stats['dedup_ratio']:.6f}")
    print(f"mean_atoms {stats['mean_atoms']:.6f}")
    print(f"max_atoms {stats['max_atoms']}")


def cmd_features(args):
    sk = _skeleton(args.config)
    reg = build_registry(sk, args.q, args.seed, args.threads)
    save_registry(reg, args.out)
    _print_stats(sparsity_stats(reg))
    return EXIT_OK


def cmd_bench(args):
    sk = _skeleton(args.config)
    batch, _ = _inputs(args, sk)
    budgets = [int(b) for b in args.budgets.split(",")]
    reports = bench.run_approx_experiment(sk, batch, budgets, args.trials, args.seed,
                                          real_mode=args.real, n_jobs=args.threads,
                                          phases=args.phases)
    if args.out:
        bench.write_reports_csv(reports, args.out)
    print(bench.summary_table(reports))
    return EXIT_OK


def cmd_cooccur(args):
    sk = _skeleton(args.config)
    reg = build_registry(sk, args.q, args.seed, args.threads)
    res = cooccurrence_matrix(reg, sk.n_inputs)
    dataio.write_matrix_csv(args.out, res.corr, [str(v) for v in range(1, sk.n_inputs + 1)])
    flagged = np.flatnonzero(res.degenerate) + 1
    if flagged.size:
        print(f"zero-variance nodes (correlations set to 0): {flagged.tolist()}")
    off = res.corr[~np.eye(sk.n_inputs, dtype=bool)]
    if off.size:
        print(f"off-diagonal correlation: mean {off.mean():.4f} min {off.min():.4f} max {off.max():.4f}")
    return EXIT_OK


def cmd_synth(args):
    sk = _skeleton(args.config)
    batch = bench.synth_inputs(sk, args.n, args.seed, args.locality)
    labels = None
    if args.teacher:
        labels = make_teacher(sk, args.teacher, args.seed)(batch)
    dataio.write_dataset(args.out, sk, batch, labels)
    return EXIT_OK


def _embedded(args, sk, real_seed, phases):
    try:
        reg = load_registry(args.registry, sk)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CLIError(f"{args.registry}: cannot parse registry ({exc})", EXIT_IO) from exc
    batch, labels = dataio.read_dataset(args.data, sk)
    E = embed(reg, batch, sk, real_mode=True, real_seed=real_seed, phases=phases).values
    return reg, E, labels


def cmd_train(args):
    sk = _skeleton(args.config)
    reg, E, labels = _embedded(args, sk, args.real_seed, args.phases)
    if labels is None:
        raise CLIError(f"{args.data} has no '{dataio.LABEL}' column", EXIT_DOMAIN)
    if args.auto_lambda:
        B, rho = args.auto_lambda
        config = TrainConfig(auto=(B, rho), C=sk.feature_bound(), loss=args.loss,
                             classification=args.classification)
    else:
        config = TrainConfig(lam=args.lam, loss=args.loss, classification=args.classification)
    model = train(E, labels, config)
    model.registry_hash = reg.skeleton_hash + f":{reg.master_seed}:{reg.draws}"
    model.real_seed = args.real_seed
    model.phases = args.phases
    save_model(model, args.out)
    print(f"lambda {model.lam:.6g}")
    for k, v in evaluate(model, E, labels).items():
        print(f"train_{k} {v:.6f}")
    return EXIT_OK


def cmd_predict(args):
    sk = _skeleton(args.config)
    try:
        model = load_model(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise CLIError(f"{args.model}: cannot read model ({exc})", EXIT_IO) from exc
    reg, E, labels = _embedded(args, sk, model.real_seed, model.phases)
    if model.registry_hash and model.registry_hash != reg.skeleton_hash + f":{reg.master_seed}:{reg.draws}":
        raise CLIError("model was trained on a different registry", EXIT_DOMAIN)
    write_predictions_csv(model.predict(E), args.out)
    if labels is not None:
        for k, v in evaluate(model, E, labels).items():
            print(f"{k} {v:.6f}")
    return EXIT_OK


def cmd_embed(args):
    sk = _skeleton(args.config)
    reg, E, _ = _embedded(args, sk, args.real_seed, args.phases)
    dataio.write_matrix_csv(args.out, E, [f"f{d}" for d in range(E.shape[1])])
    return EXIT_OK


def cmd_kernel(args):
    sk = _skeleton(args.config)
    batch, _ = _inputs(args, sk)
    K = kernel_matrix(sk, batch)
    dataio.write_matrix_csv(args.out, K, [f"x{j}" for j in range(K.shape[1])])
    return EXIT_OK


def _add_data_args(p):
    p.add_argument("--data", help="CSV dataset in the flat column layout")
    p.add_argument("--synth", nargs="+", metavar="ARG",
                   help="synthesize inputs: KIND N [locality], KIND in {iid, local}")


def build_parser():
    parser = argparse.ArgumentParser(prog="rfss", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="skeleton config (JSON)")
        p.set_defaults(func=func)
        return p

    command("validate", cmd_validate, "check a skeleton config")
    command("complexity", cmd_complexity, "print C(S) and the per-node recurrence")

    p = command("features", cmd_features, "sample a feature registry")
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)

    p = command("bench", cmd_bench, "kernel-approximation error report")
    _add_data_args(p)
    p.add_argument("--budgets", default="64,256,1024,4096")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--real", dest="real", action="store_true")
    mode.add_argument("--complex", dest="real", action="store_false")
    p.set_defaults(real=False)
    p.add_argument("--phases", choices=["entry", "draw"], default="entry",
                   help="real mode: one phase shift per distinct feature, or per raw draw")
    p.add_argument("--threads", type=int, default=1)

    p = command("cooccur", cmd_cooccur, "node co-occurrence correlation matrix")
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)

    p = command("synth", cmd_synth, "write a synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--locality", type=float, default=0.0)
    p.add_argument("--teacher", type=int, metavar="CENTERS",
                   help="add a label column from a random kernel expansion with this many centers")
    p.add_argument("--out", required=True)

    for name, func, help_ in (("train", cmd_train, "fit a linear model on real embeddings"),
                              ("predict", cmd_predict, "predict with a saved model"),
                              ("embed", cmd_embed, "export real-mode embeddings as CSV")):
        p = command(name, func, help_)
        p.add_argument("--registry", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True)
        if name == "predict":
            p.add_argument("--model", required=True)
        else:
            p.add_argument("--real-seed", type=int, default=0)
            p.add_argument("--phases", choices=["entry", "draw"], default="entry",
                           help="one phase shift per distinct feature, or per raw draw")
        if name == "train":
            reg = p.add_mutually_exclusive_group()
            reg.add_argument("--lambda", dest="lam", type=float, default=1e-3)
            reg.add_argument("--auto-lambda", nargs=2, type=float, metavar=("B", "RHO"))
            p.add_argument("--loss", choices=["squared", "logistic"], default="squared")
            p.add_argument("--classification", action="store_true")

    p = command("kernel", cmd_kernel, "exact kernel matrix as CSV")
    _add_data_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (RFSSError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
