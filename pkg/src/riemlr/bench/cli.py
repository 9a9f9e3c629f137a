"""Command-line entry point: ``riemlr {gen-data,train,eval,check,gradcheck}``.

Exit status is 0 on success, 1 when an invariant, a training run or an
evaluation fails, and 2 on usage errors (bad flags, bad config values,
unreadable files).
"""

import argparse
import sys

from ..exceptions import DivergenceError, ParameterDomainError
from . import data as bdata
from . import suites, train as btrain
from .config import CLASSIFIERS, load_config

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
CHECK_SUITES = tuple(suites.SUITES) + ("all",)


class UsageError(Exception):
    pass


def _common(p, classifier=True):
    p.add_argument("--config", metavar="PATH", help="key=value config file; flags override it")
    if classifier:
        p.add_argument("--classifier", choices=CLASSIFIERS)
        p.add_argument("--theta", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", metavar="PATH", help="output file (default: stdout)")


def build_parser():
    parser = argparse.ArgumentParser(prog="riemlr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic dataset")
    _common(p)

    p = sub.add_parser("train", help="train one classifier and write its CSV report")
    _common(p)
    p.add_argument("--data", metavar="PATH", help="dataset file (default: generate from the config)")
    p.add_argument("--model", metavar="PATH", help="also save the fitted model here (.npz)")
    p.add_argument("--min-acc", type=float, help="exit 1 if final test accuracy is below this")

    p = sub.add_parser("eval", help="accuracy of a saved model")
    _common(p, classifier=False)
    p.add_argument("--model", metavar="PATH", required=True)
    p.add_argument("--data", metavar="PATH", help="dataset file (default: regenerate from the model config)")
    p.add_argument("--split", choices=("train", "test", "all"), default="test")

    p = sub.add_parser("check", help="run invariant suites")
    p.add_argument("suite", nargs="?", default="all", choices=CHECK_SUITES)
    _common(p, classifier=False)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    _common(p)
    return parser


def _config_from(args):
    keys = ("classifier", "theta", "alpha", "beta", "epochs", "lr", "seed")
    overrides = {k: getattr(args, k, None) for k in keys}
    try:
        return load_config(args.config, **overrides)
    except (ValueError, ParameterDomainError, KeyError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None


def _emit(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _load_data(path):
    try:
        return bdata.load(path)
    except OSError as exc:
        raise UsageError(f"cannot read dataset: {exc}") from None
    except ValueError as exc:
        raise UsageError(f"malformed dataset {path}: {exc}") from None


def cmd_gen_data(args):
    cfg = _config_from(args)
    _emit(bdata.dumps(btrain.make_dataset(cfg)), args.out)
    return EXIT_OK


def cmd_train(args):
    cfg = _config_from(args)
    dataset = _load_data(args.data) if args.data else btrain.make_dataset(cfg)
    try:
        report, clf = btrain.train(dataset, cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    except DivergenceError as exc:
        print(f"training diverged at epoch {exc.epoch}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _emit(report.to_csv(), args.out)
    if args.model:
        btrain.save_model(clf, cfg, args.model)
    final = report.final
    print(
        f"{cfg.classifier}: test_acc={final.test_acc:.4f} train_acc={final.train_acc:.4f} "
        f"epochs={cfg.epochs} seconds={report.seconds:.2f} digest={report.digest}",
        file=sys.stderr,
    )
    if args.min_acc is not None and final.test_acc < args.min_acc:
        return EXIT_FAIL
    return EXIT_OK


def cmd_eval(args):
    try:
        clf, cfg = btrain.load_model(args.model)
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot load model: {exc}") from None
    dataset = _load_data(args.data) if args.data else btrain.make_dataset(cfg)
    if dataset.kind != cfg.data_kind:
        raise UsageError(f"model expects {cfg.data_kind} data, got {dataset.kind}")
    acc = btrain.evaluate(clf, dataset, args.split)
    _emit(f"classifier={cfg.classifier} split={args.split} accuracy={acc:.17g}\n", args.out)
    return EXIT_OK


def _run_check(name, args, **kwargs):
    seed = 0 if args.seed is None else args.seed
    report = suites.run_suite(name, seed=seed, **kwargs)
    _emit(report.format() + "\n", args.out)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_check(args):
    return _run_check(args.suite, args)


def cmd_gradcheck(args):
    classifiers = [args.classifier] if args.classifier else None
    return _run_check("gradients", args, classifiers=classifiers)


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "check": cmd_check,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"riemlr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
