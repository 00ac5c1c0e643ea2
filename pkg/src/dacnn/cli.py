"""Command-line pipeline: ``augment``, ``train``, ``eval``, ``regress``.

Exit codes: 0 success, 2 usage/config/format error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path


from . import augment, config, evaluate, nn, quantile, trainer
from .errors import DacnnError, NumericalFailure
from .mnist_io import load_dataset

log = logging.getLogger("dacnn")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"file not found: {p}")
    return p


def _echo_config(cfg: config.RunConfig, path: Path) -> None:
    path.write_text(cfg.to_text())


def cmd_augment(args, cfg: config.RunConfig) -> int:
    base = load_dataset(_require(args.images), _require(args.labels))
    out = _out_dir(args) / f"{args.name or 'augmented'}.daaug"
    count = len(base) * cfg.replicas
    parts = augment.iter_expanded(base, cfg.replicas, cfg.q_lo, cfg.q_hi, cfg.scheme, cfg.seed)
    augment.save_augmented_stream(parts, out, count, cfg.scheme, cfg.seed)
    _echo_config(cfg, out.with_suffix(".config"))
    print(f"base={len(base)} replicas={cfg.replicas} samples={count} scheme={cfg.scheme} -> {out}")
    return EXIT_OK


def cmd_train(args, cfg: config.RunConfig) -> int:
    data = augment.load_augmented(_require(args.dataset))
    data = augment.filter_min_q(data, cfg.qmin)
    net = nn.init_parameters(nn.build_lenet_like(cfg.num_classes), cfg.seed)
    out = _out_dir(args)
    tag = args.name or cfg.mode
    print(f"training mode={cfg.mode} samples={len(data)} epochs={cfg.epochs} parameters={net.n_parameters}")
    trained = trainer.train(
        data, net, cfg.train_config(), cfg.rbf_config(),
        callback=lambda e, loss, acc: print(f"epoch {e} loss {loss:.5f} accuracy {acc:.4f}", flush=True),
    )
    model_path = out / f"model_{tag}.dacnn"
    trainer.save_model(trained, model_path)
    trainer.write_history_csv(trained.history, out / f"history_{tag}.csv")
    _echo_config(cfg, out / f"run_{tag}.config")
    print(f"model -> {model_path}")
    return EXIT_OK


def cmd_eval(args, cfg: config.RunConfig) -> int:
    trained = trainer.load_model(_require(args.model))
    test = augment.load_augmented(_require(args.test))
    if len(test) == 0:
        raise UsageError(f"{args.test}: test file holds no samples")
    records = evaluate.evaluate_model(trained, test)
    report = evaluate.metrics_report(records, cfg.error_free_denominator, cfg.population)
    out = _out_dir(args)
    stem = args.name or Path(args.model).stem
    evaluate.export_correlation_field(records, out / f"{stem}_field.csv")
    (out / f"{stem}_metrics.txt").write_text(report.as_text() + "\n")
    (out / f"{stem}_metrics.csv").write_text(
        "model," + report.csv_header() + "\n" + f"{stem}," + report.csv_row() + "\n")
    _echo_config(cfg, out / f"{stem}_eval.config")
    print(f"model={stem} mode={trained.mode_trained}")
    print(report.as_text())
    return EXIT_OK


def cmd_regress(args, cfg: config.RunConfig) -> int:
    records = evaluate.read_correlation_field(_require(args.field))
    if len(records) == 0:
        raise UsageError(f"{args.field}: no records")
    edges = cfg.breakpoint_list()
    fits, problems = quantile.fit_interval_models(records, cfg.tau, edges, cfg.min_points, cfg.population)
    table = quantile.empirical_bin_medians(records, cfg.bin_width, edges[0], edges[-1], cfg.population)
    out = _out_dir(args)
    stem = args.name or Path(args.field).stem
    quantile.write_fits_csv(fits, out / f"{stem}_fits_tau{cfg.tau:g}.csv")
    quantile.write_bins_csv(table, out / f"{stem}_bins.csv")
    _echo_config(cfg, out / f"{stem}_regress.config")
    print("interval,beta0,beta1,adequacy")
    for (lo, hi), _ in quantile.interval_masks([], edges):
        fit = next((f for f in fits if f is not None and f.interval == (lo, hi)), None)
        if fit is None:
            print(f"[{lo:g},{hi:g}],absent,absent,absent  # {problems[(lo, hi)]}")
            continue
        try:
            dev = f"{quantile.adequacy_check(fit, table, closed=hi == edges[-1]):.6f}"
        except DacnnError:
            dev = "n/a"
        print(f"[{lo:g},{hi:g}],{fit.beta0:.6f},{fit.beta1:.6f},{dev}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--name", help="output file stem")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any configuration key")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dacnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("augment", parents=[common], help="blur-expand an IDX dataset")
    p.add_argument("images")
    p.add_argument("labels")
    p.add_argument("--scheme", choices=["grid", "random"])
    p.add_argument("--replicas", type=int)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", parents=[common], help="train the baseline or head-conditioned network")
    p.add_argument("dataset")
    p.add_argument("--mode", choices=["baseline", "rbf"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--qmin", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="metrics and correlation field of a model")
    p.add_argument("model")
    p.add_argument("test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("regress", parents=[common], help="interval quantile regression of a correlation field")
    p.add_argument("field")
    p.add_argument("--tau", type=float)
    p.set_defaults(func=cmd_regress)
    return parser


def _overrides(args) -> dict:
    values = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        values[key.strip()] = value
    for key in ("seed", "mode", "epochs", "qmin", "scheme", "replicas", "tau"):
        if getattr(args, key, None) is not None:
            values[key] = getattr(args, key)
    return values


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        cfg = config.resolve(args.config, _overrides(args))
        return args.func(args, cfg)
    except NumericalFailure as exc:
        print(f"dacnn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, DacnnError, OSError) as exc:
        print(f"dacnn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
