"""Command-line entry point: ``proxyhash <command> [options]``.

Exit codes: 0 success, 2 usage or file-format problems, 3 numeric failure
during training. Options can also come from ``--config FILE`` holding
``key=value`` lines (keys are option names without the leading dashes);
explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .codespace import load_codes, save_codes
from .data_io import SplitSpec, load_dataset, read_labels, save_dataset, split, synth_generate, write_labels
from .errors import ConfigError, FormatError, ProxyHashError, TrainingError
from .objectives import Hyperparams
from .retrieval import RetrievalSet, write_csv, write_eval_csvs
from .trainer import VARIANTS, SgdConfig, encode, fit, load_model, save_model, variant_hyperparams

log = logging.getLogger("proxyhash")

SWEEP_PARAMS = {"alpha": "alpha", "beta": "beta", "eta": "eta", "mu": "mu", "lambda": "lam", "gamma": "gamma"}


class UsageError(ProxyHashError):
    pass


def _add_hyperparams(p: argparse.ArgumentParser) -> None:
    d = Hyperparams()
    s = SgdConfig()
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--bits", type=int, default=d.bits)
    p.add_argument("--alpha", type=float, default=d.alpha)
    p.add_argument("--beta", type=float, default=d.beta)
    p.add_argument("--eta", type=float, default=d.eta)
    p.add_argument("--mu", type=float, default=d.mu)
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam)
    p.add_argument("--gamma", type=float, default=d.gamma)
    p.add_argument("--lr", type=float, default=s.learning_rate)
    p.add_argument("--batch", type=int, default=s.batch_size)
    p.add_argument("--epochs", type=int, default=s.epochs, help="max epochs of the modality phase")
    p.add_argument("--phnet-lr", type=float, default=s.phnet_learning_rate)
    p.add_argument("--phnet-epochs", type=int, default=s.phnet_epochs)
    p.add_argument("--seed", type=int, default=s.seed)
    p.add_argument("--query", type=int, default=None, help="query-set size (default: min(500, n // 5))")
    p.add_argument("--train-size", type=int, default=None, help="training subset size (default: whole retrieval set)")
    p.add_argument("--n", dest="cutoff", type=int, default=5000, help="MAP cutoff")
    p.add_argument("--standardize", action="store_true", help="z-score features with training statistics")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proxyhash", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="key=value file of default options")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic paired dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--categories", type=int, default=8)
    p.add_argument("--n", type=int, default=2500)
    p.add_argument("--dv", type=int, default=64)
    p.add_argument("--dt", type=int, default=64)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument(
        "--sigma-mode",
        choices=("relative", "absolute"),
        default="relative",
        help="relative: sigma is a multiple of the per-coordinate prototype gap",
    )
    p.add_argument("--multi-prob", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the proxy, image and text networks")
    _add_hyperparams(p)
    p.add_argument("--out", required=True, help="model directory")
    p.add_argument("--eval", action="store_true", help="also evaluate both tasks on the query split")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="hash one modality of a dataset with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--modality", required=True, choices=("img", "txt"))
    p.add_argument("--out", required=True)
    p.add_argument("--subset", choices=("all", "query", "retrieval", "train"), default="all")
    p.add_argument("--labels-out", help="also write the subset's labels.u8 here")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("eval", help="MAP, P@N and PR curves for packed codes")
    p.add_argument("--query-codes", required=True)
    p.add_argument("--query-labels", required=True)
    p.add_argument("--set-codes", required=True)
    p.add_argument("--set-labels", required=True)
    p.add_argument("--task", required=True, choices=("i2t", "t2i"))
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and compare method variants")
    _add_hyperparams(p)
    p.add_argument("--variant", nargs="+", choices=VARIANTS, default=list(VARIANTS))
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="MAP as one hyperparameter varies")
    _add_hyperparams(p)
    p.add_argument("--param", required=True, choices=tuple(SWEEP_PARAMS))
    p.add_argument("--values", required=True, nargs="+", type=float)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def _read_config(path) -> dict[str, str]:
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for line in lines:
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _convert(action, raw: str):
    if action.nargs in ("+", "*"):
        return [action.type(v) if action.type else v for v in raw.split()]
    if action.const is True:
        return raw.lower() in ("1", "true", "yes")
    return action.type(raw) if action.type else raw


def _apply_config(parser, argv):
    """Parse ``argv`` with defaults taken from the ``--config`` file, if any."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        config = _read_config(known.config)
        for sub in parser._subparsers._group_actions[0].choices.values():
            for action in sub._actions:
                names = {opt.lstrip("-").replace("-", "_") for opt in action.option_strings}
                hit = names & config.keys()
                if hit:
                    try:
                        action.default = _convert(action, config[hit.pop()])
                    except ValueError as exc:
                        raise UsageError(f"{known.config}: bad value for {action.dest}: {exc}") from exc
                    action.required = False
    return parser.parse_args(argv)


def _configs(args, variant="full"):
    hp = Hyperparams(args.alpha, args.beta, args.eta, args.mu, args.lam, args.gamma, args.bits)
    sgd = SgdConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        seed=args.seed,
        phnet_learning_rate=args.phnet_lr,
        phnet_epochs=args.phnet_epochs if args.epochs > 0 else 0,
    )
    return variant_hyperparams(hp, variant), sgd


def _split_for(args, n):
    query = args.query if args.query is not None else min(500, n // 5)
    train = args.train_size if args.train_size is not None else n - query
    return split(n, SplitSpec(query, train, args.seed))


def _write_manifest(path: Path, entries: dict) -> None:
    lines = [f"{k}={entries[k]}" for k in sorted(entries)]
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def _standardizer(train_x):
    mean = train_x.mean(axis=0, dtype=np.float64)
    std = train_x.std(axis=0, dtype=np.float64)
    std[std == 0] = 1.0
    return np.stack([mean, std])


def _save_indices(path: Path, idx) -> None:
    path.write_text("".join(f"{int(i)}\n" for i in idx), encoding="ascii")


def _load_indices(path: Path) -> np.ndarray:
    if not path.exists():
        raise FormatError(f"{path}: missing split file")
    return np.array([int(x) for x in path.read_text().split()], dtype=np.int64)


def _features(model_dir: Path, data, modality):
    x = data.features(modality).astype(np.float64)
    norm = model_dir / f"norm_{modality}.f64"
    if norm.exists():
        stats = np.frombuffer(norm.read_bytes(), "<f8").reshape(2, -1)
        if stats.shape[1] != x.shape[1]:
            raise FormatError(f"{norm}: width {stats.shape[1]} != feature width {x.shape[1]}")
        x = (x - stats[0]) / stats[1]
    return x


def train_and_evaluate(args, data, out_dir: Path, variant="full", evaluate=True):
    """Shared body of ``train``, ``ablate`` and ``sweep``; returns (map_i2t, map_t2i)."""
    hp, sgd = _configs(args, variant)
    sp = _split_for(args, data.n)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.standardize:
        for modality in ("img", "txt"):
            stats = _standardizer(data.features(modality)[sp.train].astype(np.float64))
            (out_dir / f"norm_{modality}.f64").write_bytes(stats.astype("<f8").tobytes())
    else:
        for modality in ("img", "txt"):
            (out_dir / f"norm_{modality}.f64").unlink(missing_ok=True)
    xv = _features(out_dir, data, "img")
    xt = _features(out_dir, data, "txt")
    train = type(data)(xv[sp.train], xt[sp.train], data.labels[sp.train])
    if args.epochs == 0:
        log.warning("--epochs 0: writing untrained networks")
    model = fit(train, hp, sgd, variant)
    save_model(out_dir, model)
    write_csv(out_dir / "loss.csv", ["epoch", "phase", "loss"], model.loss_rows())
    for name, idx in (("query", sp.query), ("retrieval", sp.retrieval), ("train", sp.train)):
        _save_indices(out_dir / f"{name}.idx", idx)
    manifest = {"variant": variant, "data": args.data, "query": len(sp.query), "train_size": len(sp.train)}
    manifest.update(asdict(hp))
    manifest.update(asdict(sgd))
    manifest.update(standardize=args.standardize, cutoff=args.cutoff)
    _write_manifest(out_dir / "manifest.txt", manifest)
    if not evaluate:
        return None
    if len(sp.query) == 0:
        raise UsageError("evaluation needs a non-empty query split (--query)")
    maps = {}
    for task, q_net, q_x, r_net, r_x in (
        ("i2t", model.img_net, xv, model.txt_net, xt),
        ("t2i", model.txt_net, xt, model.img_net, xv),
    ):
        rset = RetrievalSet(encode(r_net, r_x[sp.retrieval]), data.labels[sp.retrieval])
        queries = encode(q_net, q_x[sp.query])
        maps[task] = write_eval_csvs(out_dir / f"eval_{task}", task, queries, data.labels[sp.query], rset, _cutoff(args.cutoff, len(rset)))
    print(f"{variant}: MAP i2t={maps['i2t']:.4f} t2i={maps['t2i']:.4f} ({model.state.epoch} epochs)")
    return maps["i2t"], maps["t2i"]


def _cutoff(n, m, warn=False):
    if n <= 0:
        raise UsageError("--n must be positive")
    if n > m:
        (log.warning if warn else log.info)("cutoff %d exceeds retrieval set size %d; clamped", n, m)
    return min(n, m)


def cmd_gen_data(args):
    if args.n <= 0:
        raise UsageError("--n must be positive")
    src = synth_generate(
        args.categories, args.n, args.dv, args.dt, args.sigma, args.multi_prob, args.seed,
        sigma_is_relative=args.sigma_mode == "relative",
    )
    try:
        save_dataset(args.out, src.data)
    except OSError as exc:
        raise UsageError(f"cannot write {args.out}: {exc}") from exc
    d = src.data
    print(f"wrote {args.out}: n={d.n} c={d.c} d_v={d.d_v} d_t={d.d_t} mean labels/row={d.labels.sum(1).mean():.3f}")


def cmd_train(args):
    data = load_dataset(args.data)
    train_and_evaluate(args, data, Path(args.out), evaluate=args.eval)
    print(f"model written to {args.out}")


def cmd_encode(args):
    model_dir = Path(args.model)
    model = load_model(model_dir)
    data = load_dataset(args.data)
    net = model.network(args.modality)
    x = _features(model_dir, data, args.modality)
    if x.shape[1] != net.input_dim:
        raise UsageError(f"model expects {net.input_dim} {args.modality} features, data has {x.shape[1]}")
    idx = np.arange(data.n) if args.subset == "all" else _load_indices(model_dir / f"{args.subset}.idx")
    if idx.size and idx.max() >= data.n:
        raise UsageError(f"split indices exceed dataset size {data.n}")
    codes = encode(net, x[idx])
    save_codes(args.out, codes)
    if args.labels_out:
        write_labels(args.labels_out, data.labels[idx])
    print(f"wrote {len(codes)} codes of {codes.k} bits to {args.out}")


def cmd_eval(args):
    queries = load_codes(args.query_codes)
    rcodes = load_codes(args.set_codes)
    if queries.k != rcodes.k:
        raise UsageError(f"code length mismatch: queries k={queries.k}, set k={rcodes.k}")
    q_labels = read_labels(args.query_labels, len(queries))
    r_labels = read_labels(args.set_labels, len(rcodes))
    if q_labels.shape[1] != r_labels.shape[1]:
        raise UsageError("query and set labels have different category counts")
    rset = RetrievalSet(rcodes, r_labels)
    value = write_eval_csvs(args.out_dir, args.task, queries, q_labels, rset, _cutoff(args.n, len(rset), warn=True))
    print(f"{args.task}: MAP={value:.4f}")


def cmd_ablate(args):
    data = load_dataset(args.data)
    out = Path(args.out_dir)
    rows = []
    for variant in dict.fromkeys(args.variant):
        i2t, t2i = train_and_evaluate(args, data, out / variant, variant)
        rows.append([variant, variant_hyperparams(_configs(args)[0], variant).gamma, i2t, t2i])
    write_csv(out / "ablation.csv", ["variant", "gamma", "map_i2t", "map_t2i"], rows)


def cmd_sweep(args):
    values = list(dict.fromkeys(args.values))
    if len(values) < len(args.values):
        log.warning("duplicate sweep values dropped")
    data = load_dataset(args.data)
    out = Path(args.out_dir)
    dest = SWEEP_PARAMS[args.param]
    rows = []
    for value in values:
        setattr(args, dest, value)
        i2t, t2i = train_and_evaluate(args, data, out / f"{args.param}={value!r}")
        rows.append([value, i2t, t2i])
    write_csv(out / "sweep.csv", ["value", "map_i2t", "map_t2i"], rows)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(f"proxyhash: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args.func(args)
    except TrainingError as exc:
        print(f"proxyhash: training failed: {exc}", file=sys.stderr)
        return 3
    except (UsageError, ConfigError, FormatError, ProxyHashError) as exc:
        print(f"proxyhash: error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, NotADirectoryError) as exc:
        print(f"proxyhash: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
