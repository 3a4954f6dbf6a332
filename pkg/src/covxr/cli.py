"""``covxr`` command line: prepare, train, evaluate, predict, saliency, report.

Exit codes: 0 success, 1 internal error, 2 bad input or configuration.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import dataset, evaluation, model, preprocess, report, saliency
from . import train as training
from .config import ConfigError, load_config
from .errors import CovXRError, SerializationFailure, UnreadableImage, UnwritableDirectory

log = logging.getLogger("covxr")

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}
CLASS_NAMES = {
    **dict.fromkeys(["0", "negative", "neg", "normal", "non-covid", "noncovid", "non_covid", "covid-negative"], 0),
    **dict.fromkeys(["1", "positive", "pos", "covid", "covid-19", "covid19", "covid_19", "covid-positive"], 1),
}


class LayoutError(CovXRError, ValueError):
    pass


def _overrides(args) -> dict[str, str]:
    pairs = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        pairs[k.strip()] = v.strip()
    if getattr(args, "seed", None) is not None:
        pairs["seed"] = str(args.seed)
    if getattr(args, "threshold", None) is not None:
        pairs["eval.threshold"] = str(args.threshold)
    return pairs


def _config(args):
    return load_config(getattr(args, "config", None), _overrides(args))


def scan_class_folders(raw_dir) -> dataset.DatasetManifest:
    """Build a manifest from ``raw_dir/<class>/<image>``."""
    raw_dir = Path(raw_dir)
    if not raw_dir.is_dir():
        raise LayoutError(f"{raw_dir} is not a directory")
    records = []
    for entry in sorted(raw_dir.iterdir()):
        if entry.name.startswith("."):
            continue
        if not entry.is_dir():
            raise LayoutError(f"unexpected file {entry} at the top level; expected <class>/<image> folders")
        label = CLASS_NAMES.get(entry.name.lower())
        if label is None:
            raise LayoutError(
                f"unknown class folder {entry.name!r}; use one of "
                f"{sorted(k for k, v in CLASS_NAMES.items() if v == 0)} for negatives or "
                f"{sorted(k for k, v in CLASS_NAMES.items() if v == 1)} for positives"
            )
        for f in sorted(entry.rglob("*")):
            if f.is_file() and f.suffix.lower() in IMAGE_SUFFIXES:
                records.append(dataset.SampleRecord(str(f.resolve()), label))
    if not records:
        raise LayoutError(f"no images found under {raw_dir}")
    return dataset.DatasetManifest(tuple(records), raw_dir.name)


def cmd_prepare(args) -> int:
    manifest = scan_class_folders(args.raw_dir)
    dataset.save_manifest(manifest, args.out_manifest)
    counts = manifest.class_counts()
    print(f"negative: {counts[0]}")
    print(f"positive: {counts[1]}")
    print(f"total: {len(manifest)}")
    print(f"wrote {args.out_manifest}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(args.out_dir)
    cfg.write_snapshot(out)
    full = dataset.load_manifest(args.train_manifest)
    balanced = dataset.balance_classes(full, cfg.seed)
    tr, va = dataset.split_train_val(balanced, cfg.train_fraction, cfg.seed)
    dataset.save_manifest(tr, out / "train_split.csv")
    dataset.save_manifest(va, out / "val_split.csv")
    log.info("balanced %d -> %d records; train %d, validation %d", len(full), len(balanced), len(tr), len(va))
    clf = model.build_classifier(cfg.model, use_pretrained=cfg.pretrained, seed=cfg.seed)
    tcfg = replace(cfg.train, seed=cfg.seed, checkpoint_dir=str(out))
    hist = training.train(clf, tr, va, tcfg, cfg.augment, cfg.threshold)
    log.info("best epoch %d, checkpoint %s", hist.best_epoch, hist.best_checkpoint_path)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    out = Path(args.out_dir)
    cfg.write_snapshot(out)
    clf = model.load_checkpoint(args.checkpoint)
    test = dataset.load_manifest(args.test_manifest)
    rep = evaluation.evaluate(clf, test, cfg.threshold, cfg.augment, cfg.train.batch_size, cfg.train.workers)
    report.write_metrics_json(rep, out / "metrics.json")
    report.plot_confusion(rep.confusion, out / "confusion.png")
    cm = rep.confusion
    print(f"tp={cm.tp} fn={cm.fn} tn={cm.tn} fp={cm.fp}")
    print(f"accuracy={rep.accuracy:.4f} sensitivity={rep.sensitivity:.4f} "
          f"specificity={rep.specificity:.4f} f1={rep.f1_paper:.4f}")
    return 0


def _load_input(path, cfg):
    raw = dataset.read_image(path)
    return raw, preprocess.preprocess_eval(raw, cfg.augment)


def cmd_predict(args) -> int:
    cfg = _config(args)
    clf = model.load_checkpoint(args.checkpoint)
    _, x = _load_input(args.image_path, cfg)
    p = float(model.predict_proba(clf, x.values[None])[0])
    print(f"{args.image_path} {p!r} {int(p >= cfg.threshold)}")
    return 0


def cmd_saliency(args) -> int:
    cfg = _config(args)
    clf = model.load_checkpoint(args.checkpoint)
    raw, x = _load_input(args.image_path, cfg)
    smap = saliency.input_gradient_saliency(clf, x)
    comp = saliency.overlay(smap, raw, args.alpha)
    p = float(model.predict_proba(clf, x.values[None])[0])
    png, meta = saliency.write_overlay(
        comp, args.out_png, args.alpha,
        checkpoint_sha256=model.file_digest(args.checkpoint),
        checkpoint=str(args.checkpoint),
        image=str(args.image_path),
        probability=p,
    )
    print(f"wrote {png} and {meta}")
    return 0


def cmd_report(args) -> int:
    hist = training.read_history(args.history_path)
    rep = report.read_metrics_json(args.eval_json)
    bundle = report.build_report(hist, rep, args.out_dir)
    for p in bundle.paths():
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="covxr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p, threshold=True):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int)
        if threshold:
            p.add_argument("--threshold", type=float)
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    p = sub.add_parser("prepare", help="build a manifest CSV from <class>/<image> folders")
    p.add_argument("raw_dir")
    p.add_argument("out_manifest")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="balance, split and train")
    p.add_argument("train_manifest")
    p.add_argument("--out-dir", default="covxr-run")
    add_config(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a test manifest")
    p.add_argument("checkpoint")
    p.add_argument("test_manifest")
    p.add_argument("--out-dir", default="covxr-eval")
    add_config(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="print '<path> <probability> <label>' for one image")
    p.add_argument("checkpoint")
    p.add_argument("image_path")
    add_config(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("saliency", help="write a saliency overlay PNG and JSON sidecar")
    p.add_argument("checkpoint")
    p.add_argument("image_path")
    p.add_argument("out_png")
    p.add_argument("--alpha", type=float, default=0.5)
    add_config(p)
    p.set_defaults(func=cmd_saliency)

    p = sub.add_parser("report", help="curves, confusion plot and metrics JSON")
    p.add_argument("history_path")
    p.add_argument("eval_json")
    p.add_argument("--out-dir", default="covxr-report")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, PermissionError, UnreadableImage, SerializationFailure,
            UnwritableDirectory) as exc:
        print(f"covxr {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"covxr {args.command}: internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
