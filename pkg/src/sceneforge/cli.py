"""Command-line entry point: ``sceneforge {scan,plan,render,verify,stats,eval,schedule,rerun}``.

Exit codes::

    0  success
    1  unexpected internal error
    2  usage or configuration error
    3  empty corpus
    4  unsatisfiable scene or degenerate signal
    5  per-scene failures (render/eval) or missing enhanced files
    6  dataset verification failed
    7  asset resolution error
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .catalog import DATA_ROOT_ENV, assign_pools, brir_stats, corpus_stats, dump_catalog, load_catalog, noise_stats, scan
from .errors import (
    AssetResolutionError,
    ConfigError,
    DegenerateSignalError,
    EmptyCorpusError,
    InvalidArgumentError,
    UnsatisfiableSceneError,
)
from .metrics import EvalOptions, evaluate_pairs, plot_report
from .renderer import build_dataset, verify_dataset
from .sampler import DatasetManifest, SamplerConfig, corpus_weights, plan_dataset, repetition_stats, schedule_epochs

log = logging.getLogger("sceneforge")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_EMPTY, EXIT_SCENE, EXIT_FAILURES, EXIT_VERIFY, EXIT_ASSET = range(8)
VAL_SEED_OFFSET = 1_000_003
RUN_CONFIG_NAME = "run_config.json"


class UsageError(Exception):
    pass


def _data_root(args, fallback: Path) -> Path:
    root = args.data_root or os.environ.get(DATA_ROOT_ENV)
    return Path(root) if root else fallback


def _scan_root(cache: Path) -> Path:
    """Asset root recorded by the ``scan`` run that wrote ``cache``, else the cache's directory."""
    run = _run_config_path(cache, False)
    try:
        saved = json.loads(run.read_text())["args"]
        if saved.get("command") == "scan":
            return Path(saved.get("data_root") or Path(saved["config"]).parent)
    except (OSError, ValueError, KeyError, TypeError):
        pass
    return cache.parent


def _catalog(args):
    path = Path(args.catalog)
    if not path.is_file():
        raise ConfigError(f"catalog cache {path} not found")
    return load_catalog(path, _data_root(args, _scan_root(path)))


def _require(args, *names):
    for name in names:
        if getattr(args, name) in (None, ""):
            raise UsageError(f"{args.command}: --{name.replace('_', '-')} is required")


def _write_run_config(args, target: Path) -> None:
    """Serialize the resolved arguments so that ``sceneforge rerun`` reproduces the run."""
    skip = {"func", "verbose"}
    resolved = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    for k, v in resolved.items():
        if k in PATH_ARGS and v is not None:
            resolved[k] = str(Path(v).resolve())
    target.write_text(json.dumps({"sceneforge": __version__, "args": resolved}, indent=2) + "\n")


def _run_config_path(out: Path, is_dir: bool) -> Path:
    return out / RUN_CONFIG_NAME if is_dir else out.with_name(out.name + ".run.json")


# --------------------------------------------------------------------------
# Commands


def cmd_scan(args) -> int:
    _require(args, "config", "out")
    config = Path(args.config)
    if not config.is_file():
        raise ConfigError(f"catalog config {config} not found")
    catalog = scan(_data_root(args, config.parent), config, workers=args.workers)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dump_catalog(catalog, out)
    _write_run_config(args, _run_config_path(out, False))
    print(f"{len(catalog)} items -> {out}", file=sys.stderr)
    return EXIT_OK


def _sampler_config(args) -> SamplerConfig:
    if not args.config:
        return SamplerConfig()
    try:
        data = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read sampler config: {exc}") from exc
    return SamplerConfig.from_dict(data)


def split_setup(split: str, seed: int, config: SamplerConfig):
    """Pool side, dataset seed and weighting for a split.

    Validation reuses the training pools with a shifted seed; validation and
    test draw corpora uniformly.
    """
    if split == "train":
        return "train", seed, config.corpus_weighting
    if split == "val":
        return "train", seed + VAL_SEED_OFFSET, "uniform"
    if split == "test":
        return "test", seed, "uniform"
    raise UsageError(f"unknown split {split!r}")


def cmd_plan(args) -> int:
    _require(args, "catalog", "hours", "out")
    if not args.hours > 0:
        raise UsageError("--hours must be positive")
    catalog = _catalog(args)
    config = _sampler_config(args)
    side, dataset_seed, weighting = split_setup(args.split, args.seed, config)
    pools = assign_pools(catalog, seed=args.pool_seed)[side]
    weights = corpus_weights(corpus_stats(catalog), weighting)
    manifest = plan_dataset(args.hours, pools, config, dataset_seed, weights=weights)
    manifest.split = args.split
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    manifest.write(out)
    _write_run_config(args, _run_config_path(out, False))
    print(f"{len(manifest)} scenes, {manifest.total_duration_s / 3600:.3f} h -> {out}", file=sys.stderr)
    return EXIT_OK


def cmd_render(args) -> int:
    _require(args, "catalog", "manifest", "out")
    catalog = _catalog(args)
    manifest = DatasetManifest.read(args.manifest)
    out = Path(args.out)
    report = build_dataset(
        manifest,
        catalog,
        out,
        workers=args.workers,
        sample_format="pcm16" if args.pcm16 else "float32",
        write_interferer=not args.no_interferer,
    )
    _write_run_config(args, _run_config_path(out, True))
    for f in report["failures"]:
        print(f"scene {f['scene_id']}: {f['error']}", file=sys.stderr)
    print(f"{report['scene_count']} scenes, {report['total_duration_s']:.1f} s -> {out}", file=sys.stderr)
    if report["failure_count"]:
        return EXIT_FAILURES
    if args.verify:
        return _report_verification(verify_dataset(out))
    return EXIT_OK


def _report_verification(result) -> int:
    for f in result["flagged"]:
        print(f"scene {f['scene_id']}: {'; '.join(f['reasons'])}", file=sys.stderr)
    print(json.dumps({k: v for k, v in result.items() if k != "flagged"}))
    return EXIT_OK if result["ok"] else EXIT_VERIFY


def cmd_verify(args) -> int:
    _require(args, "dataset")
    return _report_verification(verify_dataset(args.dataset))


def cmd_stats(args) -> int:
    _require(args, "catalog")
    catalog = _catalog(args)
    result = {
        "speech": {c: s.rounded() for c, s in corpus_stats(catalog).items()},
        "noise": noise_stats(catalog),
        "brir": brir_stats(catalog),
    }
    if args.manifest:
        manifest = DatasetManifest.read(args.manifest)
        result["repetition"] = repetition_stats(manifest, catalog, args.repetition_mode).to_dict()
        result["scenes"] = len(manifest)
        result["total_duration_s"] = manifest.total_duration_s
    text = json.dumps(result, indent=2) + "\n"
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        _write_run_config(args, _run_config_path(out, False))
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_eval(args) -> int:
    _require(args, "dataset", "enhanced", "out")
    options = EvalOptions(
        trim=args.trim,
        allow_missing=args.allow_missing,
        scale_invariant=args.si_snr,
        pesq_command=args.pesq_cmd,
        pesq_concurrency=args.pesq_concurrency,
        workers=args.workers,
    )
    report = evaluate_pairs(args.dataset, args.enhanced, options)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_json(out / "metrics.json")
    if args.csv:
        report.write_csv(out / "metrics.csv")
    if args.plot and report.per_scene:
        plot_report(report, out / "metrics.svg")
    _write_run_config(args, _run_config_path(out, True))
    for sid in report.missing:
        print(f"scene {sid}: enhanced file missing", file=sys.stderr)
    for e in report.errors:
        print(f"scene {e['scene_id']}: {e['error']}", file=sys.stderr)
    print(json.dumps(report.aggregate))
    if report.errors or (report.missing and not args.allow_missing):
        return EXIT_FAILURES
    return EXIT_OK


def cmd_schedule(args) -> int:
    _require(args, "hours")
    if not args.hours > 0:
        raise UsageError("--hours must be positive")
    if not args.budget > 0:
        raise UsageError("--budget must be positive")
    print(schedule_epochs(args.hours, args.budget))
    return EXIT_OK


def cmd_rerun(args) -> int:
    data = json.loads(Path(args.run_config).read_text())
    saved = data["args"]
    argv = [saved["command"]]
    for key, value in saved.items():
        if key == "command" or value is None or value is False:
            continue
        flag = "--" + key.replace("_", "-")
        argv.extend([flag] if value is True else [flag, str(value)])
    return main(argv)


PATH_ARGS = {"config", "out", "catalog", "manifest", "data_root", "dataset", "enhanced"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="catalog config (scan) or sampler config (plan), JSON")
    common.add_argument("--seed", type=int, default=0, help="dataset seed (default 0)")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="parallel workers")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--data-root", help=f"asset root; overrides ${DATA_ROOT_ENV}")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sceneforge", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", parents=[common], help="scan assets into a catalog cache")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("plan", parents=[common], help="draw a dataset manifest")
    p.add_argument("--catalog")
    p.add_argument("--hours", type=float)
    p.add_argument("--split", choices=("train", "val", "test"), default="train")
    p.add_argument("--pool-seed", type=int, default=0, help="seed of the 80/20 utterance split")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("render", parents=[common], help="render a manifest to WAV files")
    p.add_argument("--catalog")
    p.add_argument("--manifest")
    p.add_argument("--pcm16", action="store_true", help="write 16-bit PCM instead of 32-bit float")
    p.add_argument("--no-interferer", action="store_true", help="skip the interferer files")
    p.add_argument("--verify", action="store_true", help="re-check every scene after building")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("verify", parents=[common], help="re-check a built dataset")
    p.add_argument("--dataset")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("stats", parents=[common], help="corpus statistics and repetition shares")
    p.add_argument("--catalog")
    p.add_argument("--manifest")
    p.add_argument("--repetition-mode", choices=("all", "later"), default="all")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("eval", parents=[common], help="score enhanced files against a dataset")
    p.add_argument("--dataset")
    p.add_argument("--enhanced")
    p.add_argument("--pesq-cmd", help="command template with {ref} {deg} {rate} placeholders")
    p.add_argument("--pesq-concurrency", type=int, default=4)
    p.add_argument("--allow-missing", action="store_true")
    p.add_argument("--trim", action="store_true", help="trim unequal files to the shortest")
    p.add_argument("--si-snr", action="store_true", help="use scale-invariant SNR")
    p.add_argument("--csv", action="store_true")
    p.add_argument("--plot", action="store_true", help="write an SVG summary figure")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("schedule", parents=[common], help="epochs for a dataset size at constant updates")
    p.add_argument("--hours", type=float)
    p.add_argument("--budget", type=float, default=3000.0, help="epochs x hours (default 3000)")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("rerun", help="repeat a run from its serialized run config")
    p.add_argument("run_config")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EmptyCorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (UnsatisfiableSceneError, DegenerateSignalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENE
    except AssetResolutionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ASSET
    except InvalidArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        log.exception("unexpected failure")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
