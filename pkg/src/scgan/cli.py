"""``scgan`` command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import subprocess
import sys
from pathlib import Path


from . import __version__
from .config import ConfigError, RunConfig, load_config_file, resolved_document, validate_config
from .core import (ImagePatch, PatchFileError, data_path, jsonable,
                   load_paired_corpus, load_patch, load_unpaired_corpus, save_paired_corpus,
                   save_patch, save_raw_array, save_unpaired_corpus)

log = logging.getLogger("scgan")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_CHECKPOINT = 4

COMMANDS = ("synth", "train", "extract", "pairs", "denoise-train", "denoise", "eval", "ablate",
            "report")


class MissingCheckpoint(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scgan", description="Unsupervised noise modelling with SCGAN.")
    parser.add_argument("--version", action="version", version=f"scgan {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    helps = {
        "synth": "build an unpaired noisy/clean corpus",
        "train": "train the noise-extraction GAN",
        "extract": "extract noise maps from the corpus noisy set",
        "pairs": "construct a paired corpus with a trained generator",
        "denoise-train": "train the residual denoiser on constructed pairs",
        "denoise": "denoise a directory of PNGs",
        "eval": "evaluate generator (and denoiser) on held-out data",
        "ablate": "train and compare the Net-1/2/3 loss subsets",
        "report": "render plots and summary tables from run outputs",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory (all writes go under it)")
        p.add_argument("--preset", choices=("desk", "paper"))
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("train",):
            p.add_argument("--resume", help="checkpoint directory to resume from")
        if name in ("extract", "pairs", "eval"):
            p.add_argument("--checkpoint", help="generator checkpoint directory")
    return parser


def _git_version() -> str | None:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).parent)
    except (OSError, subprocess.SubprocessError):
        return None
    return out.stdout.strip() or None if out.returncode == 0 else None


def _resolve(args) -> RunConfig:
    doc = load_config_file(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.out is not None:
        doc["out"] = args.out
    cfg = validate_config(doc, preset=args.preset)
    if cfg.out is None:
        raise ConfigError(["out: an output directory is required (config 'out' or --out)"])
    return cfg


def _write_run_json(cfg: RunConfig, command: str):
    cfg.out.mkdir(parents=True, exist_ok=True)
    record = {"command": command, "seed": cfg.seed, "version": __version__,
              "git": _git_version(), "config": resolved_document(cfg)}
    (cfg.out / "run.json").write_text(json.dumps(jsonable(record), indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# helpers shared by commands

def _sources(cfg: RunConfig) -> list[ImagePatch]:
    from .synthesis import smooth_images

    corpus = cfg.section("corpus")
    if corpus.get("sources_dir"):
        d = data_path(corpus["sources_dir"])
        return [load_patch(f) for f in sorted(d.glob("*.png"))]
    syn = corpus["synthetic_sources"]
    return smooth_images(syn["count"], syn["size"], syn.get("seed", cfg.seed),
                         channels=syn.get("channels", 1))


def _corpus_dir(cfg: RunConfig) -> Path:
    return cfg.path("corpus", "dir") or cfg.out / "corpus"


def _load_corpus(cfg: RunConfig):
    path = _corpus_dir(cfg)
    if not (path / "manifest.json").is_file():
        raise ConfigError([f"corpus not found: {path} (run `scgan synth` or set corpus.dir)"])
    return load_unpaired_corpus(path)


def _latest_checkpoint(cfg: RunConfig, explicit: str | None) -> Path:
    if explicit or cfg.document.get("checkpoint"):
        path = data_path(explicit or cfg.document["checkpoint"])
    else:
        ckpts = sorted((cfg.out / "train" / "checkpoints").glob("epoch_*"))
        if not ckpts:
            raise MissingCheckpoint(f"no checkpoint under {cfg.out / 'train' / 'checkpoints'}")
        path = ckpts[-1]
    if not (path / "checkpoint.json").is_file():
        raise MissingCheckpoint(f"checkpoint not found: {path}")
    return path


def _load_generator(cfg, explicit):
    from .models import load_checkpoint

    ckpt = load_checkpoint(_latest_checkpoint(cfg, explicit))
    return ckpt.generator, ckpt.manifest.get("mean_subtract", cfg.mean_subtract)


def _held_out(cfg: RunConfig):
    from .evaluation import make_held_out
    from .synthesis import smooth_images

    h = cfg.section("held_out")
    syn = cfg.section("corpus").get("synthetic_sources") or {}
    size = cfg.section("corpus").get("patch_size") or syn.get("size", 32)
    clean = smooth_images(h.get("count", 50), size, h.get("seed", 99),
                          channels=syn.get("channels", 1))
    return make_held_out(clean, cfg.noise, h.get("seed", 99) + 1)


# ---------------------------------------------------------------------------
# commands

def cmd_synth(cfg: RunConfig, args):
    from .synthesis import build_unpaired_corpus

    corpus_cfg = cfg.section("corpus")
    corpus = build_unpaired_corpus(_sources(cfg), cfg.noise, corpus_cfg.get("split_ratio", 0.5),
                                   seed=cfg.seed, patch_size=corpus_cfg.get("patch_size"),
                                   patches_per_source=corpus_cfg.get("patches_per_source", 1))
    path = save_unpaired_corpus(corpus, cfg.out / "corpus")
    print(f"wrote {len(corpus.noisy_set)} noisy / {len(corpus.clean_set)} clean patches to {path}")


def cmd_train(cfg: RunConfig, args):
    from .training import train

    corpus = _load_corpus(cfg)
    resume = None
    if args.resume:
        resume = data_path(args.resume)
        if not (resume / "checkpoint.json").is_file():
            raise MissingCheckpoint(f"checkpoint not found: {resume}")
    res = train(corpus, cfg.schedule, cfg.generator, cfg.discriminator, seed=cfg.seed,
                out_dir=cfg.out / "train", checkpoint_every=cfg.checkpoint_every,
                resume_from=resume, mean_subtract=cfg.mean_subtract)
    print(f"trained {res.epochs_completed} epochs; metrics in {cfg.out / 'train' / 'metrics.csv'}")


def cmd_extract(cfg: RunConfig, args):
    from .evaluation import noise_stats
    from .pipeline import extract_noise_maps

    G, ms = _load_generator(cfg, args.checkpoint)
    corpus = _load_corpus(cfg)
    maps = extract_noise_maps(G, corpus.noisy_set, ms)
    out = cfg.out / "extract"
    for i, (n, m) in enumerate(zip(corpus.noisy_set, maps)):
        save_raw_array(m.values, out / f"{i:04d}_noise.f32")
        save_patch(ImagePatch(n.values - m.values), out / f"{i:04d}_estimate.png")
    s = noise_stats(maps, scale=255.0)
    (out / "stats.json").write_text(json.dumps(jsonable(s.summary()), indent=2, sort_keys=True))
    print(f"extracted {len(maps)} noise maps to {out} (std {s.std:.4f} in [0,1] units)")


def cmd_pairs(cfg: RunConfig, args):
    from .pipeline import construct_pairs, construct_sr_pairs

    G, ms = _load_generator(cfg, args.checkpoint)
    corpus = _load_corpus(cfg)
    pc = cfg.section("pairs")
    clean = corpus.clean_set
    if pc.get("clean_dir"):
        clean = [load_patch(f) for f in sorted(data_path(pc["clean_dir"]).glob("*.png"))]
    seed = pc.get("seed") if pc.get("seed") is not None else cfg.seed
    if pc.get("scale"):
        pairs = construct_sr_pairs(G, clean, corpus.noisy_set, pc["scale"], seed, ms)
    else:
        pairs = construct_pairs(G, corpus.noisy_set, clean, seed, ms)
    pairs.check_identity()
    save_paired_corpus(pairs, cfg.out / "pairs")
    print(f"wrote {len(pairs)} pairs to {cfg.out / 'pairs'}")


def cmd_denoise_train(cfg: RunConfig, args):
    from .pipeline import save_denoiser, train_denoiser

    pairs_dir = cfg.path("pairs_dir") or cfg.out / "pairs"
    if not (pairs_dir / "manifest.json").is_file():
        raise ConfigError([f"paired corpus not found: {pairs_dir}"])
    res = train_denoiser(load_paired_corpus(pairs_dir), cfg.denoiser, seed=cfg.seed)
    save_denoiser(res, cfg.out / "denoiser")
    with (cfg.out / "denoiser" / "metrics.csv").open("w") as fh:
        fh.write("epoch,step,loss\n")
        for row in res.history:
            fh.write(f"{row['epoch']},{row['step']},{row['loss']!r}\n")
    print(f"denoiser trained; final loss {res.final_loss:.6g}")


def _denoiser_dir(cfg: RunConfig) -> Path:
    path = cfg.path("denoiser_dir") or cfg.out / "denoiser"
    if not (path / "denoiser.json").is_file():
        raise MissingCheckpoint(f"denoiser checkpoint not found: {path}")
    return path


def cmd_denoise(cfg: RunConfig, args):
    from .pipeline import denoise, load_denoiser

    model = load_denoiser(_denoiser_dir(cfg))
    src = cfg.path("input_dir")
    if src is None:
        raise ConfigError(["input_dir: required for `denoise`"])
    files = sorted(src.glob("*.png"))
    for f in files:
        save_patch(denoise(model, load_patch(f)), cfg.out / "denoised" / f.name)
    print(f"denoised {len(files)} images into {cfg.out / 'denoised'}")


def cmd_eval(cfg: RunConfig, args):
    from .evaluation import evaluate_generator, mean_psnr

    held = _held_out(cfg)
    result = {"noisy_psnr_db": mean_psnr(held.noisy, held.clean)}
    G, ms = _load_generator(cfg, args.checkpoint)
    result["generator"] = evaluate_generator(G, held, ms)
    den = cfg.path("denoiser_dir") or cfg.out / "denoiser"
    if (den / "denoiser.json").is_file():
        from .pipeline import denoise, load_denoiser

        model = load_denoiser(den)
        out = [denoise(model, n) for n in held.noisy]
        result["denoiser_psnr_db"] = mean_psnr(out, held.clean)
        result["denoiser_gain_db"] = result["denoiser_psnr_db"] - result["noisy_psnr_db"]
    (cfg.out / "eval").mkdir(parents=True, exist_ok=True)
    (cfg.out / "eval" / "eval.json").write_text(json.dumps(jsonable(result), indent=2,
                                                           sort_keys=True))
    print(json.dumps(jsonable(result), indent=2, sort_keys=True))


def cmd_ablate(cfg: RunConfig, args):
    from .evaluation import grid_triples, report, run_ablation

    corpus = _load_corpus(cfg)
    held = _held_out(cfg)
    out = cfg.out / "ablation"
    results = run_ablation(corpus, cfg.schedule, held, cfg.generator, cfg.discriminator,
                           seed=cfg.seed, out_dir=out, mean_subtract=cfg.mean_subtract)
    stats = {k: v.summary for k, v in results.items()}
    (out / "variants.json").write_text(json.dumps(jsonable(stats), indent=2, sort_keys=True))
    grids = {k: grid_triples(v.generator, held.noisy, mean_subtract=cfg.mean_subtract)
             for k, v in results.items()}
    report({k: v.history for k, v in results.items()}, stats, out, grids)
    print(json.dumps(jsonable(stats), indent=2, sort_keys=True))


def cmd_report(cfg: RunConfig, args):
    from .evaluation import report
    from .training import read_metrics

    logs, stats = {}, {}
    ablation = cfg.out / "ablation"
    for name in ("net1", "net2", "net3"):
        m = ablation / name / "metrics.csv"
        if m.is_file():
            logs[name] = read_metrics(m)
    if (ablation / "variants.json").is_file():
        stats = json.loads((ablation / "variants.json").read_text())
    train_metrics = cfg.out / "train" / "metrics.csv"
    if train_metrics.is_file():
        logs["train"] = read_metrics(train_metrics)
    eval_json = cfg.out / "eval" / "eval.json"
    if eval_json.is_file():
        ev = json.loads(eval_json.read_text())
        row = dict(ev["generator"])
        if "denoiser_gain_db" in ev:
            row["psnr_gain_db"] = ev["denoiser_gain_db"]
        stats["train"] = row
    path = report(logs, stats, cfg.out / "report")
    print(f"report written to {path / 'summary.html'}")


HANDLERS = {
    "synth": cmd_synth, "train": cmd_train, "extract": cmd_extract, "pairs": cmd_pairs,
    "denoise-train": cmd_denoise_train, "denoise": cmd_denoise, "eval": cmd_eval,
    "ablate": cmd_ablate, "report": cmd_report,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
        _write_run_json(cfg, args.command)
        HANDLERS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"scgan {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingCheckpoint as exc:
        print(f"scgan {args.command}: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (PatchFileError, ValueError, OSError) as exc:
        print(f"scgan {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
