"""Command-line harness: data generation, training, evaluation, counterfactual
inference and the twin-network equivalence check.

Exit codes: 0 success, 1 domain error, 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config, write_resolved
from .errors import ConfigError, DTGNError, MissingCheckpointError, UnknownVariableError
from .tensor import load as load_archive
from .tensor import save as save_archive
from .tensor import stream

log = logging.getLogger("dtgn")

ABLATIONS = {"no-adversarial": "no_adversarial", "no-expert": "no_expert", "conditional-only": "conditional_only"}


class UsageError(ConfigError):
    pass


# helpers


def _config(args, overrides: dict | None = None) -> RunConfig:
    merged: dict = {}
    if args.seed is not None:
        merged["seed"] = args.seed
    merged.update(overrides or {})
    return load_config(args.config, merged)


def _workdir(args) -> Path:
    return Path(args.workdir)


def _stage_overrides(stage: str, args) -> dict:
    st = {}
    if getattr(args, "epochs", None) is not None:
        st["epochs"] = args.epochs
    if getattr(args, "batch_size", None) is not None:
        st["batch_size"] = args.batch_size
    return {"training": {stage: st}} if st else {}


def _load_echo(path: Path, cfg: RunConfig, report: dict | None = None):
    from .data.ingest import ingest_video_dir

    frames = cfg.data.frames
    # clips span two seconds: 64 frames at 32 fps, or the desk-scale equivalent
    return ingest_video_dir(path, frames=frames, fps=frames / 2.0, report=report)


def _load_glyphs(path: Path):
    from .data.glyphs import GlyphDataset

    if not path.is_file():
        raise MissingCheckpointError(f"glyph dataset {path} not found; run `data gen-glyph` first")
    arrays, _ = load_archive(path)
    return GlyphDataset.from_arrays(arrays)


def _require(path: Path, what: str, hint: str) -> Path:
    if not path.is_file():
        raise MissingCheckpointError(f"{what} checkpoint {path} not found; run `{hint}` first")
    return path


def _histogram(values, bins: int = 10) -> str:
    counts, edges = np.histogram(values, bins=bins, range=(0.0, 1.0))
    return " ".join(f"[{edges[i]:.1f},{edges[i + 1]:.1f}):{c}" for i, c in enumerate(counts))


# data


def cmd_gen_echo(args) -> int:
    from .data.echo import gen_echo_dataset
    from .data.ingest import split_counts, write_video_dir

    cfg = _config(args, {"data": {k: v for k, v in (("count", args.count), ("frames", args.frames),
                                                    ("size", args.size)) if v is not None}})
    out = Path(args.out) if args.out else _workdir(args) / "echo"
    samples = gen_echo_dataset(cfg.data.count, cfg.data.frames, cfg.data.size, stream(cfg.seed, "data-echo"),
                               ef_range=tuple(cfg.data.ef_range))
    write_video_dir(out, samples)
    write_resolved(cfg, out.parent, f"{out.name}.config.json")
    print(f"wrote {len(samples)} clips to {out}")
    print("splits: " + ", ".join(f"{k}={v}" for k, v in split_counts(samples).items()))
    print("EF histogram: " + _histogram([s.ef for s in samples]))
    return 0


def cmd_gen_glyph(args) -> int:
    from .data.glyphs import gen_morpho_dataset

    cfg = _config(args, {"data": {k: v for k, v in (("glyph_count", args.count), ("perturbations", args.perturbations),
                                                    ("glyph_size", args.size)) if v is not None}})
    out = Path(args.out) if args.out else _workdir(args) / "glyphs.dtgn"
    ds = gen_morpho_dataset(cfg.data.glyph_count, cfg.data.perturbations, stream(cfg.seed, "data-glyph"),
                            size=cfg.data.glyph_size)
    save_archive(out, ds.arrays(), {"kind": "glyph-dataset", "count": len(ds), "size": ds.size,
                                    "perturbations": cfg.data.perturbations, "seed": cfg.seed})
    write_resolved(cfg, out.parent, f"{out.stem}.config.json")
    print(f"wrote {len(ds)} glyphs x {cfg.data.perturbations} perturbations to {out}")
    print("classes: " + " ".join(f"{c}:{int((ds.labels == c).sum())}" for c in range(10)))
    return 0


def cmd_ingest(args) -> int:
    from .data.ingest import ingest_video_dir

    report: dict = {}
    samples = ingest_video_dir(args.path, frames=args.frames, fps=args.fps, min_seconds=args.min_seconds,
                               report=report)
    discarded = report["discarded"]
    print(f"listed: {report['listed']}")
    print(f"kept: {report['kept']}")
    if len(discarded) == 1:
        (reason, count), = discarded.items()
        print(f"discarded: {count} ({reason})")
    else:
        reasons = ", ".join(f"{v} {k}" for k, v in sorted(discarded.items()))
        print(f"discarded: {sum(discarded.values())}" + (f" ({reasons})" if reasons else ""))
    print("splits: " + ", ".join(f"{k}={v}" for k, v in report["splits"].items()))
    print("EF histogram: " + _histogram([s.ef for s in samples]))
    return 0


# training


def cmd_train(args) -> int:
    from . import training as tr

    stage = args.stage.replace("-", "_")
    overrides = _stage_overrides(stage, args)
    if getattr(args, "ablate", None):
        overrides.setdefault("training", {}).update({ABLATIONS[a]: True for a in args.ablate})
    cfg = _config(args, overrides)
    work = _workdir(args)
    work.mkdir(parents=True, exist_ok=True)
    tcfg = cfg.train_config(stage)
    ckpt = work / f"{args.stage}.dtgn"
    log_path = work / f"{args.stage}.log.jsonl"
    if args.stage == "expert":
        samples = _load_echo(Path(args.data or work / "echo"), cfg)
        result = tr.train_expert(tcfg, samples, ckpt, log_path, resume=args.resume)
        summary = f"best epoch {result.extra['best_epoch']}, validation MAE {result.extra['best_val_mae']:.4f}"
    elif args.stage == "vq":
        from .nn.models import VQConfig

        train, _ = tr.glyph_split(_load_glyphs(Path(args.data or work / "glyphs.dtgn")))
        vq_cfg = VQConfig(size=train.size, codebook_size=cfg.model.codebook_size, code_dim=cfg.model.code_dim,
                          hidden=cfg.model.vq_hidden)
        result = tr.train_vq(tcfg, train, ckpt, log_path, resume=args.resume, vq_config=vq_cfg)
        last = result.history[-1]
        summary = f"validation SSIM {last['val_ssim']:.4f}, codes used {last['val_codes_used']}"
    elif args.stage == "twin-supervised":
        vq = tr.load_vq(_require(Path(args.vq or work / "vq.dtgn"), "VQ", "train vq"))
        train, _ = tr.glyph_split(_load_glyphs(Path(args.data or work / "glyphs.dtgn")))
        result = tr.train_twin_supervised(tcfg, train, vq, ckpt, log_path, resume=args.resume,
                                          hidden=cfg.model.embedding_hidden)
        last = result.history[-1]
        summary = f"factual MSE {last['factual_mse']:.5f}, counterfactual MSE {last['counterfactual_mse']:.5f}"
    else:
        expert = tr.load_expert(_require(Path(args.expert or work / "expert.dtgn"), "expert", "train expert"))
        samples = _load_echo(Path(args.data or work / "echo"), cfg)
        result = tr.train_twin_semisupervised(tcfg, samples, expert, ckpt, log_path, resume=args.resume)
        last = result.history[-1]
        summary = f"reconstruction L1 {last['loss_reconstruction']:.4f}, expert L1 {last['loss_expert']:.4f}"
    write_resolved(cfg, work, f"{args.stage}.config.json")
    print(f"{args.stage}: {len(result.history)} epochs logged to {log_path}; checkpoint {ckpt}")
    print(summary)
    return 0


# evaluation and inference


def cmd_eval(args) -> int:
    from . import training as tr
    from .metrics import evaluate_glyph, evaluate_model

    kind = args.kind
    n_key = "glyph_n" if kind == "glyph" else "n"
    cfg = _config(args, {"eval": {n_key: args.n}} if args.n is not None else {})
    n = getattr(cfg.eval, n_key)
    work = _workdir(args)
    out = Path(args.out) if args.out else work / "eval"
    if kind == "glyph":
        gen = tr.load_embedding_generator(_require(work / "twin-supervised.dtgn", "twin-supervised",
                                                   "train twin-supervised"))
        vq = tr.load_vq(_require(Path(args.vq or work / "vq.dtgn"), "VQ", "train vq"))
        _, test = tr.glyph_split(_load_glyphs(Path(args.data or work / "glyphs.dtgn")))
        report = evaluate_glyph(gen, vq, test, n=n, seed=cfg.seed,
                                noise_variance=cfg.training.twin_supervised.noise_variance, config=cfg.to_dict())
    else:
        gen = tr.load_video_generator(_require(work / "twin.dtgn", "twin", "train twin"))
        expert = tr.load_expert(_require(Path(args.expert or work / "expert.dtgn"), "expert", "train expert"))
        samples = _load_echo(Path(args.data or work / "echo"), cfg)
        report = evaluate_model(gen, expert, samples, n=n, seed=cfg.seed, items=cfg.eval.items,
                                noise_variance=cfg.training.twin.noise_variance, sweep=cfg.eval.sweep,
                                config=cfg.to_dict())
    report.write(out)
    write_resolved(cfg, out)
    print(f"evaluated {len(report.rows)} items with n={n}; report in {out}")
    for side, vals in (("factual", report.factual), ("counterfactual", report.counterfactual)):
        print(f"{side:>14}: " + ", ".join(f"{k}={v:.4f}" for k, v in vals.items()))
    return 0


def _write_clip(directory: Path, clip: np.ndarray) -> None:
    from .data.pgm import write_pgm

    directory.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(clip):
        write_pgm(directory / f"frame_{t:04d}.pgm", frame)


def cmd_infer(args) -> int:
    from . import training as tr
    from .metrics import EXPERT_CLOSENESS, _noise_fn, _numpy_model, best_of_n, chamber_areas, ef_oracle_safe

    if not 0.0 <= args.ef <= 1.0:
        raise UsageError(f"--ef must lie in [0, 1], got {args.ef}")
    cfg = _config(args, {"eval": {"n": args.n}} if args.n is not None else {})
    work = _workdir(args)
    gen = tr.load_video_generator(_require(work / "twin.dtgn", "twin", "train twin"))
    expert = tr.load_expert(_require(Path(args.expert or work / "expert.dtgn"), "expert", "train expert"))
    samples = _load_echo(Path(args.data or work / "echo"), cfg)
    match = [s for s in samples if s.video_id == args.video]
    if not match:
        raise UnknownVariableError(f"no clip with id {args.video!r}")
    s = match[0]
    run, read = _numpy_model(gen), _numpy_model(expert)

    def pair(z, x, xs, u):
        return run(z, x, u), run(z, xs, u)

    v = s.video[None].astype(np.float32)
    x = np.array([s.ef], dtype=np.float32)
    xs = np.array([args.ef], dtype=np.float32)
    noise = _noise_fn(cfg.seed, gen.noise_shape(1), cfg.training.twin.noise_variance)
    sel = best_of_n(pair, noise, v, x, xs, cfg.eval.n, EXPERT_CLOSENESS, expert=read)
    out = Path(args.out)
    _write_clip(out / "factual", sel.y[0])
    _write_clip(out / "counterfactual", sel.y_star[0])
    areas = [chamber_areas(c) for c in (s.video, sel.y[0], sel.y_star[0])]
    with open(out / "areas.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "source_area", "factual_area", "counterfactual_area"])
        for t in range(len(s.video)):
            w.writerow([t] + [int(a[t]) for a in areas])
    write_resolved(cfg, out)
    print(f"{s.video_id}: factual EF {s.ef:.3f} -> requested {args.ef:.3f} (best of {cfg.eval.n}, draw "
          f"{int(sel.index[0])})")
    print(f"expert EF of counterfactual {float(read(sel.y_star)[0]):.3f}, oracle EF "
          f"{ef_oracle_safe(sel.y_star[0]):.3f}; clips and areas.csv in {out}")
    return 0


def cmd_twin_check(args) -> int:
    from .twin import equivalence_sweep

    if args.models < 1 or args.queries < 1:
        raise UsageError("--models and --queries must be >= 1")
    res = equivalence_sweep(args.models, args.queries, seed=args.seed)
    ok = res["max_deviation"] <= 1e-9
    print(f"models: {res['models']}, queries: {res['queries']}")
    print(f"max deviation: {res['max_deviation']:.3e} ({'<=' if ok else '>'} 1e-9)")
    print(f"twin network: {res['twin_seconds']:.3f} s, abduction-action-prediction: {res['aap_seconds']:.3f} s")
    return 0 if ok else 1


# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--workdir", default="runs", help="checkpoints, logs and default data live here")
    common.add_argument("--threads", type=int, default=None, help="BLAS threads (1 = fully deterministic)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dtgn", description="Deep twin generative networks at desk scale.")
    sub = p.add_subparsers(dest="command", required=True)

    data = sub.add_parser("data", help="generate or ingest datasets").add_subparsers(dest="action", required=True)
    g = data.add_parser("gen-echo", parents=[common])
    g.add_argument("--count", type=int)
    g.add_argument("--frames", type=int)
    g.add_argument("--size", type=int)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen_echo)
    g = data.add_parser("gen-glyph", parents=[common])
    g.add_argument("--count", type=int)
    g.add_argument("--perturbations", type=int)
    g.add_argument("--size", type=int)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen_glyph)
    g = data.add_parser("ingest", parents=[common])
    g.add_argument("path")
    g.add_argument("--frames", type=int, default=64)
    g.add_argument("--fps", type=float, default=32.0)
    g.add_argument("--min-seconds", type=float, default=2.0)
    g.set_defaults(func=cmd_ingest)

    train = sub.add_parser("train", help="train a model").add_subparsers(dest="stage", required=True)
    for stage in ("expert", "vq", "twin-supervised", "twin"):
        t = train.add_parser(stage, parents=[common])
        t.add_argument("--data", help="dataset directory (echo) or file (glyphs)")
        t.add_argument("--epochs", type=int)
        t.add_argument("--batch-size", type=int)
        t.add_argument("--resume", action="store_true", help="continue from the stage checkpoint")
        if stage == "twin":
            t.add_argument("--expert", help="expert checkpoint (default <workdir>/expert.dtgn)")
            t.add_argument("--ablate", nargs="+", choices=sorted(ABLATIONS), default=[])
        if stage == "twin-supervised":
            t.add_argument("--vq", help="VQ checkpoint (default <workdir>/vq.dtgn)")
        t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="best-of-n evaluation report")
    e.add_argument("--kind", choices=("echo", "glyph"), default="echo")
    e.add_argument("--n", type=int)
    e.add_argument("--data")
    e.add_argument("--expert")
    e.add_argument("--vq")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("infer", parents=[common], help="counterfactual clip for one video")
    i.add_argument("--video", required=True)
    i.add_argument("--ef", type=float, required=True)
    i.add_argument("--n", type=int)
    i.add_argument("--out", required=True)
    i.add_argument("--data")
    i.add_argument("--expert")
    i.set_defaults(func=cmd_infer)

    c = sub.add_parser("twin-check", parents=[common], help="twin network vs abduction-action-prediction")
    c.add_argument("--models", type=int, default=100)
    c.add_argument("--queries", type=int, default=5)
    c.set_defaults(func=cmd_twin_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.command == "twin-check" and args.seed is None:
        args.seed = 1
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        if args.threads is not None:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                return args.func(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"dtgn: configuration error: {exc}", file=sys.stderr)
        return 2
    except DTGNError as exc:
        print(f"dtgn: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
