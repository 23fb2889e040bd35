"""Command-line entry point: ``lgss {synth,train,segment,evaluate,dump-corr}``."""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig
from .data import (atomic_write_text, generate_corpus, load_corpus, load_manifest,
                   manifest_paths, save_manifest)
from .grouping import GroupingTrace, dump_correlation, grouping_features, optimal_grouping
from .metrics import evaluate_corpus
from .sequence import binarize, predict_movie, train_pipeline

log = logging.getLogger("lgss")

BOUNDARY_HEADER = ["movie_id", "boundary", "time_s", "score", "bit"]


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file with dotted keys")
    common.add_argument("--profile", choices=["synthetic", "full"])
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key")
    common.add_argument("-v", "--verbose", action="store_true")

    grouping = argparse.ArgumentParser(add_help=False)
    grouping.add_argument("--tau", type=float)
    grouping.add_argument("--init-count", type=int, help="0 = cut wherever p > tau")
    grouping.add_argument("--j-min", type=int)
    grouping.add_argument("--j-max", type=int)
    grouping.add_argument("--beta", type=float)
    grouping.add_argument("--k-set", type=int)
    grouping.add_argument("--k-para", type=int)

    ap = argparse.ArgumentParser(prog="lgss", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic corpus")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--count", type=int)
    p.add_argument("--prefix", default="movie")

    p = sub.add_parser("train", parents=[common], help="train BNet + sequence model")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("segment", parents=[common, grouping], help="predict scene boundaries")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--coarse-only", action="store_true")

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against ground truth")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--window", type=float, default=3.0)

    p = sub.add_parser("dump-corr", parents=[common, grouping],
                       help="write super-shot correlation matrices per grouping iteration")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--movie", action="append", help="restrict to these movie ids")
    return ap


def _overrides(args) -> dict:
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    if args.profile:
        out["profile"] = args.profile
    if args.seed is not None:
        out["seed"] = args.seed
    flag_keys = {"tau": "segment.tau", "init_count": "grouping.init_count",
                 "j_min": "grouping.j_min", "j_max": "grouping.j_max", "beta": "grouping.beta",
                 "k_set": "grouping.k_set", "k_para": "grouping.k_para", "count": "synth.count"}
    for attr, key in flag_keys.items():
        if getattr(args, attr, None) is not None:
            out[key] = getattr(args, attr)
    return out


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write_text(path, buf.getvalue())


# ---------------------------------------------------------------- commands


def cmd_synth(args, cfg: RunConfig) -> None:
    args.out.mkdir(parents=True, exist_ok=True)
    for m in generate_corpus(cfg.synthetic(), cfg["synth.count"], args.prefix):
        save_manifest(m, args.out / f"{m.movie_id}.json")
    atomic_write_text(args.out / "config.json", cfg.dumps())


def cmd_train(args, cfg: RunConfig) -> None:
    corpus = load_corpus(args.corpus)
    if not corpus:
        raise ValueError(f"no manifests in {args.corpus}")
    args.out.mkdir(parents=True, exist_ok=True)
    bnet, seq = cfg.init_models(corpus[0].modality_dims)
    bnet, seq, history = train_pipeline(corpus, bnet, seq, cfg.train())
    save_checkpoint(args.out / "model.npz", bnet, seq)
    _write_csv(args.out / "loss.csv", ["epoch", "mean_loss", "step_size"],
               [(e, f"{loss:.8f}", f"{lr:g}") for e, loss, lr in history])
    atomic_write_text(args.out / "config.json", cfg.dumps())


class _Segmenter:
    def __init__(self, model_path, cfg: RunConfig, coarse_only: bool):
        self.bnet, self.seq = load_checkpoint(model_path)
        self.cfg = cfg
        self.coarse_only = coarse_only

    def __call__(self, manifest_path):
        m = load_manifest(manifest_path)
        try:
            p = predict_movie(m, self.bnet, self.seq)
            if self.coarse_only:
                bits = binarize(p, self.cfg["segment.tau"])
            else:
                bits = optimal_grouping(m, p, self.cfg.grouping())
        except Exception as exc:
            raise RuntimeError(f"movie {m.movie_id!r}: {exc}") from exc
        return m.movie_id, m.boundary_times(), p, bits


def write_predictions(out_dir: Path, movie_id, times, scores, bits) -> None:
    idx = np.arange(1, len(bits) + 1)
    _write_csv(out_dir / f"{movie_id}.boundaries.csv", BOUNDARY_HEADER,
               [(movie_id, int(i), f"{t:.6f}", repr(float(s)), int(b))
                for i, t, s, b in zip(idx, times, scores, bits) if b])
    _write_csv(out_dir / f"{movie_id}.scores.csv", BOUNDARY_HEADER,
               [(movie_id, int(i), f"{t:.6f}", repr(float(s)), int(b))
                for i, t, s, b in zip(idx, times, scores, bits)])


def read_predictions(pred_dir: Path, movie_id: str, n_boundaries: int):
    """(scores, bits) for one movie; falls back to the boundaries-only file."""
    scores = np.zeros(n_boundaries)
    bits = np.zeros(n_boundaries, dtype=np.int8)
    full = pred_dir / f"{movie_id}.scores.csv"
    path = full if full.exists() else pred_dir / f"{movie_id}.boundaries.csv"
    if not path.exists():
        raise FileNotFoundError(f"no predictions for movie {movie_id!r} in {pred_dir}")
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            i = int(row["boundary"])
            if not 1 <= i <= n_boundaries:
                raise ValueError(f"{path}: boundary {i} outside [1, {n_boundaries}]")
            scores[i - 1] = float(row["score"])
            bits[i - 1] = int(row["bit"])
    return scores, bits


def cmd_segment(args, cfg: RunConfig) -> None:
    paths = manifest_paths(args.corpus)
    args.out.mkdir(parents=True, exist_ok=True)
    seg = _Segmenter(args.model, cfg, args.coarse_only)
    for movie_id, times, p, bits in _map(seg, paths, args.jobs):
        write_predictions(args.out, movie_id, times, p, bits)
    atomic_write_text(args.out / "config.json", cfg.dumps())


def cmd_evaluate(args, cfg: RunConfig) -> None:
    corpus = load_corpus(args.corpus)
    preds, gts, times = {}, {}, {}
    for m in corpus:
        gts[m.movie_id] = m.gt_vector()
        times[m.movie_id] = m.boundary_times()
        preds[m.movie_id] = read_predictions(args.pred, m.movie_id, m.n_shots - 1)
    report = evaluate_corpus(preds, gts, times, args.window)
    if args.out.suffix != ".csv":
        args.out.mkdir(parents=True, exist_ok=True)
        args.out = args.out / "metrics.csv"
    atomic_write_text(args.out, report.to_csv())
    print(f"AP {report.ap:.4f}  Miou {report.miou:.4f}  Recall {report.recall:.4f}  "
          f"Recall@{args.window:g}s {report.recall_at_3s:.4f}")


def cmd_dump_corr(args, cfg: RunConfig) -> None:
    bnet, seq = load_checkpoint(args.model)
    args.out.mkdir(parents=True, exist_ok=True)
    wanted = set(args.movie or [])
    for m in load_corpus(args.corpus):
        if wanted and m.movie_id not in wanted:
            continue
        trace = GroupingTrace()
        optimal_grouping(grouping_features(m), predict_movie(m, bnet, seq), cfg.grouping(), trace)
        for it, sset in enumerate(trace.sets):
            dump_correlation(sset, args.out / f"{m.movie_id}.iter{it}.csv")
        atomic_write_text(args.out / f"{m.movie_id}.trace.csv", trace.to_csv())


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "segment": cmd_segment,
            "evaluate": cmd_evaluate, "dump-corr": cmd_dump_corr}


def run(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.build(args.config, _overrides(args))
        COMMANDS[args.command](args, cfg)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        if args.verbose:
            log.exception("command failed")
        print(f"lgss {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
