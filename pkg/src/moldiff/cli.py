"""Command-line entry point: ``moldiff <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from moldiff.checkpoint import CheckpointError
from moldiff.config import ConfigError, RunConfig, load_config
from moldiff.denoiser import NumericalError
from moldiff.descgen import RecordError, load_dataset, load_names
from moldiff.tokenizer import TokenizeError, Vocab

log = logging.getLogger("moldiff")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
DATA_DIR = Path(__file__).parent / "data"


class DataError(RuntimeError):
    """Input data that cannot be used."""


# --- helpers ------------------------------------------------------------------

def _overrides(args: argparse.Namespace) -> list[str]:
    out = list(args.set or [])
    if args.seed is not None:
        out += [f"{s}.seed={args.seed}" for s in ("model", "train", "sample", "errsim")]
    if args.desc_mode is not None:
        out.append(f"data.desc_mode={args.desc_mode}")
    if args.init is not None:
        out.append(f"sample.init={args.init}")
    if args.steps is not None:
        section = {"train": "train", "sample": "sample"}.get(args.command)
        if section is None:
            raise ConfigError(f"--steps does not apply to {args.command!r}")
        out.append(f"{section}.steps={args.steps}")
    return out


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    if n < 1:
        raise ConfigError("--threads must be at least 1")
    try:
        import numba

        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message=".*TBB")  # falls back to another layer
            numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    except ImportError:
        pass


def _records(cfg: RunConfig, path: Path | None = None):
    path = path or cfg["data"]["dataset"]
    if path is None:
        raise ConfigError("no dataset given (data.dataset or --dataset)")
    if not Path(path).is_file():
        raise DataError(f"dataset not found: {path}")
    records, errors = load_dataset(path)
    for lineno, msg in errors:
        log.error("%s:%d: %s", path, lineno, msg)
    return records, errors


def _names(cfg: RunConfig, path: Path | None = None) -> dict[str, str]:
    path = path or cfg["data"]["names"]
    if path is None:
        return {}
    try:
        return load_names(path)
    except OSError as exc:
        raise DataError(f"cannot read names file: {exc}") from exc


def _vocab(cfg: RunConfig, records) -> Vocab:
    from moldiff.pipeline import record_smiles, vocab_from

    path = cfg["data"]["vocab"]
    if path is not None and Path(path).is_file():
        return Vocab.load(path)
    corpus = (DATA_DIR / "corpus.smi").read_text(encoding="utf-8").split()
    return vocab_from(corpus + record_smiles(records), cfg["data"]["vocab_size"])


def _write_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


# --- commands -----------------------------------------------------------------

def cmd_build_vocab(args, cfg: RunConfig) -> int:
    from moldiff.pipeline import record_smiles, vocab_from

    smiles: list[str] = []
    for p in args.corpus or [DATA_DIR / "corpus.smi"]:
        try:
            smiles += Path(p).read_text(encoding="utf-8").split()
        except OSError as exc:
            raise DataError(f"cannot read corpus: {exc}") from exc
    if cfg["data"]["dataset"] is not None:
        records, _ = _records(cfg)
        smiles += record_smiles(records)
    vocab = vocab_from(smiles, cfg["data"]["vocab_size"])
    out = Path(args.out) if args.out else (cfg["data"]["vocab"] or Path("vocab.txt"))
    vocab.save(out)
    print(f"wrote {len(vocab)} tokens to {out}")
    return EXIT_OK


def cmd_describe(args, cfg: RunConfig) -> int:
    from moldiff.pipeline import describe_all, write_jsonl

    records, errors = _records(cfg, args.dataset)
    names = _names(cfg, args.names)
    done, failed = describe_all(records, names, cfg["data"]["desc_mode"], properties=cfg["data"]["properties"])
    rows = [{"id": d.record.id, "description": d.description} for d in done]
    rows += [{"id": rid, "error": msg} for rid, msg in failed]
    rows += [{"line": lineno, "error": msg} for lineno, msg in errors]
    out = Path(args.out) if args.out else Path("descriptions.jsonl")
    write_jsonl(rows, out)
    for rid, msg in failed:
        log.error("record %s: %s", rid, msg)
    print(f"described {len(done)} records, {len(failed) + len(errors)} failed -> {out}")
    return EXIT_DATA if failed or errors else EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    from moldiff.pipeline import describe_all, training_set, word_vocab
    from moldiff.trainer import DiffusionLM, Trainer

    records, errors = _records(cfg)
    if errors:
        raise DataError(f"{len(errors)} unreadable records in the dataset")
    done, failed = describe_all(records, _names(cfg), cfg["data"]["desc_mode"],
                                properties=cfg["data"]["properties"])
    if failed:
        raise DataError(f"cannot describe record {failed[0][0]}: {failed[0][1]}")
    vocab = _vocab(cfg, records)
    model = DiffusionLM(cfg.model_config(), vocab, word_vocab(done), seed=cfg["model"]["seed"])
    try:
        data = training_set(model, done)
    except TokenizeError as exc:
        raise DataError(str(exc)) from exc
    tcfg = cfg.train_config()
    trainer = Trainer(model, cfg.schedule_config(), tcfg, data)
    out = Path(cfg["train"]["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    extra = {"data": {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg["data"].items()}}
    with open(out / "loss.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss", "mse", "nll", "lr"])

        def on_step(tr: Trainer, e) -> None:
            w.writerow([e.step, repr(e.loss), repr(e.mse), repr(e.nll), repr(e.lr)])
            if e.step % tcfg.log_every == 0:
                log.info("step %d loss %.4f mse %.4f nll %.4f", e.step, e.loss, e.mse, e.nll)
            if tcfg.ckpt_every and e.step % tcfg.ckpt_every == 0:
                tr.save(out / f"ckpt_{e.step:06d}.bin", extra)

        trainer.train(callback=on_step)
    trainer.save(out / "model.ckpt", extra)
    losses = [e.loss for e in trainer.history]
    if losses:
        tail = float(np.mean(losses[-50:]))
        print(f"trained {trainer.step_count} steps, params {model.num_parameters()}, "
              f"final loss (last {min(50, len(losses))}) {tail:.4f} -> {out / 'model.ckpt'}")
    else:
        print(f"no training steps requested -> {out / 'model.ckpt'}")
    return EXIT_OK


def cmd_sample(args, cfg: RunConfig) -> int:
    from moldiff.pipeline import describe_all, generate, write_jsonl
    from moldiff.trainer import load_model

    s = cfg["sample"]
    ckpt = s["checkpoint"] or Path(cfg["train"]["out_dir"]) / "model.ckpt"
    if not Path(ckpt).is_file():
        raise DataError(f"checkpoint not found: {ckpt}")
    model, sched, _ = load_model(ckpt)
    if args.config is not None and model.cfg != cfg.model_config():
        raise DataError("checkpoint model dimensions differ from the configuration")
    records, errors = _records(cfg)
    if errors:
        raise DataError(f"{len(errors)} unreadable records in the dataset")
    done, failed = describe_all(records, _names(cfg), cfg["data"]["desc_mode"],
                                properties=cfg["data"]["properties"])
    if failed:
        raise DataError(f"cannot describe record {failed[0][0]}: {failed[0][1]}")
    try:
        rows = generate(model, sched, done, s["init"], s["steps"], s["t_start"], s["seed"],
                        s["batch_size"], s["clamp"])
    except TokenizeError as exc:
        raise DataError(str(exc)) from exc
    out = Path(s["output"])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(rows, out)
    valid = sum(r["valid"] for r in rows)
    print(f"sampled {len(rows)} molecules ({valid} valid, {rows[0]['steps'] if rows else 0} steps) -> {out}")
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    from moldiff.metrics import evaluate, render_table, validate_report
    from moldiff.pipeline import read_jsonl

    path = Path(args.outputs) if args.outputs else (cfg["eval"]["outputs"] or cfg["sample"]["output"])
    try:
        outputs = read_jsonl(path)
    except OSError as exc:
        raise DataError(f"cannot read outputs: {exc}") from exc
    records, errors = _records(cfg)
    if errors:
        raise DataError(f"{len(errors)} unreadable records in the dataset")
    refs = {r.id: (r.source, r.target) for r in records}
    try:
        report = evaluate(outputs, refs, cfg.thresholds() or None)
    except (ValueError, KeyError) as exc:
        raise DataError(str(exc)) from exc
    validate_report(report)
    out = Path(cfg["eval"]["report"])
    _write_json(report, out)
    print(render_table(report))
    print(f"report -> {out}")
    return EXIT_OK


def cmd_errsim(args, cfg: RunConfig) -> int:
    from moldiff.diffusion import make_schedule
    from moldiff.errorlab import run_comparison

    e = cfg["errsim"]
    scheds = {}
    for kind in e["schedules"]:
        if kind not in ("linear", "sqrt", "cosine"):
            raise ConfigError(f"unknown schedule {kind!r} in errsim.schedules")
        scheds[kind] = make_schedule(kind, e["T"])
    summary, _ = run_comparison(scheds, e["sigma"], e["eta"], e["H"], e["trials"], e["seed"], e["out_dir"])
    d = summary.to_dict()
    print(f"independent slope {d['independent_slope']:.3f}  systematic slope {d['systematic_slope']:.3f}")
    for k, v in d["diffusion_final_variance"].items():
        print(f"diffusion[{k}] final variance {v:.4g}  (bound {d['diffusion_bound_T_sigma2']:.4g})")
    print(f"systematic final variance {d['systematic_final_variance']:.4g} -> {e['out_dir']}")
    return EXIT_OK


def cmd_tokenize(args, cfg: RunConfig) -> int:
    from moldiff.tokenizer import tokenize

    for s in args.smiles:
        try:
            print(" ".join(tokenize(s)))
        except TokenizeError as exc:
            raise DataError(f"{s!r}: {exc}") from exc
    return EXIT_OK


def cmd_fp(args, cfg: RunConfig) -> int:
    from moldiff.chem import SmilesError, morgan_fingerprint, parse_smiles, tanimoto

    fps = []
    for s in args.smiles:
        try:
            fps.append(morgan_fingerprint(parse_smiles(s), args.radius, args.width))
        except SmilesError as exc:
            raise DataError(f"{s!r}: {exc}") from exc
    if len(fps) == 2:
        print(f"{tanimoto(fps[0], fps[1]):.6f}")
    else:
        for s, fp in zip(args.smiles, fps):
            print(s, " ".join(map(str, np.flatnonzero(fp.bits))))
    return EXIT_OK


COMMANDS = {
    "build-vocab": cmd_build_vocab,
    "describe": cmd_describe,
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "errsim": cmd_errsim,
    "tokenize": cmd_tokenize,
    "fp": cmd_fp,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI run configuration")
    common.add_argument("--seed", type=int, help="seed for every random stream")
    common.add_argument("--threads", type=int, default=os.cpu_count(), help="kernel threads")
    common.add_argument("--steps", type=int, help="training steps (train) or reverse steps (sample)")
    common.add_argument("--init", choices=("source", "noise"), help="sampler initialization")
    common.add_argument("--desc-mode", choices=("names", "smiles"), help="how molecules are named")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="config override")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="moldiff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("build-vocab", parents=[common], help="build the SMILES token vocabulary")
    p.add_argument("--corpus", action="append", help="SMILES file(s), one per line")
    p.add_argument("--out", help="vocabulary file (default data.vocab)")
    p = sub.add_parser("describe", parents=[common], help="render guiding descriptions")
    p.add_argument("--dataset", type=Path)
    p.add_argument("--names", type=Path)
    p.add_argument("--out", help="JSON-lines output (default descriptions.jsonl)")
    sub.add_parser("train", parents=[common], help="train a model")
    sub.add_parser("sample", parents=[common], help="generate optimized molecules")
    p = sub.add_parser("eval", parents=[common], help="score generated molecules")
    p.add_argument("--outputs", help="sample output file")
    sub.add_parser("errsim", parents=[common], help="error-accumulation simulations")
    p = sub.add_parser("tokenize", parents=[common], help="print SMILES tokens")
    p.add_argument("smiles", nargs="+")
    p = sub.add_parser("fp", parents=[common], help="Morgan bits, or Tanimoto of two molecules")
    p.add_argument("smiles", nargs="+")
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--width", type=int, default=2048)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        _set_threads(args.threads)
        cfg = load_config(args.config, _overrides(args))
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, RecordError, CheckpointError, TokenizeError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main_exit() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    main_exit()
