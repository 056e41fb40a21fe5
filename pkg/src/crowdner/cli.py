"""Command-line front end.

Subcommands: synth, train, tag, eval, vote, gradcheck, compare.  Every
command writes a manifest next to its outputs (command line, resolved
config, seed, input digests, toolkit version) and fails with a single
"error: ..." line and a nonzero exit code.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys

import numpy as np

from . import __version__, checkpoint, data, synth, training
from .evaluation import evaluate
from .gradcheck import model_grad_check
from .model import MODE_ADVERSARIAL, MODE_BASELINE, CrowdTagger, ModelConfig, RawLabels


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"error: {message}\n")


PAPER_DEFAULTS = {
    "emb_dim": 100,
    "label_emb_dim": 50,
    "hidden_dim": 200,
    "epochs": 200,
    "batch": 128,
    "lr": 1e-3,
    "l2": 1e-5,
    "dropout": 0.2,
}

DESK_OVERRIDES = {"emb_dim": 16, "label_emb_dim": 16, "hidden_dim": 32, "epochs": 40}


def _add_model_flags(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--l2", type=float, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--emb-dim", type=int, default=None)
    p.add_argument("--label-emb-dim", type=int, default=None)
    p.add_argument("--hidden-dim", type=int, default=None)
    p.add_argument(
        "--desk",
        action="store_true",
        help="desk-scale preset (emb 16, hidden 32, epochs 40) for minutes-scale runs",
    )


def _resolve_opts(args):
    """Explicit flags beat the --desk preset, which beats the full-scale defaults."""
    resolved = dict(PAPER_DEFAULTS)
    if args.desk:
        resolved.update(DESK_OVERRIDES)
    for key in resolved:
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
    return resolved


def _dims(resolved):
    return {
        "emb_dim": resolved["emb_dim"],
        "label_emb_dim": resolved["label_emb_dim"],
        "hidden_dim": resolved["hidden_dim"],
        "dropout": resolved["dropout"],
    }


def _train_cfg(resolved, seed):
    return training.TrainConfig(
        batch_size=resolved["batch"],
        epochs=resolved["epochs"],
        lr=resolved["lr"],
        l2=resolved["l2"],
        dropout=resolved["dropout"],
        seed=seed,
    )


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command, argv, seed, config, inputs, outputs):
    lines = [
        f"command={command}",
        f"argv={' '.join(argv)}",
        f"version={__version__}",
        f"seed={seed}",
    ]
    for key in sorted(config):
        lines.append(f"config.{key}={config[key]}")
    for p in inputs:
        lines.append(f"input.{os.path.basename(p)}={_sha256(p)}")
    for p in outputs:
        lines.append(f"output={os.path.basename(p)}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_synth(args, argv):
    profiles = (
        synth.load_profiles(args.profiles)
        if args.profiles
        else list(synth.DEFAULT_PROFILES)
    )
    if args.annotators > len(profiles):
        raise UsageError(
            f"--annotators {args.annotators} exceeds the {len(profiles)} worker profiles"
        )
    spec = synth.SynthSpec(args.train_size, args.dev_size, args.test_size)
    train_c, dev_c, test_c = synth.synth_generate(spec, profiles, args.annotators, args.seed)
    os.makedirs(args.out, exist_ok=True)
    paths = {}
    for name, corpus in (("train", train_c), ("dev", dev_c), ("test", test_c)):
        paths[name] = os.path.join(args.out, f"{name}.tsv")
        data.save_corpus(corpus, paths[name])
    profile_path = os.path.join(args.out, "profiles.json")
    synth.save_profiles(profiles, profile_path)
    write_manifest(
        os.path.join(args.out, "manifest.txt"),
        "synth",
        argv,
        args.seed,
        {
            "annotators": args.annotators,
            "train_size": args.train_size,
            "dev_size": args.dev_size,
            "test_size": args.test_size,
        },
        [args.profiles] if args.profiles else [],
        list(paths.values()) + [profile_path],
    )
    print(
        f"wrote {len(train_c)} crowd sentences, {len(dev_c)} dev, "
        f"{len(test_c)} test to {args.out}"
    )
    return 0


def cmd_train(args, argv):
    resolved = _resolve_opts(args)
    train_corpus = data.load_corpus(args.train)
    dev_corpus = data.load_corpus(args.dev, labels=train_corpus.labels)
    vocab = data.Vocabulary.from_corpus(train_corpus)
    if args.mode == MODE_ADVERSARIAL and len(train_corpus.workers) < 2:
        raise UsageError("adversarial mode needs worker ids (>= 2 workers) in the training corpus")

    model_cfg = ModelConfig(
        vocab_size=len(vocab),
        labels=train_corpus.labels,
        mode=args.mode,
        n_workers=len(train_corpus.workers) if args.mode == MODE_ADVERSARIAL else 0,
        **_dims(resolved),
    )
    tagger = CrowdTagger(
        model_cfg, np.random.default_rng(np.random.SeedSequence([args.seed, 13]))
    )
    if args.embeddings:
        table = data.load_embeddings(
            args.embeddings,
            vocab,
            resolved["emb_dim"],
            np.random.default_rng(np.random.SeedSequence([args.seed, 29])),
        )
        tagger.char_table.table.value = table.table.value

    cfg = _train_cfg(resolved, args.seed)
    _, history = training.train(tagger, train_corpus, dev_corpus, cfg, vocab)

    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "checkpoint.txt")
    hist_path = os.path.join(args.out, "history.tsv")
    checkpoint.save_model(ckpt_path, tagger, vocab, train_corpus.workers)
    with open(hist_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(training.history_text(history))
    config = dict(resolved)
    config["mode"] = args.mode
    inputs = [args.train, args.dev] + ([args.embeddings] if args.embeddings else [])
    write_manifest(
        os.path.join(args.out, "manifest.txt"),
        "train",
        argv,
        args.seed,
        config,
        inputs,
        [ckpt_path, hist_path],
    )
    if history:
        best = max(history, key=lambda h: h.dev_f1)
        print(f"best epoch {best.epoch}: dev F1 {best.dev_f1:.4f} -> {ckpt_path}")
    else:
        print(f"no training epochs requested; initial model saved to {ckpt_path}")
    return 0


def cmd_tag(args, argv):
    tagger, vocab, _ = checkpoint.load_model(args.checkpoint)
    out_fh = open(args.out, "w", encoding="utf-8", newline="\n") if args.out else sys.stdout
    try:
        with open(args.input, encoding="utf-8") as fh:
            for k, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n")
                if not line.strip():
                    print(f"warning: skipping empty line {k}", file=sys.stderr)
                    continue
                chars = list(line)
                labels = tagger.predict(vocab.encode(chars))
                out_fh.write(f"# id=line-{k}\n")
                for c, lab in zip(chars, labels):
                    out_fh.write(f"{c}\t{lab.text()}\n")
                out_fh.write("\n")
    finally:
        if args.out:
            out_fh.close()
    if args.out:
        write_manifest(
            args.out + ".manifest",
            "tag",
            argv,
            0,
            {},
            [args.checkpoint, args.input],
            [args.out],
        )
    return 0


def cmd_eval(args, argv):
    tagger, vocab, _ = checkpoint.load_model(args.checkpoint)
    gold = data.load_corpus(args.gold, labels=tagger.config.labels)
    res = evaluate(tagger, gold, vocab)
    print(
        f"precision={res.precision:.4f} recall={res.recall:.4f} f1={res.f1:.4f} "
        f"(gold={res.n_gold} predicted={res.n_pred} matched={res.n_match})"
    )
    return 0


def cmd_vote(args, argv):
    corpus = data.load_corpus(args.input)
    voted = data.vote_corpus(corpus)
    data.save_corpus(voted, args.out)
    write_manifest(
        args.out + ".manifest", "vote", argv, 0, {}, [args.input], [args.out]
    )
    print(f"voted {len(corpus)} annotations into {len(voted)} sentences -> {args.out}")
    return 0


def cmd_gradcheck(args, argv):
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 13]))
    cfg = ModelConfig(
        vocab_size=max(8, args.length * 2),
        labels=RawLabels(args.labels),
        mode=args.mode,
        n_workers=args.workers if args.mode == MODE_ADVERSARIAL else 0,
        emb_dim=args.emb_dim,
        label_emb_dim=args.emb_dim,
        hidden_dim=args.hidden_dim,
        dropout=0.0,
    )
    tagger = CrowdTagger(cfg, rng)
    data_rng = np.random.default_rng(np.random.SeedSequence([args.seed, 17]))
    chars = data_rng.integers(0, cfg.vocab_size, size=args.length)
    y = [int(v) for v in data_rng.integers(0, args.labels, size=args.length)]
    worker = 0 if args.mode == MODE_ADVERSARIAL else None
    report = model_grad_check(
        tagger, chars, y, worker=worker, max_coords=args.coords, seed=args.seed
    )
    print(report.summary())
    ok = report.passed(args.tol)
    print(f"gradcheck {'PASS' if ok else 'FAIL'} (max rel err {report.max_rel_err:.3e}, tol {args.tol:g})")
    return 0 if ok else 1


def cmd_compare(args, argv):
    resolved = _resolve_opts(args)
    train_corpus = data.load_corpus(args.train)
    dev_corpus = data.load_corpus(args.dev, labels=train_corpus.labels)
    test_corpus = data.load_corpus(args.test, labels=train_corpus.labels)
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if not seeds:
        raise UsageError("--seeds must list at least one integer seed")
    cfg = _train_cfg(resolved, seeds[0])
    runs = training.compare_over_seeds(
        train_corpus, dev_corpus, test_corpus, _dims(resolved), cfg, seeds,
        jobs=args.jobs,
    )
    table = training.comparison_table(runs)
    print(table, end="")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        table_path = os.path.join(args.out, "comparison.txt")
        with open(table_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(table)
        config = dict(resolved)
        config["seeds"] = ",".join(str(s) for s in seeds)
        write_manifest(
            os.path.join(args.out, "manifest.txt"),
            "compare",
            argv,
            seeds[0],
            config,
            [args.train, args.dev, args.test],
            [table_path],
        )
    return 0


def build_parser():
    parser = _Parser(prog="crowdner", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic crowd corpus")
    p.add_argument("--profiles", help="worker noise profile JSON (default: built-in trio)")
    p.add_argument("--annotators", "-k", type=int, default=3)
    p.add_argument("--train-size", type=int, default=800)
    p.add_argument("--dev-size", type=int, default=100)
    p.add_argument("--test-size", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a tagger")
    p.add_argument("--mode", choices=[MODE_BASELINE, MODE_ADVERSARIAL], default=MODE_BASELINE)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--embeddings", help="pretrained character embedding text file")
    _add_model_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tag", help="tag raw text, one sentence per line")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("eval", help="entity-level P/R/F1 of a checkpoint on gold data")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--gold", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("vote", help="majority-vote a crowd corpus at the character level")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_vote)

    p = sub.add_parser("gradcheck", help="finite-difference check of model gradients")
    p.add_argument("--mode", choices=[MODE_BASELINE, MODE_ADVERSARIAL], default=MODE_ADVERSARIAL)
    p.add_argument("--emb-dim", type=int, default=8)
    p.add_argument("--hidden-dim", type=int, default=12)
    p.add_argument("--labels", type=int, default=4, help="label count, 3*types+1")
    p.add_argument("--workers", type=int, default=3)
    p.add_argument("--length", type=int, default=6)
    p.add_argument("--coords", type=int, default=8, help="sampled coordinates per parameter")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("compare", help="baseline vs voted vs adversarial on one dataset")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--seeds", default="1,2,3,4,5")
    p.add_argument("--jobs", type=int, default=1)
    _add_model_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, FloatingPointError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
