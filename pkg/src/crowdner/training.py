"""Training loop with development-based model selection, plus the
three-system comparison experiment (raw crowd vs voted vs adversarial)."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import optim
from .data import Vocabulary, vote_corpus
from .evaluation import evaluate
from .model import MODE_ADVERSARIAL, MODE_BASELINE, CrowdTagger, ModelConfig

DESK_PRESET = {"emb_dim": 16, "label_emb_dim": 16, "hidden_dim": 32, "epochs": 40}


@dataclass
class TrainConfig:
    batch_size: int = 128
    epochs: int = 200
    lr: float = 1e-3
    l2: float = 1e-5
    dropout: float = 0.2
    rms_decay: float = 0.9
    rms_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        for name in ("lr", "l2", "rms_decay", "rms_eps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    dev_precision: float
    dev_recall: float
    dev_f1: float

    def line(self):
        return (
            f"{self.epoch}\t{self.train_loss:.6f}\t{self.dev_precision:.6f}"
            f"\t{self.dev_recall:.6f}\t{self.dev_f1:.6f}"
        )


HISTORY_HEADER = "epoch\ttrain_loss\tdev_precision\tdev_recall\tdev_f1"


def history_text(history):
    return "\n".join([HISTORY_HEADER] + [h.line() for h in history]) + "\n"


def encode_corpus(corpus, vocab, need_workers):
    """Turn sentences into (char ids, label ids, worker index) triples."""
    items = []
    for s in corpus.sentences:
        if need_workers and s.worker is None:
            raise ValueError(
                f"adversarial training requires a worker id on every sentence "
                f"(sentence {s.sentence_id!r} has none)"
            )
        worker = corpus.worker_index(s.worker) if s.worker is not None else None
        items.append(
            (vocab.encode(s.chars), corpus.labels.encode(s.labels), worker)
        )
    return items


def train(tagger, train_corpus, dev_corpus, cfg, vocab):
    """Shuffled mini-batch training with RMSprop; after each epoch the
    model is scored on dev, and the parameters of the best dev-F1 epoch
    (earliest on ties) are returned and restored into the model.

    Returns (best parameter arrays, per-epoch history).
    """
    adversarial = tagger.config.mode == MODE_ADVERSARIAL
    if adversarial and tagger.config.n_workers != len(train_corpus.workers):
        raise ValueError(
            f"model expects {tagger.config.n_workers} workers, corpus has "
            f"{len(train_corpus.workers)}"
        )
    items = encode_corpus(train_corpus, vocab, need_workers=adversarial)
    state = optim.RmsPropState(decay=cfg.rms_decay, eps=cfg.rms_eps)
    params = tagger.params()
    dropout_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 77]))

    best_arrays = tagger.param_arrays()
    best_f1 = -1.0
    history = []
    for epoch in range(1, cfg.epochs + 1):
        shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1000 + epoch]))
        perm = shuffle_rng.permutation(len(items))
        total = 0.0
        for lo in range(0, len(items), cfg.batch_size):
            batch = [items[i] for i in perm[lo : lo + cfg.batch_size]]
            loss = tagger.total_loss(batch, training=True, rng=dropout_rng)
            total += loss.value[0, 0]
            ad.backward(loss)
            optim.rmsprop_step(params, state, cfg.lr, cfg.l2)
        dev = evaluate(tagger, dev_corpus, vocab)
        stats = EpochStats(epoch, total / len(items), dev.precision, dev.recall, dev.f1)
        history.append(stats)
        if dev.f1 > best_f1:
            best_f1 = dev.f1
            best_arrays = tagger.param_arrays()
    tagger.load_param_arrays(best_arrays)
    return best_arrays, history


SYSTEM_BASELINE = "lstm-crf"
SYSTEM_VOTED = "lstm-crf-voted"
SYSTEM_ADVERSARIAL = "adversarial"


@dataclass
class ComparisonRun:
    seed: int
    rows: list = field(default_factory=list)  # (system name, EvalResult)
    notes: list = field(default_factory=list)

    def result(self, system):
        for name, res in self.rows:
            if name == system:
                return res
        return None


def _make_tagger(mode, train_corpus, vocab, dims, seed):
    cfg = ModelConfig(
        vocab_size=len(vocab),
        labels=train_corpus.labels,
        mode=mode,
        n_workers=len(train_corpus.workers) if mode == MODE_ADVERSARIAL else 0,
        **dims,
    )
    return CrowdTagger(cfg, np.random.default_rng(np.random.SeedSequence([seed, 13])))


def compare_experiment(train_corpus, dev_corpus, test_corpus, dims, cfg,
                       systems=(SYSTEM_BASELINE, SYSTEM_VOTED, SYSTEM_ADVERSARIAL)):
    """Train the requested systems with one shared seed/config and score
    them on test: the plain tagger on raw crowd data, the plain tagger on
    the majority-voted corpus, and the adversarial tagger on raw crowd
    data.  The voted row is skipped (with a notice) when no sentence has
    more than one annotation.
    """
    vocab = Vocabulary.from_corpus(train_corpus)
    run = ComparisonRun(seed=cfg.seed)
    for system in systems:
        if system == SYSTEM_VOTED:
            groups = train_corpus.grouped_by_id()
            if all(len(g) == 1 for g in groups.values()):
                run.notes.append(
                    f"{SYSTEM_VOTED}: skipped, every sentence has a single annotation"
                )
                continue
            corpus = vote_corpus(train_corpus)
            mode = MODE_BASELINE
        elif system == SYSTEM_BASELINE:
            corpus = train_corpus
            mode = MODE_BASELINE
        elif system == SYSTEM_ADVERSARIAL:
            if len(train_corpus.workers) < 2:
                run.notes.append(
                    f"{SYSTEM_ADVERSARIAL}: skipped, corpus has fewer than 2 workers"
                )
                continue
            corpus = train_corpus
            mode = MODE_ADVERSARIAL
        else:
            raise ValueError(f"unknown system {system!r}")
        tagger = _make_tagger(mode, train_corpus, vocab, dims, cfg.seed)
        train(tagger, corpus, dev_corpus, cfg, vocab)
        run.rows.append((system, evaluate(tagger, test_corpus, vocab)))
    return run


def _run_one_seed(args):
    train_corpus, dev_corpus, test_corpus, dims, cfg, systems, seed = args
    return compare_experiment(
        train_corpus, dev_corpus, test_corpus, dims, replace(cfg, seed=seed), systems
    )


def compare_over_seeds(train_corpus, dev_corpus, test_corpus, dims, cfg, seeds,
                       systems=(SYSTEM_BASELINE, SYSTEM_VOTED, SYSTEM_ADVERSARIAL),
                       jobs=1):
    """compare_experiment repeated per seed; seeds may run in parallel
    worker processes (each seed is an independent deterministic run, so
    the result does not depend on scheduling)."""
    tasks = [
        (train_corpus, dev_corpus, test_corpus, dims, cfg, systems, seed)
        for seed in seeds
    ]
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_one_seed(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one_seed, tasks))


def comparison_table(runs, systems=(SYSTEM_BASELINE, SYSTEM_VOTED, SYSTEM_ADVERSARIAL)):
    """Plain-text table: one row per system, per-seed F1 plus mean P/R/F1."""
    lines = []
    seeds = [r.seed for r in runs]
    header = f"{'system':16s} " + " ".join(f"seed{s:<4d}" for s in seeds)
    lines.append(header + "   mean-P  mean-R  mean-F1")
    for system in systems:
        results = [r.result(system) for r in runs]
        if all(res is None for res in results):
            continue
        cells = " ".join(
            f"{res.f1:8.4f}" if res is not None else "       -" for res in results
        )
        present = [res for res in results if res is not None]
        mp = float(np.mean([r.precision for r in present]))
        mr = float(np.mean([r.recall for r in present]))
        mf = float(np.mean([r.f1 for r in present]))
        lines.append(f"{system:16s} {cells}   {mp:.4f}  {mr:.4f}  {mf:.4f}")
    for r in runs:
        for note in r.notes:
            lines.append(f"note (seed {r.seed}): {note}")
    return "\n".join(lines) + "\n"
