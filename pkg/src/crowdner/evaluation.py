"""Entity-level evaluation: exact (start, end, type) span matching."""

from __future__ import annotations

from dataclasses import dataclass

from .tagscheme import labels_to_spans


@dataclass(frozen=True)
class EvalResult:
    precision: float
    recall: float
    f1: float
    n_gold: int
    n_pred: int
    n_match: int

    def row(self):
        return f"P={self.precision:.4f} R={self.recall:.4f} F1={self.f1:.4f}"


def prf(n_gold, n_pred, n_match):
    p = n_match / n_pred if n_pred else 0.0
    r = n_match / n_gold if n_gold else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return EvalResult(p, r, f1, n_gold, n_pred, n_match)


def evaluate(tagger, corpus, vocab):
    """Micro-averaged precision/recall/F1 of the tagger on a gold corpus.

    Predictions are decoded leniently; a predicted entity counts only
    when start, end and type all match a gold entity.
    """
    n_gold = n_pred = n_match = 0
    for s in corpus.sentences:
        pred = tagger.predict(vocab.encode(s.chars))
        pred_spans = set(labels_to_spans(pred, "lenient"))
        gold_spans = set(labels_to_spans(list(s.labels), "lenient"))
        n_gold += len(gold_spans)
        n_pred += len(pred_spans)
        n_match += len(pred_spans & gold_spans)
    return prf(n_gold, n_pred, n_match)
