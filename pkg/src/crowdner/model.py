"""Model assembly: the plain LSTM-CRF tagger and its adversarial variant.

In adversarial mode the tagger reads a private and a common Bi-LSTM over
the characters, while a worker discriminator reads the common features
(through gradient reversal) together with a Bi-LSTM over the annotated
label sequence.  Parameters split into two groups: the tagger group,
which includes the common Bi-LSTM, descends the combined objective, and
the discriminator group descends only its own classification loss; the
reversal layer realizes the saddle point with a single backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import crf, layers
from .autodiff import GROUP_DISCRIMINATOR, GROUP_TAGGER
from .tagscheme import LabelSet

MODE_BASELINE = "baseline"
MODE_ADVERSARIAL = "adversarial"


class RawLabels:
    """Label alphabet given only by its size; sequences are plain indices.

    Lets harnesses (gradient checks, CRF stress tests) size the label
    space freely; real corpora use a BIEO LabelSet instead.
    """

    def __init__(self, n):
        if n < 1:
            raise ValueError("need at least one label")
        self.n = n
        self.types = ()

    def __len__(self):
        return self.n

    def encode(self, labels):
        return list(labels)

    def decode(self, ids):
        return list(ids)


@dataclass
class ModelConfig:
    vocab_size: int
    labels: LabelSet
    mode: str = MODE_BASELINE
    n_workers: int = 0
    emb_dim: int = 100
    label_emb_dim: int = 50
    hidden_dim: int = 200
    dropout: float = 0.2

    def __post_init__(self):
        if self.mode not in (MODE_BASELINE, MODE_ADVERSARIAL):
            raise ValueError(f"unknown mode {self.mode!r}")
        for name in ("vocab_size", "emb_dim", "label_emb_dim", "hidden_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.mode == MODE_ADVERSARIAL and self.n_workers < 2:
            raise ValueError("adversarial mode needs at least 2 workers")

    def to_dict(self):
        return {
            "vocab_size": self.vocab_size,
            "types": list(self.labels.types),
            "mode": self.mode,
            "n_workers": self.n_workers,
            "emb_dim": self.emb_dim,
            "label_emb_dim": self.label_emb_dim,
            "hidden_dim": self.hidden_dim,
            "dropout": self.dropout,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["labels"] = LabelSet(d.pop("types"))
        return cls(**d)


class CrowdTagger:
    """LSTM-CRF character tagger, optionally with a worker-adversarial branch."""

    def __init__(self, config, rng=None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.config = config
        cfg = config
        h = cfg.hidden_dim
        adversarial = cfg.mode == MODE_ADVERSARIAL

        self.char_table = layers.EmbeddingTable(
            "chars", cfg.vocab_size, cfg.emb_dim, rng, GROUP_TAGGER
        )
        self.private = layers.BiLstm("private", cfg.emb_dim, h, rng, GROUP_TAGGER)
        self.common = (
            layers.BiLstm("common", cfg.emb_dim, h, rng, GROUP_TAGGER)
            if adversarial
            else None
        )
        combiner_in = 4 * h if adversarial else 2 * h
        self.combiner = layers.Combiner("combiner", combiner_in, h, rng, GROUP_TAGGER)
        self.crf = crf.CrfLayer("crf", len(cfg.labels), h, rng, GROUP_TAGGER)

        if adversarial:
            self.label_table = layers.EmbeddingTable(
                "labels", len(cfg.labels), cfg.label_emb_dim, rng, GROUP_DISCRIMINATOR
            )
            self.label_lstm = layers.BiLstm(
                "label_lstm", cfg.label_emb_dim, h, rng, GROUP_DISCRIMINATOR
            )
            self.discriminator = layers.CnnDiscriminator(
                "discr", 4 * h, h, cfg.n_workers, rng, GROUP_DISCRIMINATOR
            )
        else:
            self.label_table = None
            self.label_lstm = None
            self.discriminator = None

        self._params = self._collect_params()

    def _collect_params(self):
        components = [self.char_table, self.private, self.common, self.combiner,
                      self.crf, self.label_table, self.label_lstm, self.discriminator]
        params = []
        for comp in components:
            if comp is not None:
                params.extend(comp.params())
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise AssertionError("duplicate parameter names")
        groups = {p.group for p in params}
        expected = (
            {GROUP_TAGGER, GROUP_DISCRIMINATOR}
            if self.config.mode == MODE_ADVERSARIAL
            else {GROUP_TAGGER}
        )
        if groups != expected:
            raise AssertionError(f"unexpected parameter groups {groups}")
        return params

    def params(self):
        return list(self._params)

    def tagger_params(self):
        return [p for p in self._params if p.group == GROUP_TAGGER]

    def discriminator_params(self):
        return [p for p in self._params if p.group == GROUP_DISCRIMINATOR]

    # -- forward passes -------------------------------------------------

    def _check_inputs(self, chars, labels=None):
        chars = np.asarray(chars, dtype=np.intp)
        if chars.ndim != 1 or chars.shape[0] < 1:
            raise ValueError("need a non-empty 1-D sequence of character ids")
        if labels is not None and len(labels) != chars.shape[0]:
            raise ValueError(
                f"label sequence length {len(labels)} != sentence length {chars.shape[0]}"
            )
        return chars

    def _encoders(self, chars, training, rng):
        """Private and common encodings; dropout applies to both outputs,
        but the discriminator consumes the common features pre-dropout."""
        x = layers.embed(self.char_table, chars)
        p = self.config.dropout
        h_private = ad.dropout(layers.bilstm_run(self.private, x), p, training, rng)
        if self.common is None:
            return h_private, None, None
        h_common_raw = layers.bilstm_run(self.common, x)
        h_common = ad.dropout(h_common_raw, p, training, rng)
        return h_private, h_common, h_common_raw

    def _ner_nll(self, h_private, h_common, labels):
        h_ner = layers.combine(self.combiner, h_common, h_private)
        e = crf.emissions(self.crf, h_ner)
        y = self.config.labels.encode(labels) if _is_label_seq(labels) else labels
        return crf.nll(e, self.crf.t.node, y)

    def _worker_nll(self, h_common_raw, labels, worker, reverse):
        if self.discriminator is None:
            raise ValueError("worker loss is only defined in adversarial mode")
        if not 0 <= worker < self.config.n_workers:
            raise ValueError(f"unknown worker index {worker}")
        y = self.config.labels.encode(labels) if _is_label_seq(labels) else labels
        xl = layers.embed(self.label_table, np.asarray(y, dtype=np.intp))
        h_label = layers.bilstm_run(self.label_lstm, xl)
        scores = layers.discriminate(self.discriminator, h_common_raw, h_label, reverse)
        return ad.sub(ad.logsumexp_rows(scores), ad.pick(scores, worker, 0))

    def ner_loss(self, chars, labels, training=False, rng=None):
        """CRF negative log-likelihood of the annotated label sequence."""
        chars = self._check_inputs(chars, labels)
        h_private, h_common, _ = self._encoders(chars, training, rng)
        return self._ner_nll(h_private, h_common, labels)

    def worker_loss(self, chars, labels, worker, training=False, rng=None, reverse=True):
        """Negative log-probability of the annotating worker under the
        discriminator; gradients reach the common Bi-LSTM reversed."""
        chars = self._check_inputs(chars, labels)
        if self.common is None:
            raise ValueError("worker loss is only defined in adversarial mode")
        x = layers.embed(self.char_table, chars)
        h_common_raw = layers.bilstm_run(self.common, x)
        return self._worker_nll(h_common_raw, labels, worker, reverse)

    def total_loss(self, batch, training=False, rng=None):
        """Sum of per-sentence losses over the batch: NER NLL everywhere,
        plus the worker-discriminator NLL in adversarial mode.  Each
        sentence contributes one shared forward graph."""
        if len(batch) == 0:
            raise ValueError("total_loss: empty batch")
        adversarial = self.config.mode == MODE_ADVERSARIAL
        total = None
        for item in batch:
            chars, labels, worker = item
            chars = self._check_inputs(chars, labels)
            h_private, h_common, h_common_raw = self._encoders(chars, training, rng)
            loss = self._ner_nll(h_private, h_common, labels)
            if adversarial:
                if worker is None:
                    raise ValueError("adversarial training requires a worker id per sentence")
                loss = ad.add(loss, self._worker_nll(h_common_raw, labels, worker, True))
            total = loss if total is None else ad.add(total, loss)
        return total

    def predict(self, chars):
        """Viterbi decode; the discriminator branch plays no part."""
        chars = self._check_inputs(chars)
        h_private, h_common, _ = self._encoders(chars, training=False, rng=None)
        h_ner = layers.combine(self.combiner, h_common, h_private)
        e = crf.emissions(self.crf, h_ner)
        path, _ = crf.viterbi(e.value, self.crf.t.value)
        return self.config.labels.decode(path)

    # -- parameter snapshots ---------------------------------------------

    def param_arrays(self):
        return {p.name: p.value.copy() for p in self._params}

    def load_param_arrays(self, arrays):
        names = {p.name for p in self._params}
        if set(arrays) != names:
            missing = names - set(arrays)
            extra = set(arrays) - names
            raise ValueError(f"parameter name mismatch (missing {missing}, extra {extra})")
        for p in self._params:
            a = np.asarray(arrays[p.name], dtype=np.float64)
            if a.shape != p.value.shape:
                raise ValueError(
                    f"shape mismatch for {p.name}: {a.shape} vs {p.value.shape}"
                )
            p.value[...] = a


def _is_label_seq(labels):
    return len(labels) > 0 and not isinstance(labels[0], (int, np.integer))
