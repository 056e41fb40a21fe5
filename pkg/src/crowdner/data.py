"""Corpus ingestion and crowd-annotation utilities.

Corpus file format (UTF-8): one block per sentence, blocks separated by a
blank line.  A block starts with a header line

    # id=<sentence-id> worker=<worker-id>

(worker= is omitted for gold data), followed by one line per character:
the character, a tab, and the label text ("O", "B-PER", ...).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .tagscheme import Label, LabelSet, labels_to_spans, parse_label


class CorpusError(ValueError):
    """Malformed corpus or embedding file; carries a 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class LabeledSentence:
    chars: tuple
    labels: tuple
    worker: str | None = None
    sentence_id: str = ""

    def __post_init__(self):
        if len(self.chars) < 1:
            raise ValueError("empty sentence")
        if len(self.chars) != len(self.labels):
            raise ValueError(
                f"{len(self.chars)} characters but {len(self.labels)} labels"
            )

    def __len__(self):
        return len(self.chars)

    def spans(self, mode="lenient"):
        return labels_to_spans(self.labels, mode)


@dataclass(frozen=True)
class Corpus:
    sentences: tuple
    workers: tuple
    labels: LabelSet

    @classmethod
    def build(cls, sentences, labels):
        workers = []
        for s in sentences:
            if s.worker is not None and s.worker not in workers:
                workers.append(s.worker)
        return cls(tuple(sentences), tuple(workers), labels)

    def __len__(self):
        return len(self.sentences)

    def worker_index(self, worker):
        return self.workers.index(worker)

    def grouped_by_id(self):
        groups = {}
        for s in self.sentences:
            groups.setdefault(s.sentence_id, []).append(s)
        return groups


class Vocabulary:
    """Character-to-index map with index 0 reserved for unknown characters."""

    UNK = 0

    def __init__(self, chars):
        self._index = {}
        for c in chars:
            if c not in self._index:
                self._index[c] = len(self._index) + 1

    @classmethod
    def from_corpus(cls, corpus):
        return cls(c for s in corpus.sentences for c in s.chars)

    def __len__(self):
        return len(self._index) + 1

    def __contains__(self, char):
        return char in self._index

    def index(self, char):
        return self._index.get(char, self.UNK)

    def encode(self, chars):
        return np.array([self.index(c) for c in chars], dtype=np.intp)

    def to_dict(self):
        return dict(self._index)

    @classmethod
    def from_dict(cls, d):
        v = cls([])
        v._index = {c: int(i) for c, i in d.items()}
        return v


def _infer_label_set(label_texts):
    types = []
    for text in label_texts:
        if text != "O":
            t = text.split("-", 1)[1]
            if t not in types:
                types.append(t)
    return LabelSet(sorted(types))


def load_corpus(path, labels=None, strict=False):
    """Parse a corpus file; validates label sequences leniently (always
    decodable) or strictly when strict=True.

    When labels is None the label set is inferred from the file, with the
    entity types sorted by name so that every split of a dataset maps
    labels to the same indices.
    """
    blocks = []
    current = None
    label_texts = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                if current is not None:
                    blocks.append(current)
                    current = None
                continue
            if line.startswith("#"):
                if current is not None:
                    raise CorpusError("header inside a sentence block", lineno)
                current = {"line": lineno, "id": None, "worker": None, "rows": []}
                for tok in line[1:].split():
                    if tok.startswith("id="):
                        current["id"] = tok[3:]
                    elif tok.startswith("worker="):
                        current["worker"] = tok[7:]
                    else:
                        raise CorpusError(f"unknown header field {tok!r}", lineno)
                if current["id"] is None:
                    raise CorpusError("header is missing id=", lineno)
                continue
            if current is None:
                raise CorpusError("character line outside a sentence block", lineno)
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusError("expected CHAR<TAB>LABEL", lineno)
            char, label_text = parts
            if len(char) != 1:
                raise CorpusError(f"expected a single character, got {char!r}", lineno)
            label_texts.add(label_text)
            current["rows"].append((lineno, char, label_text))
        if current is not None:
            blocks.append(current)

    if labels is None:
        labels = _infer_label_set(sorted(label_texts))

    sentences = []
    for block in blocks:
        if not block["rows"]:
            raise CorpusError("sentence block has no characters", block["line"])
        chars = []
        labs = []
        for lineno, char, label_text in block["rows"]:
            try:
                lab = parse_label(label_text)
            except ValueError as exc:
                raise CorpusError(str(exc), lineno) from None
            if not labels.contains(lab):
                raise CorpusError(f"label {label_text!r} not in label set", lineno)
            chars.append(char)
            labs.append(lab)
        mode = "strict" if strict else "lenient"
        try:
            labels_to_spans(labs, mode)
        except ValueError as exc:
            raise CorpusError(str(exc), block["line"]) from None
        sentences.append(
            LabeledSentence(tuple(chars), tuple(labs), block["worker"], block["id"])
        )
    return Corpus.build(sentences, labels)


def save_corpus(corpus, path):
    """Write the corpus file format; load_corpus(save_corpus(c)) round-trips."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in corpus.sentences:
            header = f"# id={s.sentence_id}"
            if s.worker is not None:
                header += f" worker={s.worker}"
            fh.write(header + "\n")
            for char, lab in zip(s.chars, s.labels):
                fh.write(f"{char}\t{lab.text()}\n")
            fh.write("\n")


def load_embeddings(path, vocab, dim, rng, name="chars"):
    """Build a character embedding table initialized from a text embedding
    file: header "<count> <dim>", then "<token> <floats...>" per line.

    Rows are copied for vocabulary hits; misses (including the unknown
    character) keep the table's default random initialization.
    """
    from .layers import EmbeddingTable
    from .autodiff import GROUP_TAGGER

    table = EmbeddingTable(name, len(vocab), dim, rng, GROUP_TAGGER)
    n_body = 0
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 2:
            raise CorpusError("embedding header must be '<count> <dim>'", 1)
        try:
            count, file_dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise CorpusError("non-numeric embedding header", 1) from None
        if file_dim != dim:
            raise CorpusError(f"embedding dim {file_dim} does not match configured {dim}", 1)
        for lineno, raw in enumerate(fh, start=2):
            if not raw.strip():
                continue
            fields = raw.rstrip("\n").split(" ")
            if len(fields) != dim + 1:
                raise CorpusError(
                    f"expected token plus {dim} values, got {len(fields)} fields", lineno
                )
            token = fields[0]
            try:
                vec = np.array([float(x) for x in fields[1:]])
            except ValueError:
                raise CorpusError("non-numeric embedding value", lineno) from None
            n_body += 1
            if token in vocab:
                table.table.value[vocab.index(token)] = vec
    if n_body != count:
        raise CorpusError(f"header promised {count} rows, file has {n_body}")
    return table


def majority_vote(annotations, labels=None):
    """Character-level majority vote over >= 2 annotations of one sentence.

    Ties prefer O, then the label with the smallest index in the label
    set (type order, B before I before E); the result carries no worker
    id.  Without a label set the same ordering is derived with entity
    types sorted by name.
    """
    if len(annotations) < 2:
        raise ValueError("majority voting needs at least 2 annotations")
    first = annotations[0]
    for a in annotations[1:]:
        if a.chars != first.chars:
            raise ValueError(
                f"annotations of {first.sentence_id!r} disagree on the characters"
            )
    key = labels.index if labels is not None else _label_sort_key
    voted = []
    for pos in range(len(first)):
        counts = Counter(a.labels[pos] for a in annotations)
        best = max(counts.values())
        tied = [lab for lab, c in counts.items() if c == best]
        if len(tied) == 1:
            voted.append(tied[0])
        elif Label("O") in tied:
            voted.append(Label("O"))
        else:
            voted.append(min(tied, key=key))
    return LabeledSentence(first.chars, tuple(voted), None, first.sentence_id)


def _label_sort_key(lab):
    kind_order = {"O": 0, "B": 1, "I": 2, "E": 3}
    return (lab.etype or "", kind_order[lab.kind])


def vote_corpus(corpus):
    """Majority-vote every sentence group; single-annotation groups pass
    through unchanged (a majority of one)."""
    voted = []
    for sid, group in corpus.grouped_by_id().items():
        if len(group) == 1:
            s = group[0]
            voted.append(LabeledSentence(s.chars, s.labels, None, sid))
        else:
            voted.append(majority_vote(group, corpus.labels))
    return Corpus.build(voted, corpus.labels)


def pairwise_kappa(corpus):
    """Average character-level Cohen's kappa over annotator pairs.

    Each pair is scored over the sentences both have annotated; pairs
    with no shared sentence are skipped.  Errors out when no pair shares
    any sentence.
    """
    groups = corpus.grouped_by_id()
    pair_data = {}
    for group in groups.values():
        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                a, b = group[i], group[j]
                if a.worker is None or b.worker is None or a.worker == b.worker:
                    continue
                key = tuple(sorted((a.worker, b.worker)))
                if a.worker > b.worker:
                    a, b = b, a
                pairs = pair_data.setdefault(key, [])
                pairs.extend(zip(a.labels, b.labels))
    if not pair_data:
        raise ValueError("no annotator pair shares a sentence")
    kappas = [_cohen_kappa(pairs) for pairs in pair_data.values()]
    return float(np.mean(kappas))


def _cohen_kappa(pairs):
    n = len(pairs)
    agree = sum(1 for a, b in pairs if a == b) / n
    counts_a = Counter(a for a, _ in pairs)
    counts_b = Counter(b for _, b in pairs)
    expected = sum(
        (counts_a[lab] / n) * (counts_b[lab] / n) for lab in set(counts_a) | set(counts_b)
    )
    if expected >= 1.0:
        return 1.0 if agree >= 1.0 else 0.0
    return (agree - expected) / (1.0 - expected)
