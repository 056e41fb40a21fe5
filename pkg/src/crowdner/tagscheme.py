"""BIEO tag scheme over entity types: spans <-> per-character label sequences.

A multi-character entity of type T covering characters s..e is written
B-T at s, E-T at e and I-T in between; a single-character entity is a
lone B-T.  Non-entity characters carry O.  There is no dedicated
single-character mark, so the label alphabet has exactly 3*|types| + 1
entries.
"""

from __future__ import annotations

from dataclasses import dataclass


class TagSchemeError(ValueError):
    """Invalid span set or label sequence; carries the offending position."""

    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position


class _Boundary:
    """Sentence-boundary pseudo-label (BOS/EOS)."""

    __slots__ = ("name",)

    def __init__(self, name):
        self.name = name

    def __repr__(self):
        return self.name


BOS = _Boundary("BOS")
EOS = _Boundary("EOS")

_KINDS = ("O", "B", "I", "E")


@dataclass(frozen=True, order=True)
class Span:
    """Entity occupying characters start..end inclusive."""

    start: int
    end: int
    etype: str


@dataclass(frozen=True)
class Label:
    kind: str
    etype: str | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise TagSchemeError(f"unknown label kind {self.kind!r}")
        if self.kind == "O" and self.etype is not None:
            raise TagSchemeError("label O carries no entity type")
        if self.kind != "O" and not self.etype:
            raise TagSchemeError(f"label kind {self.kind} requires an entity type")

    def text(self):
        return self.kind if self.kind == "O" else f"{self.kind}-{self.etype}"

    def __str__(self):
        return self.text()


O = Label("O")


def parse_label(text):
    """Parse the on-disk form: "O" or "B-PER"/"I-PER"/"E-PER"."""
    if text == "O":
        return O
    if len(text) < 3 or text[1] != "-" or text[0] not in ("B", "I", "E"):
        raise TagSchemeError(f"malformed label text {text!r}")
    return Label(text[0], text[2:])


def _check_etype(name):
    if not name or "-" in name:
        raise TagSchemeError(f"invalid entity type name {name!r}")


class LabelSet:
    """Fixed, ordered label alphabet: O first, then B/I/E per entity type.

    The label<->index mapping is a bijection and depends only on the
    entity-type order, so it survives save/load unchanged.
    """

    def __init__(self, types):
        types = tuple(types)
        if len(set(types)) != len(types):
            raise TagSchemeError("duplicate entity types")
        for t in types:
            _check_etype(t)
        self.types = types
        labels = [O]
        for t in types:
            labels.extend((Label("B", t), Label("I", t), Label("E", t)))
        self.labels = tuple(labels)
        self._index = {lab: i for i, lab in enumerate(self.labels)}

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __eq__(self, other):
        return isinstance(other, LabelSet) and self.types == other.types

    def index(self, label):
        try:
            return self._index[label]
        except KeyError:
            raise TagSchemeError(f"label {label} not in label set") from None

    def label(self, i):
        return self.labels[i]

    def contains(self, label):
        return label in self._index

    def encode(self, labels):
        return [self.index(lab) for lab in labels]

    def decode(self, ids):
        return [self.labels[i] for i in ids]


def spans_to_labels(n, spans):
    """Encode non-overlapping spans over a length-n sentence as BIEO labels."""
    out = [O] * n
    taken = [False] * n
    for sp in spans:
        if not (0 <= sp.start <= sp.end < n):
            raise TagSchemeError(f"span {sp} out of bounds for length {n}")
        if any(taken[sp.start : sp.end + 1]):
            raise TagSchemeError(f"span {sp} overlaps another span")
        for i in range(sp.start, sp.end + 1):
            taken[i] = True
        if sp.start == sp.end:
            out[sp.start] = Label("B", sp.etype)
        else:
            out[sp.start] = Label("B", sp.etype)
            out[sp.end] = Label("E", sp.etype)
            for i in range(sp.start + 1, sp.end):
                out[i] = Label("I", sp.etype)
    return out


def valid_transition(prev, nxt):
    """True iff the (prev, nxt) pair can occur in a strict BIEO sequence.

    BOS/EOS stand for the sentence boundaries.  A B label may be followed
    by O/B/EOS (it closes a one-character entity) or by I/E of the same
    type; an I must be continued by I/E of the same type.
    """
    if prev is EOS or nxt is BOS:
        return False
    if nxt is EOS:
        return prev is not BOS and prev.kind in ("O", "B", "E")
    if nxt.kind in ("O", "B"):
        return prev is BOS or prev.kind in ("O", "B", "E")
    # nxt is I or E: must continue an open entity of the same type
    if prev is BOS:
        return False
    return prev.kind in ("B", "I") and prev.etype == nxt.etype


def labels_to_spans(labels, mode="strict"):
    """Decode a label sequence into spans.

    strict:  reject any sequence spans_to_labels cannot produce, reporting
             the position of the first violation.
    lenient: extract every maximal run B-T (I-T)* (E-T)? as a span and
             drop orphan I/E labels (used on raw model predictions).
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"unknown decode mode {mode!r}")
    n = len(labels)
    if mode == "strict":
        prev = BOS
        for i, lab in enumerate(labels):
            if not valid_transition(prev, lab):
                raise TagSchemeError(
                    f"invalid label transition {prev} -> {lab} at position {i}",
                    position=i,
                )
            prev = lab
        if not valid_transition(prev, EOS):
            raise TagSchemeError(
                f"sequence ends mid-entity ({prev} at position {n - 1})",
                position=n - 1,
            )

    spans = []
    i = 0
    while i < n:
        lab = labels[i]
        if lab.kind != "B":
            i += 1
            continue
        t = lab.etype
        j = i + 1
        while j < n and labels[j] == Label("I", t):
            j += 1
        if j < n and labels[j] == Label("E", t):
            spans.append(Span(i, j, t))
            i = j + 1
        else:
            spans.append(Span(i, j - 1, t))
            i = j
    return spans
