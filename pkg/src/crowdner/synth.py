"""Synthetic crowd-annotated corpus generator.

Gold sentences come from a small dialog-domain template grammar with
person-name and song-title slots filled from closed lexicons.  Every
training sentence is re-annotated by k distinct simulated workers, each
corrupting the gold spans according to its noise profile (dropped
entities, start/end moved by one character, confused entity types); the
corrupted spans are re-encoded with the tag scheme, so crowd labels are
always scheme-valid.  Dev and test splits keep the uncorrupted gold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import Corpus, LabeledSentence
from .tagscheme import LabelSet, Span, spans_to_labels

_SURNAMES = "李王张刘陈杨赵黄周吴徐孙马朱胡林"
_GIVEN = "伟芳娜敏静磊军洋勇艳杰涛明超秀兰霞平刚桂"

# strings that occur as both a person name and a song title, so the tag
# type is only decidable from context for them
_SHARED = (
    "传奇", "模特", "理想", "暗香", "体面", "演员",
    "董小姐", "安河桥", "李白", "南山南",
)

_SONGS = (
    "童话", "成都", "晴天", "稻香", "红豆", "倔强", "泡沫",
    "夜曲", "彩虹", "搁浅", "星晴", "借口", "告白气球", "光年之外", "青花瓷",
    "菊花台", "七里香", "龙卷风", "双截棍", "兰亭序", "东风破",
    "平凡之路", "小幸运", "匆匆那年", "消愁", "浮夸", "红玫瑰",
    "葡萄成熟时", "富士山下", "十年", "约定", "岁月神偷", "遥远的她",
) + _SHARED

PER = "PER"
SONG = "SONG"

_TEMPLATES = (
    ("我想听", SONG),
    ("放一首", SONG, "吧"),
    ("播放", PER, "的", SONG),
    ("来首", SONG),
    ("你听过", SONG, "吗"),
    (PER, "唱的", SONG, "好听"),
    ("我喜欢", PER),
    ("我喜欢", SONG),
    (PER, "是谁"),
    ("给我唱", SONG),
    ("有没有", PER, "的歌"),
    ("我要听", PER, "唱歌"),
    ("把", SONG, "再放一遍"),
    ("来一个", PER),
    ("来一个", SONG),
    ("换一首歌",),
    ("今天天气不错",),
    ("声音大一点",),
    ("我不想听了",),
    ("你会唱歌吗",),
)


def _person_lexicon():
    names = []
    for i, s in enumerate(_SURNAMES):
        g1 = _GIVEN[i % len(_GIVEN)]
        g2 = _GIVEN[(i * 7 + 3) % len(_GIVEN)]
        names.append(s + g1)
        names.append(s + g1 + g2)
        names.append(s + _GIVEN[(i * 11 + 5) % len(_GIVEN)])
    return tuple(dict.fromkeys(names))[:34] + _SHARED


_PERSONS = _person_lexicon()
LEXICONS = {PER: _PERSONS, SONG: _SONGS}
ENTITY_TYPES = (PER, SONG)


@dataclass(frozen=True)
class NoiseProfile:
    """Per-worker corruption rates; confusion rows must sum to one."""

    worker: str
    miss: float
    boundary_shift: float
    confusion: dict

    def __post_init__(self):
        for name in ("miss", "boundary_shift"):
            r = getattr(self, name)
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"{name} rate {r} outside [0, 1]")
        for src, row in self.confusion.items():
            total = sum(row.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(
                    f"confusion row for {src!r} sums to {total}, expected 1"
                )
            for rate in row.values():
                if rate < 0.0:
                    raise ValueError(f"negative confusion rate in row {src!r}")


DEFAULT_PROFILES = (
    NoiseProfile(
        "w1", 0.10, 0.10,
        {PER: {PER: 0.70, SONG: 0.30}, SONG: {PER: 0.10, SONG: 0.90}},
    ),
    NoiseProfile(
        "w2", 0.15, 0.10,
        {PER: {PER: 0.90, SONG: 0.10}, SONG: {PER: 0.30, SONG: 0.70}},
    ),
    NoiseProfile(
        "w3", 0.20, 0.10,
        {PER: {PER: 0.85, SONG: 0.15}, SONG: {PER: 0.15, SONG: 0.85}},
    ),
)


def load_profiles(path):
    """Read worker noise profiles from a JSON file: {"workers": [...]}."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    profiles = []
    for entry in doc["workers"]:
        profiles.append(
            NoiseProfile(
                entry["worker"],
                float(entry["miss"]),
                float(entry["boundary_shift"]),
                {src: dict(row) for src, row in entry["confusion"].items()},
            )
        )
    return profiles


def save_profiles(profiles, path):
    doc = {
        "workers": [
            {
                "worker": p.worker,
                "miss": p.miss,
                "boundary_shift": p.boundary_shift,
                "confusion": p.confusion,
            }
            for p in profiles
        ]
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class SynthSpec:
    """Split sizes for one generated dataset."""

    n_train: int = 800
    n_dev: int = 100
    n_test: int = 200


def _sample_gold(rng):
    """One gold sentence: characters plus entity spans."""
    template = _TEMPLATES[rng.integers(len(_TEMPLATES))]
    chars = []
    spans = []
    for part in template:
        if part in LEXICONS:
            lex = LEXICONS[part]
            entity = lex[rng.integers(len(lex))]
            start = len(chars)
            chars.extend(entity)
            spans.append(Span(start, len(chars) - 1, part))
        else:
            chars.extend(part)
    return tuple(chars), spans


def corrupt_spans(spans, n, profile, types, rng):
    """Apply one worker's noise to gold spans: drop, shift by one, retype.

    Shifts keep spans in bounds and non-overlapping; when no one-step
    move is feasible the span stays put.
    """
    out = []
    for k, sp in enumerate(spans):
        if rng.random() < profile.miss:
            continue
        start, end, etype = sp.start, sp.end, sp.etype
        if rng.random() < profile.boundary_shift:
            # checked against spans already placed and the untouched rest,
            # so two neighbours can never shift into each other
            others = out + list(spans[k + 1 :])
            candidates = []
            for s2, e2 in (
                (start - 1, end),
                (start + 1, end),
                (start, end - 1),
                (start, end + 1),
            ):
                if not (0 <= s2 <= e2 < n):
                    continue
                if any(s2 <= o.end and o.start <= e2 for o in others):
                    continue
                candidates.append((s2, e2))
            if candidates:
                start, end = candidates[rng.integers(len(candidates))]
        row = profile.confusion.get(etype)
        if row is not None:
            probs = np.array([row.get(t, 0.0) for t in types])
            etype = types[rng.choice(len(types), p=probs)]
        out.append(Span(start, end, etype))
    return out


def synth_generate(spec, profiles, annotators_per_sentence, seed):
    """Generate (train crowd corpus, dev gold corpus, test gold corpus).

    Deterministic for a given seed.  Each training sentence is annotated
    by annotators_per_sentence distinct workers drawn without
    replacement from the profiles.
    """
    k = annotators_per_sentence
    if k < 1:
        raise ValueError("need at least one annotator per sentence")
    if k > len(profiles):
        raise ValueError(
            f"requested {k} annotators per sentence but only {len(profiles)} profiles"
        )
    workers = [p.worker for p in profiles]
    if len(set(workers)) != len(workers):
        raise ValueError("duplicate worker ids in profiles")
    labels = LabelSet(sorted(ENTITY_TYPES))
    types = labels.types
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))

    train = []
    for i in range(spec.n_train):
        sid = f"train-{i:05d}"
        chars, spans = _sample_gold(rng)
        chosen = rng.choice(len(profiles), size=k, replace=False)
        for w in chosen:
            profile = profiles[int(w)]
            noisy = corrupt_spans(spans, len(chars), profile, types, rng)
            labs = tuple(spans_to_labels(len(chars), noisy))
            train.append(LabeledSentence(chars, labs, profile.worker, sid))

    def gold_split(name, count):
        sentences = []
        for i in range(count):
            chars, spans = _sample_gold(rng)
            labs = tuple(spans_to_labels(len(chars), spans))
            sentences.append(LabeledSentence(chars, labs, None, f"{name}-{i:05d}"))
        return Corpus.build(sentences, labels)

    train_corpus = Corpus.build(train, labels)
    return train_corpus, gold_split("dev", spec.n_dev), gold_split("test", spec.n_test)
