import numpy as np
import pytest

from crowdner import data
from crowdner.data import (
    Corpus,
    CorpusError,
    LabeledSentence,
    Vocabulary,
    load_corpus,
    load_embeddings,
    majority_vote,
    pairwise_kappa,
    save_corpus,
    vote_corpus,
)
from crowdner.tagscheme import LabelSet, parse_label

LABELS = LabelSet(["PER", "SONG"])


def sent(text, labels, worker=None, sid="s1"):
    return LabeledSentence(
        tuple(text), tuple(parse_label(t) for t in labels.split()), worker, sid
    )


WELL_FORMED = """\
# id=s1 worker=w1
我\tO
爱\tO
张\tB-PER
伟\tE-PER

# id=s2
你\tO
好\tO

"""


class TestLoadCorpus:
    def test_well_formed(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text(WELL_FORMED, encoding="utf-8")
        corpus = load_corpus(p)
        assert len(corpus) == 2
        assert corpus.workers == ("w1",)
        assert corpus.sentences[0].worker == "w1"
        assert corpus.sentences[1].worker is None
        assert corpus.sentences[0].chars == ("我", "爱", "张", "伟")
        assert corpus.labels == LabelSet(["PER"])

    def test_missing_tab_names_line(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text("# id=s1\n我 O\n\n", encoding="utf-8")
        with pytest.raises(CorpusError, match="line 2"):
            load_corpus(p)

    def test_unknown_label_text(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text("# id=s1\n我\tQ-PER\n\n", encoding="utf-8")
        with pytest.raises(CorpusError, match="line 2"):
            load_corpus(p)

    def test_label_outside_given_set(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text("# id=s1\n我\tB-LOC\n\n", encoding="utf-8")
        with pytest.raises(CorpusError, match="label set"):
            load_corpus(p, labels=LABELS)

    def test_empty_sentence_rejected(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text("# id=s1\n\n# id=s2\n你\tO\n\n", encoding="utf-8")
        with pytest.raises(CorpusError, match="no characters"):
            load_corpus(p)

    def test_duplicate_id_different_workers_ok(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text(
            "# id=s1 worker=w1\n我\tO\n\n# id=s1 worker=w2\n我\tO\n\n",
            encoding="utf-8",
        )
        corpus = load_corpus(p)
        assert len(corpus) == 2
        assert corpus.workers == ("w1", "w2")
        assert list(corpus.grouped_by_id()) == ["s1"]

    def test_strict_mode_rejects_orphans(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text("# id=s1\n我\tI-PER\n\n", encoding="utf-8")
        load_corpus(p)  # lenient default accepts
        with pytest.raises(CorpusError):
            load_corpus(p, strict=True)

    def test_round_trip_bitwise(self, tmp_path):
        p1 = tmp_path / "a.tsv"
        p1.write_text(WELL_FORMED, encoding="utf-8")
        corpus = load_corpus(p1)
        p2 = tmp_path / "b.tsv"
        save_corpus(corpus, p2)
        assert p2.read_bytes() == p1.read_bytes()
        again = load_corpus(p2)
        assert again.sentences == corpus.sentences


class TestVocabulary:
    def test_unk_is_zero_and_reserved(self):
        v = Vocabulary("abca")
        assert v.index("a") == 1
        assert v.index("b") == 2
        assert v.index("c") == 3
        assert v.index("z") == Vocabulary.UNK == 0
        assert len(v) == 4

    def test_encode_roundtrip_dict(self):
        v = Vocabulary("xyz")
        again = Vocabulary.from_dict(v.to_dict())
        assert np.array_equal(again.encode("zyxq"), v.encode("zyxq"))


EMB = """\
3 4
我 0.1 0.2 0.3 0.4
张 1 2 3 4
искра 9 9 9 9
"""


class TestEmbeddings:
    def vocab(self):
        return Vocabulary("我张伟")

    def test_hits_copied_misses_random(self, tmp_path):
        from crowdner.layers import EmbeddingTable

        p = tmp_path / "emb.txt"
        p.write_text(EMB, encoding="utf-8")
        vocab = self.vocab()
        table = load_embeddings(p, vocab, 4, np.random.default_rng(0))
        assert np.allclose(table.table.value[1], [0.1, 0.2, 0.3, 0.4])
        assert np.allclose(table.table.value[2], [1, 2, 3, 4])
        # UNK row and the vocabulary miss keep the default init
        ref = EmbeddingTable("chars", len(vocab), 4, np.random.default_rng(0), "tagger")
        assert np.array_equal(table.table.value[0], ref.table.value[0])
        assert np.array_equal(table.table.value[3], ref.table.value[3])

    def test_fully_covered_vocab(self, tmp_path):
        p = tmp_path / "emb.txt"
        p.write_text("2 2\n我 1 2\n张 3 4\n", encoding="utf-8")
        table = load_embeddings(p, Vocabulary("我张"), 2, np.random.default_rng(0))
        assert np.allclose(table.table.value[1:], [[1, 2], [3, 4]])

    def test_empty_intersection_equals_seeded_init(self, tmp_path):
        p = tmp_path / "emb.txt"
        p.write_text("1 2\nλ 1 2\n", encoding="utf-8")
        vocab = Vocabulary("我张")
        a = load_embeddings(p, vocab, 2, np.random.default_rng(7))
        from crowdner.layers import EmbeddingTable

        b = EmbeddingTable("chars", len(vocab), 2, np.random.default_rng(7), "tagger")
        assert np.array_equal(a.table.value, b.table.value)

    def test_dim_mismatch(self, tmp_path):
        p = tmp_path / "emb.txt"
        p.write_text(EMB, encoding="utf-8")
        with pytest.raises(CorpusError, match="dim"):
            load_embeddings(p, self.vocab(), 5, np.random.default_rng(0))

    def test_non_numeric_field_names_line(self, tmp_path):
        p = tmp_path / "emb.txt"
        p.write_text("1 2\n我 0.5 abc\n", encoding="utf-8")
        with pytest.raises(CorpusError, match="line 2"):
            load_embeddings(p, self.vocab(), 2, np.random.default_rng(0))

    def test_header_count_mismatch(self, tmp_path):
        p = tmp_path / "emb.txt"
        p.write_text("5 4\n我 1 2 3 4\n", encoding="utf-8")
        with pytest.raises(CorpusError, match="promised"):
            load_embeddings(p, self.vocab(), 4, np.random.default_rng(0))


class TestMajorityVote:
    def test_majority_wins(self):
        anns = [
            sent("张伟", "B-PER E-PER", "w1"),
            sent("张伟", "B-PER E-PER", "w2"),
            sent("张伟", "O O", "w3"),
        ]
        voted = majority_vote(anns, LABELS)
        assert [l.text() for l in voted.labels] == ["B-PER", "E-PER"]
        assert voted.worker is None

    def test_three_way_tie_prefers_o(self):
        anns = [
            sent("张", "B-PER", "w1"),
            sent("张", "B-SONG", "w2"),
            sent("张", "O", "w3"),
        ]
        assert majority_vote(anns, LABELS).labels[0].text() == "O"

    def test_tie_without_o_takes_smallest_label_index(self):
        anns = [
            sent("张", "B-SONG", "w1"),
            sent("张", "B-PER", "w2"),
        ]
        assert majority_vote(anns, LABELS).labels[0].text() == "B-PER"

    def test_identical_annotations_pass_through(self):
        anns = [sent("张伟", "B-PER E-PER", w) for w in ("w1", "w2", "w3")]
        assert majority_vote(anns, LABELS).labels == anns[0].labels

    def test_char_mismatch(self):
        with pytest.raises(ValueError, match="characters"):
            majority_vote([sent("张伟", "O O", "w1"), sent("张三", "O O", "w2")], LABELS)

    def test_needs_two(self):
        with pytest.raises(ValueError):
            majority_vote([sent("张", "O", "w1")], LABELS)

    def test_odd_k_no_ties_order_independent(self):
        anns = [
            sent("张伟", "B-PER E-PER", "w1"),
            sent("张伟", "B-SONG E-SONG", "w2"),
            sent("张伟", "B-PER E-PER", "w3"),
        ]
        base = majority_vote(anns, LABELS).labels
        for perm in ((1, 0, 2), (2, 1, 0), (1, 2, 0)):
            shuffled = [anns[i] for i in perm]
            assert majority_vote(shuffled, LABELS).labels == base

    def test_vote_corpus_passes_singletons_through(self):
        c = Corpus.build(
            [sent("张", "B-PER", "w1", sid="a"), sent("伟", "O", "w1", sid="b"),
             sent("伟", "B-PER", "w2", sid="b")],
            LABELS,
        )
        voted = vote_corpus(c)
        assert len(voted) == 2
        assert all(s.worker is None for s in voted.sentences)


class TestKappa:
    def test_identical_annotations_kappa_one(self):
        c = Corpus.build(
            [sent("张伟好", "B-PER E-PER O", "w1"), sent("张伟好", "B-PER E-PER O", "w2")],
            LABELS,
        )
        assert pairwise_kappa(c) == pytest.approx(1.0)

    def test_hand_derived_zero(self):
        # agreement 0.5 with (0.5, 0.5) marginals on both sides -> kappa 0
        c = Corpus.build(
            [
                sent("一二三四", "O O B-PER B-PER", "w1"),
                sent("一二三四", "O B-PER O B-PER", "w2"),
            ],
            LABELS,
        )
        assert pairwise_kappa(c) == pytest.approx(0.0, abs=1e-12)

    def test_disjoint_annotators_skipped_and_error_when_none_shared(self):
        c = Corpus.build(
            [sent("张", "O", "w1", sid="a"), sent("伟", "O", "w2", sid="b")],
            LABELS,
        )
        with pytest.raises(ValueError, match="no annotator pair"):
            pairwise_kappa(c)

    def test_pair_without_shared_sentences_is_skipped(self):
        c = Corpus.build(
            [
                sent("张伟", "B-PER E-PER", "w1", sid="a"),
                sent("张伟", "B-PER E-PER", "w2", sid="a"),
                sent("好", "O", "w3", sid="b"),
            ],
            LABELS,
        )
        # w3 shares nothing; only the (w1, w2) pair counts
        assert pairwise_kappa(c) == pytest.approx(1.0)
