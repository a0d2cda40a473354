import json
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semidrec import corpus
from semidrec.errors import DataError


def review(user, item, ts, rating=5.0, text="fine"):
    return json.dumps({
        "reviewerID": user, "asin": item, "overall": rating,
        "unixReviewTime": ts, "reviewText": text,
    })


def meta(item, title):
    return json.dumps({"asin": item, "title": title})


META = [meta("i1", "First Thing"), meta("i2", "Second Thing"), meta("i3", "Third Thing")]


class TestIngest:
    def test_sequences_sorted_chronologically(self):
        lines = [review("u1", "i2", 200), review("u1", "i1", 100), review("u1", "i3", 300)]
        seqs, catalog, stats = corpus.ingest(lines, META)
        assert [s.user_id for s in seqs] == ["u1"]
        assert seqs[0].item_ids() == ["i1", "i2", "i3"]
        assert catalog == {"i1": "First Thing", "i2": "Second Thing", "i3": "Third Thing"}
        assert stats.malformed_reviews == 0

    def test_timestamp_tie_keeps_input_order(self):
        lines = [review("u1", "i2", 100), review("u1", "i1", 100)]
        seqs, _, _ = corpus.ingest(lines, META)
        assert seqs[0].item_ids() == ["i2", "i1"]

    def test_malformed_lines_counted_and_skipped(self):
        lines = [
            "not json",
            json.dumps({"reviewerID": "u1", "asin": "i1"}),  # missing timestamp
            review("u1", "i1", -5),  # negative timestamp
            review("u1", "i1", 100, rating=9.0),  # rating outside [1,5]
            review("u1", "i1", 100),
        ]
        seqs, _, stats = corpus.ingest(lines, META)
        assert stats.malformed_reviews == 4
        assert len(seqs[0]) == 1

    def test_missing_rating_becomes_zero(self):
        line = json.dumps({"reviewerID": "u1", "asin": "i1", "unixReviewTime": 10})
        seqs, _, _ = corpus.ingest([line], META)
        inter = seqs[0].interactions[0]
        assert inter.rating == 0.0
        assert inter.review_text == ""

    def test_untitled_items_dropped(self):
        lines = [review("u1", "i1", 100), review("u1", "ghost", 200)]
        seqs, _, stats = corpus.ingest(lines, META)
        assert seqs[0].item_ids() == ["i1"]
        assert stats.dropped_missing_title == 1

    def test_malformed_metadata_counted(self):
        bad_meta = ["{broken", json.dumps({"asin": "i9", "title": "  "}), meta("i1", "Ok")]
        _, catalog, stats = corpus.ingest([review("u1", "i1", 1)], bad_meta)
        assert stats.malformed_meta == 2
        assert catalog == {"i1": "Ok"}

    def test_zero_users_is_fatal(self):
        with pytest.raises(DataError):
            corpus.ingest([review("u1", "ghost", 100)], META)


def seq(user, items):
    return corpus.UserSequence(user, [
        corpus.Interaction(user, item, 5.0, ts) for ts, item in enumerate(items)
    ])


class TestKcore:
    def test_already_dense_is_unchanged(self):
        seqs = [seq(f"u{i}", ["a", "b"]) for i in range(2)]
        out = corpus.kcore_filter(seqs, k=2)
        assert {s.user_id for s in out} == {"u0", "u1"}
        assert all(len(s) == 2 for s in out)

    def test_cascading_removal(self):
        # dropping short user u3 starves item "c", which then starves u1,
        # while the a/b core held by u0 and u2 stays intact
        seqs = [
            seq("u0", ["a", "b"]),
            seq("u1", ["c", "a"]),
            seq("u2", ["a", "b"]),
            seq("u3", ["c"]),
        ]
        out = corpus.kcore_filter(seqs, k=2)
        assert {s.user_id for s in out} == {"u0", "u2"}
        items = Counter(i for s in out for i in s.item_ids())
        assert "c" not in items
        assert all(len(s) >= 2 for s in out)
        assert all(c >= 2 for c in items.values())

    def test_empty_result_is_fatal(self):
        with pytest.raises(DataError):
            corpus.kcore_filter([seq("u0", ["a"])], k=5)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(
        st.tuples(st.integers(0, 12), st.lists(st.integers(0, 10), min_size=1,
                                               max_size=8, unique=True)),
        min_size=1, max_size=20))
    def test_survivors_always_meet_threshold(self, raw):
        merged = {}
        for uid, items in raw:
            merged.setdefault(f"u{uid}", set()).update(items)
        seqs = [seq(u, [f"i{i}" for i in sorted(items)]) for u, items in merged.items()]
        try:
            out = corpus.kcore_filter(seqs, k=3)
        except DataError:
            return
        item_counts = Counter(i for s in out for i in s.item_ids())
        assert all(len(s) >= 3 for s in out)
        assert all(c >= 3 for c in item_counts.values())


class TestSplit:
    def test_last_is_test_second_to_last_is_valid(self):
        split = corpus.split_leave_one_out([seq("u0", ["a", "b", "c", "d"])])
        assert [i.item_id for i in split.train["u0"]] == ["a", "b"]
        assert split.valid["u0"].item_id == "c"
        assert split.test["u0"].item_id == "d"

    def test_short_users_are_skipped(self):
        split = corpus.split_leave_one_out([seq("u0", ["a", "b"]), seq("u1", ["a", "b", "c"])])
        assert split.skipped_users == ["u0"]
        assert set(split.train) == {"u1"}


class TestSerialization:
    def test_round_trip(self, tmp_path):
        seqs = [
            corpus.UserSequence("u1", [
                corpus.Interaction("u1", "i1", 4.0, 100),
                corpus.Interaction("u1", "i2", 3.5, 200),
            ]),
            corpus.UserSequence("u2", [corpus.Interaction("u2", "i1", 0.0, 50)]),
        ]
        path = tmp_path / "seqs.tsv"
        corpus.write_sequences(path, seqs)
        back = corpus.read_sequences(path)
        assert [s.user_id for s in back] == ["u1", "u2"]
        assert back[0].interactions[1] == corpus.Interaction("u1", "i2", 3.5, 200)

    def test_reserved_characters_rejected(self, tmp_path):
        bad = [corpus.UserSequence("u 1", [corpus.Interaction("u 1", "i1", 5.0, 1)])]
        with pytest.raises(DataError):
            corpus.write_sequences(tmp_path / "x.tsv", bad)

    def test_catalog_round_trip_sanitizes_tabs(self, tmp_path):
        path = tmp_path / "catalog.tsv"
        corpus.write_catalog(path, {"i1": "A\tTitle", "i2": "Plain"})
        assert corpus.read_catalog(path) == {"i1": "A Title", "i2": "Plain"}


@pytest.mark.parametrize("rating,expected", [
    (4.0, "4"), (3.5, "3.5"), (1.0, "1"), (5.0, "5"), (0.0, "0"),
])
def test_format_rating(rating, expected):
    assert corpus.format_rating(rating) == expected
