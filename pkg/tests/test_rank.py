import logging
import math

import numpy as np
import pytest

from semidrec.corpus import Interaction, UserSequence
from semidrec.errors import DataError
from semidrec.rank import (
    AdversarialScorer,
    CoocRetriever,
    FileRetriever,
    FileScorer,
    OracleScorer,
    OverlapScorer,
    RandomScorer,
    letters,
    make_eval_prompt,
    read_candidates,
    read_logits,
    run_ranking,
    token_cross_entropy,
    verbalize_rank,
    write_candidates,
    write_logits,
)


def make_prompt(items, gt=None, history=("Old Favorite",), titles=None):
    items = tuple(items)
    titles = tuple(titles) if titles is not None else tuple(f"Title {i}" for i in items)
    return make_eval_prompt("u1", "<a_1>", history, items, titles, gt_item=gt)


class FixedScorer:
    name = "fixed"

    def __init__(self, logits):
        self.logits = np.asarray(logits, dtype=float)

    def score(self, prompt):
        return self.logits


class TestLetters:
    def test_single_letters(self):
        assert letters(3) == ["A", "B", "C"]
        assert letters(26)[-1] == "Z"

    def test_extends_to_double_letters(self):
        labs = letters(28)
        assert labs[25:] == ["Z", "AA", "AB"]
        assert len(set(labs)) == 28

    def test_bounds(self):
        with pytest.raises(ValueError):
            letters(0)
        with pytest.raises(ValueError):
            letters(26 + 26 * 26 + 1)


class TestVerbalizeRank:
    def test_oracle_scorer_puts_ground_truth_first(self):
        items = [f"it{i}" for i in range(20)]
        result = verbalize_rank(OracleScorer(), make_prompt(items, gt="it13"))
        assert result.gt_in_candidates
        assert result.gt_rank == 1
        assert result.ranking[0] == "it13"

    def test_adversarial_scorer_puts_ground_truth_last(self):
        items = [f"it{i}" for i in range(20)]
        result = verbalize_rank(AdversarialScorer(), make_prompt(items, gt="it13"))
        assert result.gt_rank == 20

    def test_uniform_logits_keep_letter_order(self):
        items = [f"it{i:02d}" for i in range(20)]
        result = verbalize_rank(FixedScorer(np.zeros(20)), make_prompt(items))
        assert result.ranking == tuple(items)

    def test_tie_goes_to_earlier_letter(self):
        result = verbalize_rank(FixedScorer([1.0, 2.0, 2.0, 0.0]),
                                make_prompt(["w", "x", "y", "z"]))
        assert result.ranking == ("x", "y", "w", "z")

    def test_ground_truth_absent(self):
        result = verbalize_rank(FixedScorer([1.0, 0.0]),
                                make_prompt(["a", "b"], gt="zzz"))
        assert not result.gt_in_candidates
        assert result.gt_rank is None

    def test_monotone_transforms_never_change_the_ranking(self):
        rng = np.random.default_rng(0)
        items = [f"it{i:02d}" for i in range(12)]
        transforms = [
            lambda v: 2.0 * v + 3.0,
            np.exp,
            lambda v: np.arctan(v) * 5.0,
            lambda v: v ** 3,
        ]
        for _ in range(100):
            logits = rng.standard_normal(12)
            base = verbalize_rank(FixedScorer(logits), make_prompt(items))
            for tf in transforms:
                mapped = verbalize_rank(FixedScorer(tf(logits)), make_prompt(items))
                assert mapped.ranking == base.ranking

    def test_permuting_candidates_with_their_logits_is_neutral(self):
        rng = np.random.default_rng(1)
        items = [f"it{i:02d}" for i in range(15)]
        for _ in range(25):
            logits = rng.permutation(15).astype(float)  # distinct values
            base = verbalize_rank(FixedScorer(logits), make_prompt(items))
            perm = rng.permutation(15)
            shuffled = verbalize_rank(
                FixedScorer(logits[perm]),
                make_prompt([items[i] for i in perm]),
            )
            assert shuffled.ranking == base.ranking

    def test_shape_mismatch_names_the_scorer(self):
        with pytest.raises(DataError, match="fixed"):
            verbalize_rank(FixedScorer([1.0, 2.0]), make_prompt(["a", "b", "c"]))

    def test_non_finite_logits_are_fatal(self):
        with pytest.raises(DataError, match="non-finite"):
            verbalize_rank(FixedScorer([1.0, np.nan]), make_prompt(["a", "b"]))


class TestEvalPrompt:
    def test_text_layout(self):
        items = [f"it{i:02d}" for i in range(20)]
        prompt = make_prompt(items, history=["Alpha", "Beta"])
        assert "<a_1>" in prompt.text
        assert "Alpha; Beta" in prompt.text
        assert "A. Title it00" in prompt.text
        assert "T. Title it19" in prompt.text
        assert "it00" not in prompt.text.replace("Title it", "")

    def test_history_capped_at_twenty(self):
        history = [f"Old {i}" for i in range(30)]
        prompt = make_prompt(["a", "b"], history=history)
        assert "Old 29" in prompt.text
        assert "Old 9" not in prompt.text

    def test_more_than_26_candidates_get_double_letters(self):
        items = [f"it{i:02d}" for i in range(30)]
        prompt = make_prompt(items)
        assert "AA. Title it26" in prompt.text

    def test_mismatched_titles_rejected(self):
        with pytest.raises(ValueError):
            make_eval_prompt("u1", "<a_1>", ["h"], ["a", "b"], ["only one"])


def seqs_from(paths):
    out = {}
    for user, items in paths.items():
        inters = [Interaction(user, item, 4.0, 100 + j) for j, item in enumerate(items)]
        out[user] = UserSequence(user, inters)
    return out


class TestCoocRetriever:
    def test_always_following_item_comes_first(self):
        train = seqs_from({
            "u1": ["a", "b", "c"],
            "u2": ["a", "b"],
            "u3": ["d", "a", "b"],
        })
        catalog = {i: i.upper() for i in "abcde"}
        retriever = CoocRetriever(train, catalog)
        got = retriever.retrieve("q", ["a"], top_k=4)
        assert got[0] == "b"  # b always follows a

    def test_recent_history_outweighs_older(self):
        train = seqs_from({"u1": ["a", "b"], "u2": ["x", "c"]})
        catalog = {i: i.upper() for i in "abcx"}
        retriever = CoocRetriever(train, catalog)
        # decay 0.9: successor of the newest history item wins
        got = retriever.retrieve("q", ["a", "x"], top_k=2)
        assert got[0] == "c"
        assert got[1] == "b"

    def test_cold_history_falls_back_to_popularity(self):
        train = seqs_from({
            "u1": ["p", "p2"], "u2": ["p", "p3"], "u3": ["p2", "p"],
        })
        catalog = {i: i.upper() for i in ("p", "p2", "p3", "q", "zz")}
        retriever = CoocRetriever(train, catalog)
        got = retriever.retrieve("q", ["zz"], top_k=4)
        # p appears 3 times in training, p2 twice, p3 once, q never
        assert got == ["p", "p2", "p3", "q"]

    def test_score_ties_break_by_item_id(self):
        train = seqs_from({"u1": ["a", "m"], "u2": ["a", "k"]})
        catalog = {i: i.upper() for i in "akmz"}
        got = CoocRetriever(train, catalog, popularity_weight=0.0).retrieve(
            "q", ["a"], top_k=3)
        assert got[:2] == ["k", "m"]

    def test_history_items_excluded(self):
        train = seqs_from({"u1": ["a", "b", "a"]})
        catalog = {i: i.upper() for i in "ab"}
        got = CoocRetriever(train, catalog).retrieve("q", ["a"], top_k=2)
        assert "a" not in got

    def test_returns_exactly_top_k(self):
        train = seqs_from({"u1": ["a", "b"]})
        catalog = {f"i{k:02d}": f"I{k}" for k in range(30)} | {"a": "A", "b": "B"}
        got = CoocRetriever(train, catalog).retrieve("q", ["a"], top_k=20)
        assert len(got) == 20
        assert len(set(got)) == 20

    def test_small_catalog_warns_and_shrinks(self, caplog):
        train = seqs_from({"u1": ["a", "b"]})
        catalog = {i: i.upper() for i in "abc"}
        with caplog.at_level(logging.WARNING):
            got = CoocRetriever(train, catalog).retrieve("q", ["a"], top_k=20)
        assert got == ["b", "c"]
        assert "eligible" in caplog.text

    def test_empty_history_is_fatal(self):
        retriever = CoocRetriever(seqs_from({"u1": ["a", "b"]}), {"a": "A", "b": "B"})
        with pytest.raises(DataError, match="empty history"):
            retriever.retrieve("q", [])


class TestScorers:
    def test_overlap_counts_shared_tokens(self):
        prompt = make_prompt(
            ["x", "y", "z"],
            history=["Blue Garden Trowel", "Garden Gloves"],
            titles=["Garden Hose Blue", "Red Paint", "Garden Kit"],
        )
        got = OverlapScorer().score(prompt)
        assert got == pytest.approx([2 / 3, 0.0, 1 / 2])

    def test_random_scorer_is_stable_per_user(self):
        prompt = make_prompt(["a", "b", "c"])
        s1 = RandomScorer(seed=4).score(prompt)
        s2 = RandomScorer(seed=4).score(prompt)
        assert np.array_equal(s1, s2)
        assert not np.array_equal(s1, RandomScorer(seed=5).score(prompt))


class TestTokenCrossEntropy:
    def test_uniform_distributions(self):
        assert token_cross_entropy([0, 3], [[0.25] * 4, [0.25] * 4]) == \
               pytest.approx(2 * math.log(4))
        assert token_cross_entropy([7], [[0.125] * 8]) == pytest.approx(math.log(8))

    def test_certain_prediction_costs_nothing(self):
        assert token_cross_entropy([1], [[0.0, 1.0, 0.0]]) == 0.0

    def test_zero_probability_is_infinite(self):
        assert token_cross_entropy([0], [[0.0, 1.0]]) == math.inf

    def test_validation(self):
        with pytest.raises(ValueError, match="sum to 1"):
            token_cross_entropy([0], [[0.5, 0.4]])
        with pytest.raises(ValueError, match="outside"):
            token_cross_entropy([2], [[0.5, 0.5]])
        with pytest.raises(ValueError, match="equal length"):
            token_cross_entropy([0, 1], [[1.0]])


class TestRunRanking:
    def test_oracle_run_ranks_ground_truth_first(self):
        train = seqs_from({
            "u1": ["a", "b", "c"],
            "u2": ["b", "c", "d"],
            "u3": ["c", "d", "e"],
        })
        catalog = {i: f"Item {i.upper()}" for i in "abcdefg"}
        retriever = CoocRetriever(train, catalog)
        results = run_ranking(
            test_items={"u1": "d", "u2": "e"},
            histories={"u1": ["a", "b", "c"], "u2": ["b", "c", "d"]},
            catalog=catalog,
            rendered_ids={"u1": "<a_1>", "u2": "<a_2>"},
            retriever=retriever,
            scorer=OracleScorer(),
            top_k=4,
        )
        assert [r.user_id for r in results] == ["u1", "u2"]
        assert all(r.gt_rank == 1 for r in results)

    def test_retrieved_item_missing_from_catalog_is_fatal(self):
        class BadRetriever:
            name = "bad"

            def retrieve(self, user_id, history, top_k):
                return ["ghost"]

        with pytest.raises(DataError, match="ghost"):
            run_ranking({"u1": "a"}, {"u1": ["a"]}, {"a": "A"},
                        {"u1": "<a_1>"}, BadRetriever(), OracleScorer(), top_k=1)


class TestFileFormats:
    def test_candidates_round_trip(self, tmp_path):
        cands = {"u1": ["a", "b", "c"], "u2": ["d", "e", "f"]}
        path = tmp_path / "cands.tsv"
        write_candidates(path, cands)
        assert read_candidates(path) == cands

    def test_candidate_duplicates_rejected(self, tmp_path):
        path = tmp_path / "cands.tsv"
        path.write_text("u1\ta,b,a\n")
        with pytest.raises(DataError, match="duplicate candidate"):
            read_candidates(path)
        path.write_text("u1\ta,b\nu1\tc,d\n")
        with pytest.raises(DataError, match="duplicate user"):
            read_candidates(path)

    def test_file_retriever_contract(self, tmp_path):
        path = tmp_path / "cands.tsv"
        write_candidates(path, {"u1": ["a", "b", "c"]})
        retriever = FileRetriever(path)
        assert retriever.retrieve("u1", ["x"], top_k=2) == ["a", "b"]
        with pytest.raises(DataError, match="no precomputed"):
            retriever.retrieve("u9", ["x"], top_k=2)
        with pytest.raises(DataError, match="need 5"):
            retriever.retrieve("u1", ["x"], top_k=5)

    def test_logits_round_trip_bitwise(self, tmp_path):
        logits = {
            "u1": np.array([0.1, -2.5e-17, 3.0]),
            "u2": np.array([1 / 3, math.pi, -0.0]),
        }
        path = tmp_path / "logits.tsv"
        write_logits(path, logits)
        loaded = read_logits(path)
        for user, vec in logits.items():
            assert np.array_equal(loaded[user], vec)

    def test_non_finite_logits_rejected_on_read(self, tmp_path):
        path = tmp_path / "logits.tsv"
        path.write_text("u1\t1.0,inf\n")
        with pytest.raises(DataError, match="non-finite"):
            read_logits(path)

    def test_file_scorer_checks_length(self, tmp_path):
        path = tmp_path / "logits.tsv"
        write_logits(path, {"u1": np.array([1.0, 2.0])})
        scorer = FileScorer(path)
        prompt = make_prompt(["a", "b", "c"])
        with pytest.raises(DataError, match="3 candidates"):
            scorer.score(prompt)
