"""Two-stage ranking: candidate retrieval, then letter-verbalized scoring.

Stage one retrieves top-k candidate items per user (a co-occurrence
baseline, or precomputed candidates from a file). Stage two labels the
candidates with index letters, asks a scorer for one logit per letter, and
sorts candidates by logit. The scorer abstracts an LLM head; deterministic
toy scorers and a precomputed-logit file adapter are provided, so any
external model's outputs can be evaluated without running inference here.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
import string
from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np

from .embed import tokenize
from .errors import DataError
from .prompts import MAX_HISTORY, NEXT_ITEM_TEMPLATE

log = logging.getLogger(__name__)

TOP_K = 20


def letters(n: int) -> list[str]:
    """First n candidate labels: A..Z, then AA, AB, ..."""
    if n < 1:
        raise ValueError("need at least one label")
    singles = list(string.ascii_uppercase)
    if n <= len(singles):
        return singles[:n]
    doubles = ["".join(p) for p in itertools.product(string.ascii_uppercase, repeat=2)]
    labels = singles + doubles
    if n > len(labels):
        raise ValueError(f"cannot label {n} candidates")
    return labels[:n]


@dataclass(frozen=True)
class RankingPrompt:
    """An eval-time next-item prompt plus the metadata scorers may use.

    Only .text is LLM-visible; item IDs stay out of it.
    """
    user_id: str
    text: str
    history_titles: tuple[str, ...]
    candidate_items: tuple[str, ...]
    candidate_titles: tuple[str, ...]
    gt_item: str | None = None


def make_eval_prompt(user_id: str, rendered_id: str, history_titles,
                     candidate_items, candidate_titles,
                     gt_item: str | None = None) -> RankingPrompt:
    history = tuple(history_titles)[-MAX_HISTORY:]
    items = tuple(candidate_items)
    titles = tuple(candidate_titles)
    if len(items) != len(titles):
        raise ValueError("candidate items and titles must align")
    labels = letters(len(items))
    text = NEXT_ITEM_TEMPLATE.format(
        sid=rendered_id,
        history="; ".join(history),
        candidates="\n".join(f"{l}. {t}" for l, t in zip(labels, titles)),
    )
    return RankingPrompt(user_id, text, history, items, titles, gt_item)


@dataclass
class RankingResult:
    user_id: str
    ranking: tuple[str, ...]  # candidate item_ids, best first
    gt_in_candidates: bool
    gt_rank: int | None  # 1-based position of the ground truth, if present


def verbalize_rank(scorer, prompt: RankingPrompt, candidates=None) -> RankingResult:
    """Score each candidate through its letter logit and sort descending.

    Ties go to the earlier letter. Non-finite scorer output is fatal.
    """
    items = tuple(candidates) if candidates is not None else prompt.candidate_items
    logits = np.asarray(scorer.score(prompt), dtype=float)
    if logits.shape != (len(items),):
        raise DataError(
            f"scorer {scorer.name!r} returned {logits.shape} logits for {len(items)} candidates"
        )
    if not np.all(np.isfinite(logits)):
        raise DataError(f"scorer {scorer.name!r} returned non-finite logits")
    order = np.lexsort((np.arange(len(items)), -logits))
    ranking = tuple(items[i] for i in order)
    gt = prompt.gt_item
    if gt is not None and gt in ranking:
        return RankingResult(prompt.user_id, ranking, True, ranking.index(gt) + 1)
    return RankingResult(prompt.user_id, ranking, False, None)


class CoocRetriever:
    """Successor co-occurrence with recency decay plus a popularity prior.

    score(item) = sum over history items j of cooc(j, item) * decay^age(j)
    plus popularity_weight * train-count(item), where age 0 is the most
    recent history item and cooc counts directed adjacent pairs in training
    sequences. History items are excluded from the output.
    """

    name = "cooc"

    def __init__(self, train_sequences, catalog: dict[str, str],
                 decay: float = 0.9, popularity_weight: float = 0.01):
        self.decay = decay
        self.popularity_weight = popularity_weight
        self.items = sorted(catalog)
        self.popularity = Counter()
        self.cooc: dict[str, Counter] = defaultdict(Counter)
        for seq in train_sequences.values():
            ids = seq.item_ids()
            self.popularity.update(ids)
            for a, b in zip(ids, ids[1:]):
                self.cooc[a][b] += 1

    def retrieve(self, user_id: str, history, top_k: int = TOP_K) -> list[str]:
        history = list(history)
        if not history:
            raise DataError(f"user {user_id!r} has an empty history")
        scores = defaultdict(float)
        for age, j in enumerate(reversed(history)):
            weight = self.decay ** age
            for succ, count in self.cooc.get(j, {}).items():
                scores[succ] += count * weight
        exclude = set(history)
        eligible = [i for i in self.items if i not in exclude]
        if len(eligible) < top_k:
            log.warning("only %d eligible items for user %s (requested %d)",
                        len(eligible), user_id, top_k)
            top_k = len(eligible)
        keyed = sorted(
            eligible,
            key=lambda i: (-(scores[i] + self.popularity_weight * self.popularity[i]), i),
        )
        return keyed[:top_k]


class FileRetriever:
    """Candidates precomputed elsewhere: TSV "user_id TAB item1,...,itemN"."""

    name = "file"

    def __init__(self, path):
        self.candidates = read_candidates(path)

    def retrieve(self, user_id: str, history, top_k: int = TOP_K) -> list[str]:
        if user_id not in self.candidates:
            raise DataError(f"no precomputed candidates for user {user_id!r}")
        cands = self.candidates[user_id]
        if len(cands) < top_k:
            raise DataError(
                f"user {user_id!r} has {len(cands)} precomputed candidates, need {top_k}"
            )
        return list(cands[:top_k])


class OverlapScorer:
    """Token overlap between a candidate title and the user's history.

    logit = count of candidate-title tokens present anywhere in the history,
    divided by the candidate's token count.
    """

    name = "overlap"

    def score(self, prompt: RankingPrompt) -> np.ndarray:
        hist = set(tokenize(" ".join(prompt.history_titles)))
        out = np.zeros(len(prompt.candidate_titles))
        for i, title in enumerate(prompt.candidate_titles):
            toks = tokenize(title)
            if toks:
                out[i] = sum(t in hist for t in toks) / len(toks)
        return out


class RandomScorer:
    """Seeded noise, stable per user so reruns reproduce the same ranking."""

    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def score(self, prompt: RankingPrompt) -> np.ndarray:
        digest = hashlib.sha256(f"{self.seed}\x1f{prompt.user_id}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        return rng.standard_normal(len(prompt.candidate_items))


class OracleScorer:
    """Upper bound: logit 1 on the ground-truth candidate, 0 elsewhere."""

    name = "oracle"

    def score(self, prompt: RankingPrompt) -> np.ndarray:
        return np.array([1.0 if i == prompt.gt_item else 0.0 for i in prompt.candidate_items])


class AdversarialScorer:
    """Lower bound: the ground truth gets the strictly lowest logit."""

    name = "adversarial"

    def score(self, prompt: RankingPrompt) -> np.ndarray:
        return np.array([-1.0 if i == prompt.gt_item else 0.0 for i in prompt.candidate_items])


class FileScorer:
    """Precomputed logits: TSV "user_id TAB l1,...,lN"."""

    name = "file"

    def __init__(self, path):
        self.logits = read_logits(path)

    def score(self, prompt: RankingPrompt) -> np.ndarray:
        if prompt.user_id not in self.logits:
            raise DataError(f"no precomputed logits for user {prompt.user_id!r}")
        vec = self.logits[prompt.user_id]
        if len(vec) != len(prompt.candidate_items):
            raise DataError(
                f"user {prompt.user_id!r}: {len(vec)} logits for "
                f"{len(prompt.candidate_items)} candidates"
            )
        return vec


SCORERS = {
    "overlap": OverlapScorer,
    "random": RandomScorer,
    "oracle": OracleScorer,
    "adversarial": AdversarialScorer,
}


def token_cross_entropy(targets, distributions) -> float:
    """Summed negative log-likelihood of the target token at each step.

    Each distribution must sum to 1 within 1e-9. A zero probability at a
    target index yields +inf, signalling divergence to the caller.
    """
    targets = list(targets)
    distributions = [np.asarray(d, dtype=float) for d in distributions]
    if len(targets) != len(distributions):
        raise ValueError("targets and distributions must have equal length")
    total = 0.0
    for t, dist in zip(targets, distributions):
        if abs(dist.sum() - 1.0) > 1e-9:
            raise ValueError("distribution does not sum to 1")
        if not 0 <= t < dist.shape[0]:
            raise ValueError(f"target index {t} outside distribution")
        p = dist[t]
        if p <= 0.0:
            return math.inf
        total -= math.log(p)
    return total


def run_ranking(test_items: dict[str, str], histories: dict[str, list[str]],
                catalog: dict[str, str], rendered_ids: dict[str, str],
                retriever, scorer, top_k: int = TOP_K) -> list[RankingResult]:
    """Retrieve and rank for every test user, in sorted user order."""
    results = []
    for user_id in sorted(test_items):
        history = histories[user_id]
        candidates = retriever.retrieve(user_id, history, top_k)
        titles = []
        for item in candidates:
            if item not in catalog:
                raise DataError(f"retrieved item {item!r} missing from catalog")
            titles.append(catalog[item])
        history_titles = [catalog[i] for i in history if i in catalog]
        prompt = make_eval_prompt(
            user_id, rendered_ids[user_id], history_titles,
            candidates, titles, gt_item=test_items[user_id],
        )
        results.append(verbalize_rank(scorer, prompt))
    return results


def write_candidates(path, candidates: dict[str, list[str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for user in sorted(candidates):
            fh.write(f"{user}\t{','.join(candidates[user])}\n")


def read_candidates(path) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 tab-separated fields")
            user, items = parts
            if user in out:
                raise DataError(f"{path}:{lineno}: duplicate user {user!r}")
            ids = items.split(",")
            if len(set(ids)) != len(ids):
                raise DataError(f"{path}:{lineno}: duplicate candidate items")
            out[user] = ids
    return out


def write_logits(path, logits: dict[str, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for user in sorted(logits):
            rendered = ",".join(repr(float(v)) for v in logits[user])
            fh.write(f"{user}\t{rendered}\n")


def read_logits(path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 tab-separated fields")
            user, values = parts
            if user in out:
                raise DataError(f"{path}:{lineno}: duplicate user {user!r}")
            try:
                vec = np.array([float(v) for v in values.split(",")])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad logit value: {exc}") from exc
            if not np.all(np.isfinite(vec)):
                raise DataError(f"{path}:{lineno}: non-finite logit")
            out[user] = vec
    return out
