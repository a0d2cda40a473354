"""Instruction corpora for the six alignment tasks, and the task mixer.

Every instance is a plain (input, target) string pair plus the character
offset where the response starts in the concatenation input + target, so a
downstream trainer can mask loss to the response. Histories always render as
item titles; raw item IDs never appear in prompt text. Semantic-ID tokens
are inserted verbatim and never split.
"""

from __future__ import annotations

import json
import logging
import math
import string
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .corpus import format_rating
from .embed import tokenize
from .errors import DataError

log = logging.getLogger(__name__)

NEXT_ITEM = "NextItem"
INDEX_TO_PREF = "IndexToPref"
PREF_TO_INDEX = "PrefToIndex"
HISTORY_TO_INDEX = "HistoryToIndex"
RATING_PRED = "RatingPred"
INTENT_ITEM = "IntentItem"
TASKS = (NEXT_ITEM, INDEX_TO_PREF, PREF_TO_INDEX, HISTORY_TO_INDEX, RATING_PRED, INTENT_ITEM)

NUM_CANDIDATES = 20
MAX_HISTORY = 20
LETTERS = string.ascii_uppercase

# Bump the version whenever any template string changes; golden tests pin it.
TEMPLATE_VERSION = 1

NEXT_ITEM_TEMPLATE = (
    "You are helping the user with ID {sid}.\n"
    "The user bought these items in order: {history}.\n"
    "Candidate items:\n{candidates}\n"
    "Which candidate will the user buy next? Reply with the letter only.\n"
    "Answer: "
)
INDEX_TO_PREF_TEMPLATE = (
    "Describe the preferences of the user with ID {sid}.\n"
    "Preferences: "
)
PREF_TO_INDEX_TEMPLATE = (
    "A user has these preferences: {summary}.\n"
    "State the ID of this user.\n"
    "Answer: "
)
HISTORY_TO_INDEX_TEMPLATE = (
    "A user bought these items in order: {history}.\n"
    "State the ID of this user.\n"
    "Answer: "
)
RATING_PRED_TEMPLATE = (
    "The user with ID {sid} has these preferences: {summary}.\n"
    "Items and ratings so far: {rated}.\n"
    "Predict the rating (1 to 5) the user gives {last_title}.\n"
    "Answer: "
)
INTENT_ITEM_TEMPLATE = (
    "A user has these preferences: {summary}.\n"
    "Candidate items:\n{candidates}\n"
    "Which candidate fits the user best? Reply with the letter only.\n"
    "Answer: "
)


@dataclass(frozen=True)
class PromptInstance:
    task: str
    user_id: str
    input: str
    target: str

    def __post_init__(self):
        if not self.input or not self.target:
            raise ValueError("prompt input and target must be non-empty")

    @property
    def response_offset(self) -> int:
        return len(self.input)


@dataclass(frozen=True)
class PreferenceSummary:
    user_id: str
    text: str

    def __post_init__(self):
        if not self.text:
            raise ValueError("preference summary must be non-empty")


def index_letter(i: int) -> str:
    if not 0 <= i < len(LETTERS):
        raise ValueError(f"candidate position {i} out of letter range")
    return LETTERS[i]


def _render_history(titles) -> str:
    titles = list(titles)[-MAX_HISTORY:]
    if not titles:
        raise ValueError("history must contain at least one title")
    return "; ".join(titles)


def _render_candidates(candidates) -> str:
    if len(candidates) != NUM_CANDIDATES:
        raise ValueError(f"expected {NUM_CANDIDATES} candidates, got {len(candidates)}")
    return "\n".join(f"{index_letter(i)}. {t}" for i, t in enumerate(candidates))


def build_next_item(user_id: str, rendered_id: str, history_titles,
                    candidates, gt_position: int) -> PromptInstance:
    if not 0 <= gt_position < NUM_CANDIDATES:
        raise ValueError("ground-truth position outside the candidate list")
    text = NEXT_ITEM_TEMPLATE.format(
        sid=rendered_id,
        history=_render_history(history_titles),
        candidates=_render_candidates(candidates),
    )
    return PromptInstance(NEXT_ITEM, user_id, text, index_letter(gt_position))


def build_index_to_pref(user_id: str, rendered_id: str,
                        summary: PreferenceSummary) -> PromptInstance:
    text = INDEX_TO_PREF_TEMPLATE.format(sid=rendered_id)
    return PromptInstance(INDEX_TO_PREF, user_id, text, summary.text)


def build_pref_to_index(user_id: str, rendered_id: str,
                        summary: PreferenceSummary) -> PromptInstance:
    text = PREF_TO_INDEX_TEMPLATE.format(summary=summary.text)
    return PromptInstance(PREF_TO_INDEX, user_id, text, rendered_id)


def build_history_to_index(user_id: str, rendered_id: str, history_titles) -> PromptInstance:
    text = HISTORY_TO_INDEX_TEMPLATE.format(history=_render_history(history_titles))
    return PromptInstance(HISTORY_TO_INDEX, user_id, text, rendered_id)


def build_rating_pred(user_id: str, rendered_id: str, summary: PreferenceSummary,
                      history) -> PromptInstance:
    """history: (title, rating) pairs in chronological order; the last rating
    is withheld and becomes the target."""
    history = list(history)[-MAX_HISTORY:]
    if not history:
        raise ValueError("rating prediction needs at least one rated item")
    last_title, last_rating = history[-1]
    if not 1.0 <= last_rating <= 5.0:
        raise ValueError("last interaction has no rating to predict")
    shown = [f"{t} rated {format_rating(r)}" for t, r in history[:-1]]
    shown.append(f"{last_title} rated ?")
    text = RATING_PRED_TEMPLATE.format(
        sid=rendered_id, summary=summary.text,
        rated="; ".join(shown), last_title=last_title,
    )
    return PromptInstance(RATING_PRED, user_id, text, format_rating(last_rating))


def build_intent_item(user_id: str, summary: PreferenceSummary,
                      candidates, gt_position: int) -> PromptInstance:
    if not 0 <= gt_position < NUM_CANDIDATES:
        raise ValueError("ground-truth position outside the candidate list")
    text = INTENT_ITEM_TEMPLATE.format(
        summary=summary.text,
        candidates=_render_candidates(candidates),
    )
    return PromptInstance(INTENT_ITEM, user_id, text, index_letter(gt_position))


EMPTY_SUMMARY = "no stated preferences"

_STOPWORDS = frozenset(
    """a about after again all also am an and any are as at b be because been
    before being best but by c can could d did do does doing down e f few for
    from g get good great h had has have having he her here hers him his how
    i if in into is it its j just k l like love m me more most my n nice no
    nor not o of off on once only or other our out over own p q r really s
    same she so some such t than that the their them then there these they
    this those through to too u under until up v very w was we were what when
    where which while who why will with would x y you your z""".split()
)


class TfSummarizer:
    """Deterministic preference text: the top-m content tokens by term
    frequency across a user's reviews, stopwords dropped, ties broken
    alphabetically."""

    def __init__(self, top_m: int = 12):
        if top_m < 1:
            raise ValueError("top_m must be >= 1")
        self.top_m = top_m

    def summarize(self, user_id: str, reviews) -> PreferenceSummary:
        counts = Counter()
        for text in reviews:
            counts.update(tok for tok in tokenize(text) if tok not in _STOPWORDS)
        if not counts:
            return PreferenceSummary(user_id, EMPTY_SUMMARY)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return PreferenceSummary(user_id, ", ".join(tok for tok, _ in ranked[: self.top_m]))


SUMMARY_SYSTEM_PROMPT = (
    "Summarize the user's preferences from their product reviews as a short "
    "comma-separated phrase list. Reply with the list only."
)


class ChatSummarizer:
    """Preference extraction through an external chat-completion service.

    The reply text is used verbatim; the client caches on disk, so a warmed
    cache answers without any network call.
    """

    def __init__(self, client):
        self.client = client

    def summarize(self, user_id: str, reviews) -> PreferenceSummary:
        body = "\n".join(t for t in reviews if t)
        if not body:
            return PreferenceSummary(user_id, EMPTY_SUMMARY)
        reply = self.client.complete(SUMMARY_SYSTEM_PROMPT, body)
        return PreferenceSummary(user_id, reply.strip() or EMPTY_SUMMARY)


def summarize_prefs(summarizer, user_id: str, reviews) -> PreferenceSummary:
    return summarizer.summarize(user_id, list(reviews))


@dataclass
class MixtureConfig:
    proportions: dict[str, float]
    total: int
    seed: int = 0

    def __post_init__(self):
        unknown = set(self.proportions) - set(TASKS)
        if unknown:
            raise ValueError(f"unknown tasks in mixture: {sorted(unknown)}")
        if any(v < 0 for v in self.proportions.values()):
            raise ValueError("mixture proportions must be >= 0")
        if abs(sum(self.proportions.values()) - 1.0) > 1e-9:
            raise ValueError("mixture proportions must sum to 1")
        if self.total < 0:
            raise ValueError("mixture total must be >= 0")


def uniform_mixture(total: int, seed: int = 0) -> MixtureConfig:
    share = 1.0 / len(TASKS)
    return MixtureConfig({t: share for t in TASKS}, total, seed)


def allocate_counts(config: MixtureConfig) -> dict[str, int]:
    """Largest-remainder split of config.total across tasks.

    Leftover units go to the largest fractional remainders, ties broken by
    lexicographic task name.
    """
    quotas = {t: config.total * config.proportions.get(t, 0.0) for t in TASKS}
    counts = {t: math.floor(q) for t, q in quotas.items()}
    leftover = config.total - sum(counts.values())
    order = sorted(TASKS, key=lambda t: (-(quotas[t] - counts[t]), t))
    for t in order[:leftover]:
        counts[t] += 1
    return counts


def mix(per_task: dict[str, list[PromptInstance]], config: MixtureConfig) -> list[PromptInstance]:
    """Sample each task's allocation without replacement, then shuffle globally.

    A task with too few instances is truncated with a warning. Instances are
    put into a canonical (task, user_id, input) order before any seeded
    draw, so the output is reproducible byte for byte.
    """
    rng = np.random.default_rng(config.seed)
    counts = allocate_counts(config)
    chosen: list[PromptInstance] = []
    for task in TASKS:
        want = counts[task]
        if want == 0:
            continue
        pool = sorted(per_task.get(task, []), key=lambda p: (p.user_id, p.input))
        if want > len(pool):
            log.warning("task %s has %d instances, requested %d; truncating",
                        task, len(pool), want)
            want = len(pool)
        idx = rng.choice(len(pool), size=want, replace=False)
        chosen.extend(pool[i] for i in sorted(idx))
    order = rng.permutation(len(chosen))
    return [chosen[i] for i in order]


@dataclass
class BuildStats:
    skipped: Counter = field(default_factory=Counter)


def sample_candidates(rng: np.random.Generator, catalog: dict[str, str],
                      exclude, gt_item: str) -> tuple[list[str], int]:
    """One ground-truth title plus 19 seeded negative titles.

    Negatives are drawn without replacement from catalog items outside the
    user's history; the ground truth lands at a seeded random position.
    """
    if gt_item not in catalog:
        raise DataError(f"ground-truth item {gt_item!r} missing from catalog")
    excluded = set(exclude) | {gt_item}
    pool = sorted(i for i in catalog if i not in excluded)
    need = NUM_CANDIDATES - 1
    if len(pool) < need:
        raise DataError(f"catalog too small for {NUM_CANDIDATES} candidates")
    negatives = [pool[i] for i in rng.choice(len(pool), size=need, replace=False)]
    gt_position = int(rng.integers(0, NUM_CANDIDATES))
    titles = [catalog[i] for i in negatives]
    titles.insert(gt_position, catalog[gt_item])
    return titles, gt_position


def build_corpus(sequences: dict[str, "object"], catalog: dict[str, str],
                 rendered_ids: dict[str, str],
                 summaries: dict[str, PreferenceSummary],
                 seed: int = 0) -> tuple[dict[str, list[PromptInstance]], BuildStats]:
    """Assemble per-task instance lists from training sequences.

    Per user: the last training interaction is the next-item ground truth
    and the preceding ones are the history. Users are processed in sorted
    order so candidate draws are reproducible.
    """
    rng = np.random.default_rng(seed)
    stats = BuildStats()
    per_task: dict[str, list[PromptInstance]] = {t: [] for t in TASKS}
    for user_id in sorted(sequences):
        seq = sequences[user_id]
        sid = rendered_ids.get(user_id)
        if sid is None:
            stats.skipped["missing_id"] += 1
            continue
        summary = summaries.get(user_id)
        if summary is None:
            stats.skipped["missing_summary"] += 1
            continue
        inters = seq.interactions
        titled = [(catalog[i.item_id], i.rating) for i in inters if i.item_id in catalog]
        if len(titled) != len(inters):
            stats.skipped["missing_title"] += 1
            continue
        if len(titled) < 2:
            stats.skipped["short_history"] += 1
            continue
        history_titles = [t for t, _ in titled[:-1]]
        gt_item = inters[-1].item_id

        candidates, gt_pos = sample_candidates(
            rng, catalog, (i.item_id for i in inters[:-1]), gt_item)
        per_task[NEXT_ITEM].append(
            build_next_item(user_id, sid, history_titles, candidates, gt_pos))
        per_task[INDEX_TO_PREF].append(build_index_to_pref(user_id, sid, summary))
        per_task[PREF_TO_INDEX].append(build_pref_to_index(user_id, sid, summary))
        per_task[HISTORY_TO_INDEX].append(
            build_history_to_index(user_id, sid, history_titles))
        if 1.0 <= inters[-1].rating <= 5.0:
            per_task[RATING_PRED].append(
                build_rating_pred(user_id, sid, summary, titled))
        else:
            stats.skipped["missing_rating"] += 1
        candidates2, gt_pos2 = sample_candidates(
            rng, catalog, (i.item_id for i in inters[:-1]), gt_item)
        per_task[INTENT_ITEM].append(
            build_intent_item(user_id, summary, candidates2, gt_pos2))
    return per_task, stats


def write_corpus(path, instances) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps({
                "task": inst.task,
                "user_id": inst.user_id,
                "input": inst.input,
                "target": inst.target,
                "response_offset": inst.response_offset,
            }) + "\n")


def read_corpus(path) -> list[PromptInstance]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                inst = PromptInstance(rec["task"], rec["user_id"], rec["input"], rec["target"])
                if rec["response_offset"] != inst.response_offset:
                    raise ValueError("response_offset does not match input length")
            except (KeyError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad corpus record: {exc}") from exc
            if inst.task not in TASKS:
                raise DataError(f"{path}:{lineno}: unknown task {inst.task!r}")
            out.append(inst)
    return out


def write_summaries(path, summaries: dict[str, PreferenceSummary]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for user_id in sorted(summaries):
            fh.write(json.dumps({"user_id": user_id, "text": summaries[user_id].text}) + "\n")


def read_summaries(path) -> dict[str, PreferenceSummary]:
    out: dict[str, PreferenceSummary] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                out[rec["user_id"]] = PreferenceSummary(rec["user_id"], rec["text"])
            except (KeyError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad summary record: {exc}") from exc
    return out
