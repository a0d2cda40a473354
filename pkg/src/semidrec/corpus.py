"""Review-corpus ingestion, iterative k-core filtering, and leave-one-out splits.

Raw input is line-delimited JSON with the Amazon review field names
(reviewerID, asin, overall, unixReviewTime, reviewText; metadata lines with
asin, title). The canonical on-disk forms are a per-user sequence file
(``user_id TAB item:timestamp:rating ...``) and a catalog TSV.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError

log = logging.getLogger(__name__)

_ID_FORBIDDEN = set("\t\n :")


@dataclass(frozen=True)
class Interaction:
    user_id: str
    item_id: str
    rating: float  # 0.0 when the record carried no rating
    timestamp: int
    review_text: str = ""


@dataclass
class UserSequence:
    user_id: str
    interactions: list[Interaction]

    def __len__(self):
        return len(self.interactions)

    def item_ids(self) -> list[str]:
        return [x.item_id for x in self.interactions]


@dataclass
class SplitSet:
    """Leave-one-out split: per user, test = last item, valid = second-to-last."""

    train: dict[str, list[Interaction]]
    valid: dict[str, Interaction]
    test: dict[str, Interaction]
    skipped_users: list[str] = field(default_factory=list)


@dataclass
class IngestStats:
    malformed_reviews: int = 0
    malformed_meta: int = 0
    dropped_missing_title: int = 0


def _parse_review_line(line: str) -> Interaction | None:
    rec = json.loads(line)
    user = rec["reviewerID"]
    item = rec["asin"]
    ts = int(rec["unixReviewTime"])
    if ts < 0:
        raise ValueError("negative timestamp")
    rating = rec.get("overall")
    if rating is None:
        rating = 0.0
    else:
        rating = float(rating)
        if not (1.0 <= rating <= 5.0):
            raise ValueError(f"rating {rating} outside [1,5]")
    review = rec.get("reviewText") or ""
    return Interaction(str(user), str(item), rating, ts, str(review))


def ingest(raw_reviews, raw_metadata) -> tuple[list[UserSequence], dict[str, str], IngestStats]:
    """Build chronological per-user sequences and the title catalog.

    ``raw_reviews`` / ``raw_metadata`` are iterables of JSON lines. Malformed
    lines are counted and skipped; interactions whose item has no title row
    are dropped before any filtering. Zero surviving users is fatal.
    """
    stats = IngestStats()

    catalog: dict[str, str] = {}
    for line in raw_metadata:
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            item = str(rec["asin"])
            title = str(rec["title"]).strip()
            if not title:
                raise ValueError("empty title")
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            stats.malformed_meta += 1
            log.debug("skipping metadata line: %s", exc)
            continue
        catalog[item] = title

    by_user: dict[str, list[Interaction]] = {}
    for line in raw_reviews:
        if not line.strip():
            continue
        try:
            inter = _parse_review_line(line)
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            stats.malformed_reviews += 1
            log.debug("skipping review line: %s", exc)
            continue
        if inter.item_id not in catalog:
            stats.dropped_missing_title += 1
            continue
        by_user.setdefault(inter.user_id, []).append(inter)

    if stats.malformed_reviews or stats.malformed_meta or stats.dropped_missing_title:
        log.warning(
            "ingest skipped %d malformed review lines, %d malformed metadata lines, "
            "%d interactions on untitled items",
            stats.malformed_reviews, stats.malformed_meta, stats.dropped_missing_title,
        )

    sequences = []
    for user in sorted(by_user):
        inters = by_user[user]
        # stable sort keeps input order for equal timestamps
        inters.sort(key=lambda x: x.timestamp)
        sequences.append(UserSequence(user, inters))

    if not sequences:
        raise DataError("ingest produced zero users; check input paths and formats")
    return sequences, catalog, stats


def ingest_files(review_path, metadata_path):
    with open(review_path, encoding="utf-8") as rf, open(metadata_path, encoding="utf-8") as mf:
        return ingest(rf, mf)


def kcore_filter(sequences: list[UserSequence], k: int = 5) -> list[UserSequence]:
    """Iteratively drop users and items with fewer than k interactions.

    Repeats until a fixed point, so every surviving user *and* item has at
    least k interactions. A single pass is not enough: removing a user can
    push an item below the threshold and vice versa.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    current = {s.user_id: list(s.interactions) for s in sequences}
    while True:
        changed = False
        current = {u: inters for u, inters in current.items() if len(inters) >= k}
        item_counts = Counter(x.item_id for inters in current.values() for x in inters)
        bad_items = {i for i, c in item_counts.items() if c < k}
        if bad_items:
            changed = True
            current = {
                u: [x for x in inters if x.item_id not in bad_items]
                for u, inters in current.items()
            }
        if any(len(inters) < k for inters in current.values()):
            changed = True
        if not changed:
            break
    if not current:
        raise DataError(f"k-core filtering with k={k} removed every user")
    return [UserSequence(u, current[u]) for u in sorted(current)]


def split_leave_one_out(sequences: list[UserSequence]) -> SplitSet:
    """Per user: test = last item, valid = second-to-last, train = the rest.

    Users with fewer than 3 interactions are excluded with a warning.
    """
    split = SplitSet(train={}, valid={}, test={})
    for seq in sequences:
        if len(seq) < 3:
            split.skipped_users.append(seq.user_id)
            continue
        split.train[seq.user_id] = seq.interactions[:-2]
        split.valid[seq.user_id] = seq.interactions[-2]
        split.test[seq.user_id] = seq.interactions[-1]
    if split.skipped_users:
        log.warning("excluded %d users shorter than 3 from the split", len(split.skipped_users))
    return split


def format_rating(rating: float) -> str:
    """Render a rating as an integer-or-half string ("4", "3.5")."""
    if float(rating).is_integer():
        return str(int(rating))
    return f"{rating:g}"


def _check_id(value: str, kind: str) -> str:
    if not value or any(c in _ID_FORBIDDEN for c in value):
        raise DataError(f"{kind} {value!r} contains characters reserved by the sequence format")
    return value


def write_sequences(path, sequences: list[UserSequence]) -> None:
    """Canonical sequence file: one user per line, ``user TAB item:ts:rating ...``."""
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            parts = [
                f"{_check_id(x.item_id, 'item_id')}:{x.timestamp}:{format_rating(x.rating)}"
                for x in seq.interactions
            ]
            fh.write(f"{_check_id(seq.user_id, 'user_id')}\t{' '.join(parts)}\n")


def read_sequences(path) -> list[UserSequence]:
    """Read the canonical sequence file. Review texts are not present there."""
    sequences = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line:
            continue
        user, _, rest = line.partition("\t")
        inters = []
        for part in rest.split(" "):
            item, ts, rating = part.split(":")
            inters.append(Interaction(user, item, float(rating), int(ts)))
        sequences.append(UserSequence(user, inters))
    return sequences


def write_catalog(path, catalog: dict[str, str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in sorted(catalog):
            title = catalog[item].replace("\t", " ").replace("\n", " ")
            fh.write(f"{item}\t{title}\n")


def read_catalog(path) -> dict[str, str]:
    catalog = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line:
            continue
        item, _, title = line.partition("\t")
        catalog[item] = title
    return catalog
