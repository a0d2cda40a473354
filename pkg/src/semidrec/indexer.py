"""Unique hierarchical semantic IDs for users, plus numeric and original-string baselines.

A semantic ID is the tuple of codewords the quantizer picks for a user's
fused vector, rendered as atomic tokens like "<a_219> <b_2> <c_95> <d_238>"
(one letter per level). Quantization alone is not injective, so a
deterministic collision pass bumps later claimants of a taken tuple to the
nearest free codeword, preferring changes at the deepest level where they
disturb the learned hierarchy least.
"""

from __future__ import annotations

import itertools
import re
import string
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .rqvae import CodebookStack, RqvaeModel, quantize

P_ID = "P-ID"
N_ID = "N-ID"
O_ID = "O-ID"
_MODES = (P_ID, N_ID, O_ID)

_TOKEN_RE = re.compile(r"<([a-z])_(\d+)>")


def render_id(codewords) -> str:
    codewords = list(codewords)
    if not codewords:
        raise ValueError("cannot render an empty codeword tuple")
    if len(codewords) > len(string.ascii_lowercase):
        raise ValueError("too many levels to render")
    return " ".join(
        f"<{string.ascii_lowercase[i]}_{int(c)}>" for i, c in enumerate(codewords)
    )


def parse_id(text: str) -> tuple[int, ...]:
    """Inverse of render_id; malformed text raises DataError."""
    tokens = text.split(" ")
    codewords = []
    for i, tok in enumerate(tokens):
        m = _TOKEN_RE.fullmatch(tok)
        if m is None or m.group(1) != string.ascii_lowercase[i]:
            raise DataError(f"malformed semantic ID token {tok!r} in {text!r}")
        codewords.append(int(m.group(2)))
    if not codewords:
        raise DataError("empty semantic ID")
    return tuple(codewords)


@dataclass(frozen=True)
class SemanticId:
    codewords: tuple[int, ...]
    rendered: str

    @classmethod
    def from_codewords(cls, codewords) -> "SemanticId":
        t = tuple(int(c) for c in codewords)
        return cls(t, render_id(t))


@dataclass
class IndexAssignment:
    mode: str
    ids: dict[str, SemanticId]

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"unknown assignment mode {self.mode!r}")
        rendered = [sid.rendered for sid in self.ids.values()]
        if len(set(rendered)) != len(rendered):
            raise DataError(f"{self.mode} assignment is not injective")


def _candidate_order(stack, residual, level: int, exclude: int):
    k = stack.levels[level].vectors.shape[0]
    if residual is None:
        order = range(k)
    else:
        dists = ((stack.levels[level].vectors - residual) ** 2).sum(axis=1)
        order = np.lexsort((np.arange(k), dists))  # distance, then index
    return [int(c) for c in order if int(c) != exclude]


def _bump(t: tuple[int, ...], stack: CodebookStack, residuals, taken) -> tuple[int, ...]:
    p = len(t)
    deepest_first = range(p - 1, -1, -1)

    def res_at(level):
        return None if residuals is None else residuals[level]

    for level in deepest_first:
        for k in _candidate_order(stack, res_at(level), level, t[level]):
            cand = t[:level] + (k,) + t[level + 1:]
            if cand not in taken:
                return cand
    # every single-position variant is taken; widen to more positions
    for h in range(2, p + 1):
        for positions in itertools.combinations(deepest_first, h):
            orders = [_candidate_order(stack, res_at(lv), lv, t[lv]) for lv in positions]
            for values in itertools.product(*orders):
                cand = list(t)
                for lv, v in zip(positions, values):
                    cand[lv] = v
                cand = tuple(cand)
                if cand not in taken:
                    return cand
    raise DataError("semantic ID space exhausted")


def resolve_collisions(raw: dict[str, tuple[int, ...]], stack: CodebookStack,
                       residuals: dict[str, list[np.ndarray]] | None = None,
                       ) -> dict[str, tuple[int, ...]]:
    """Make the user → codewords map injective with minimal disturbance.

    Users are processed in lexicographic order. A user whose tuple is still
    unclaimed keeps it; otherwise the tuple is bumped to the nearest free
    one, trying single-codeword replacements from the deepest level upward
    (candidates ordered by distance to the user's residual entering that
    level, ties to the smallest index), then wider replacements. Raw tuples
    of not-yet-processed users count as taken, so nobody's unique tuple can
    be stolen. Terminates whenever |users| <= K^p.
    """
    taken = set(raw.values())
    claimed: set[tuple[int, ...]] = set()
    out: dict[str, tuple[int, ...]] = {}
    for user in sorted(raw):
        t = tuple(int(c) for c in raw[user])
        if t not in claimed:
            out[user] = t
            claimed.add(t)
            continue
        res = None if residuals is None else residuals[user]
        bumped = _bump(t, stack, res, claimed | taken)
        out[user] = bumped
        claimed.add(bumped)
        taken.add(bumped)
    return out


def assign_pid(model: RqvaeModel, fused: dict[str, np.ndarray]) -> IndexAssignment:
    """Quantize each user's fused vector and resolve collisions."""
    if not fused:
        raise DataError("no users to index")
    k = model.cfg.codebook_size
    p = model.cfg.num_levels
    capacity = k ** p
    if len(fused) > capacity:
        raise DataError(
            f"capacity exceeded: {len(fused)} users > {capacity} (K={k}, p={p})"
        )
    raw: dict[str, tuple[int, ...]] = {}
    residuals: dict[str, list[np.ndarray]] = {}
    for user in sorted(fused):
        z = model.encode(np.asarray(fused[user], dtype=float))
        q = quantize(model.stack, z)
        raw[user] = tuple(q.codewords)
        residuals[user] = q.residuals
    resolved = resolve_collisions(raw, model.stack, residuals)
    return IndexAssignment(P_ID, {u: SemanticId.from_codewords(t) for u, t in resolved.items()})


def assign_nid(users) -> IndexAssignment:
    """Lexicographically sorted users get "1", "2", ..."""
    users = list(users)
    _check_unique(users)
    ids = {u: SemanticId((), str(i + 1)) for i, u in enumerate(sorted(users))}
    return IndexAssignment(N_ID, ids)


def assign_oid(users) -> IndexAssignment:
    """Each user keeps its original identifier string."""
    users = list(users)
    _check_unique(users)
    return IndexAssignment(O_ID, {u: SemanticId((), u) for u in users})


def _check_unique(users) -> None:
    if not users:
        raise DataError("no users to index")
    if len(set(users)) != len(users):
        raise DataError("duplicate user IDs in input")


def save_assignment(path, assignment: IndexAssignment) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for user in sorted(assignment.ids):
            sid = assignment.ids[user]
            if "\t" in sid.rendered:
                raise DataError(f"rendered ID for {user!r} contains a tab")
            fh.write(f"{user}\t{sid.rendered}\t{assignment.mode}\n")


def load_assignment(path) -> IndexAssignment:
    ids: dict[str, SemanticId] = {}
    mode = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields")
            user, rendered, line_mode = parts
            if mode is None:
                mode = line_mode
            elif line_mode != mode:
                raise DataError(f"{path}:{lineno}: mixed assignment modes")
            if user in ids:
                raise DataError(f"{path}:{lineno}: duplicate user {user!r}")
            codewords = parse_id(rendered) if line_mode == P_ID else ()
            ids[user] = SemanticId(codewords, rendered)
    if mode is None:
        raise DataError(f"{path}: empty assignment file")
    return IndexAssignment(mode, ids)
