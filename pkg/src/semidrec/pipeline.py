"""Pipeline stages behind the CLI: each consumes a validated config, reads
its upstream artifacts from the workdir, and writes its own.

Stage order: prepare -> embed -> train-index -> gen-prompts -> rank -> eval.
Artifacts are never mutated by later stages. Every stage updates a manifest
(config hash, seeds, artifact checksums) that contains no timestamps, so
identical runs produce identical manifests.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import corpus, eval as evalmod, indexer, prompts, rank, rqvae
from .embed import HashingEmbedder, load_embeddings, save_embeddings
from .errors import DataError, UsageError
from .fusion import AttentionParams
from .prompts import MixtureConfig, TfSummarizer, uniform_mixture

MANIFEST = "manifest.json"

PRODUCERS = {
    "catalog.tsv": "prepare",
    "train.tsv": "prepare",
    "valid.tsv": "prepare",
    "test.tsv": "prepare",
    "reviews_train.jsonl": "prepare",
    "review_vectors.tsv": "embed",
    "id_vectors.tsv": "embed",
    "model.npz": "train-index",
    "fused.tsv": "train-index",
    "assignment_P-ID.tsv": "train-index",
    "assignment_N-ID.tsv": "train-index",
    "assignment_O-ID.tsv": "train-index",
    "train_trace.json": "train-index",
    "summaries.jsonl": "gen-prompts",
    "corpus.jsonl": "gen-prompts",
    "candidates.tsv": "rank",
}


@dataclass
class PipelineConfig:
    reviews: Path
    metadata: Path
    workdir: Path
    embed_provider: str = "hashing"
    embed_dim: int = 64
    embed_seed: int = 0
    embed_reviews_path: Path | None = None
    embed_ids_path: Path | None = None
    codebook_size: int = 256
    num_levels: int = 4
    code_dim: int = 32
    hidden_dim: int = 128
    beta: float = 0.25
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1e-3
    rqvae_seed: int = 0
    index_mode: str = indexer.P_ID
    proportions: dict[str, float] | None = None
    prompt_total: int = 600
    prompt_seed: int = 0
    retriever: str = "cooc"
    scorer: str = "overlap"
    top_k: int = 20
    scorer_seed: int = 0
    candidates_path: Path | None = None
    logits_path: Path | None = None
    eval_ks: tuple[int, ...] = (5, 10)
    raw: dict = field(default_factory=dict, repr=False)

    def artifact(self, name: str) -> Path:
        return self.workdir / name

    def results_name(self) -> str:
        return f"results_{self.index_mode}.jsonl"

    def report_name(self) -> str:
        return f"report_{self.index_mode}.jsonl"


_ENV_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def _interpolate(value, where: str):
    if isinstance(value, dict):
        return {k: _interpolate(v, f"{where}.{k}") for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate(v, where) for v in value]
    if isinstance(value, str):
        def repl(m):
            var = m.group(1)
            if var not in os.environ:
                raise UsageError(f"{where}: environment variable {var} is not set")
            return os.environ[var]
        return _ENV_RE.sub(repl, value)
    return value


class _Section:
    """Typed key extraction with field-level error messages."""

    def __init__(self, name: str, data: dict, allowed: set[str]):
        if not isinstance(data, dict):
            raise UsageError(f"{name}: expected an object")
        unknown = set(data) - allowed
        if unknown:
            raise UsageError(f"{name}: unknown keys {sorted(unknown)}")
        self.name = name
        self.data = data

    def get(self, key, kind, default=None, required=False, check=None, describe=""):
        if key not in self.data:
            if required:
                raise UsageError(f"{self.name}.{key}: required field is missing")
            return default
        value = self.data[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, kind) or isinstance(value, bool):
            raise UsageError(f"{self.name}.{key}: expected {kind.__name__}")
        if check is not None and not check(value):
            raise UsageError(f"{self.name}.{key}: {describe}")
        return value


def load_config(path, workdir: str | None = None, seed: int | None = None) -> PipelineConfig:
    """Parse, interpolate ${VARS}, apply flag overrides, and validate."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path}: invalid JSON: {exc}") from exc
    raw = _interpolate(raw, "config")
    if workdir is not None:
        raw.setdefault("paths", {})["workdir"] = workdir
    if seed is not None:
        for section, key in (("embed", "seed"), ("rqvae", "seed"),
                             ("prompts", "seed"), ("rank", "scorer_seed")):
            raw.setdefault(section, {})[key] = seed
    return validate_config(raw)


def validate_config(raw: dict) -> PipelineConfig:
    if not isinstance(raw, dict):
        raise UsageError("config: expected a JSON object")
    unknown = set(raw) - {"paths", "embed", "rqvae", "index", "prompts", "rank", "eval"}
    if unknown:
        raise UsageError(f"config: unknown sections {sorted(unknown)}")

    paths = _Section("paths", raw.get("paths", {}), {"reviews", "metadata", "workdir"})
    reviews = Path(paths.get("reviews", str, required=True))
    metadata = Path(paths.get("metadata", str, required=True))
    workdir = Path(paths.get("workdir", str, required=True))
    for fieldname, p in (("paths.reviews", reviews), ("paths.metadata", metadata)):
        if not p.is_file():
            raise UsageError(f"{fieldname}: file not found: {p}")

    embed = _Section("embed", raw.get("embed", {}),
                     {"provider", "D", "seed", "reviews_path", "ids_path"})
    provider = embed.get("provider", str, default="hashing",
                         check=lambda v: v in ("hashing", "precomputed"),
                         describe="must be 'hashing' or 'precomputed'")
    dim = embed.get("D", int, default=64, check=lambda v: v >= 1, describe="must be >= 1")
    embed_seed = embed.get("seed", int, default=0)
    embed_reviews = embed.get("reviews_path", str)
    embed_ids = embed.get("ids_path", str)
    if provider == "precomputed":
        if embed_reviews is None or embed_ids is None:
            raise UsageError(
                "embed.reviews_path/embed.ids_path: required for provider 'precomputed'")
        for fieldname, p in (("embed.reviews_path", embed_reviews),
                             ("embed.ids_path", embed_ids)):
            if not Path(p).is_file():
                raise UsageError(f"{fieldname}: file not found: {p}")

    rq = _Section("rqvae", raw.get("rqvae", {}),
                  {"K", "p", "d_code", "beta", "epochs", "lr", "seed",
                   "batch_size", "hidden"})
    positive = (lambda v: v >= 1, "must be >= 1")
    k = rq.get("K", int, default=256, check=positive[0], describe=positive[1])
    p_levels = rq.get("p", int, default=4, check=positive[0], describe=positive[1])
    d_code = rq.get("d_code", int, default=32, check=positive[0], describe=positive[1])
    hidden = rq.get("hidden", int, default=128, check=positive[0], describe=positive[1])
    beta = rq.get("beta", float, default=0.25, check=lambda v: v >= 0,
                  describe="must be >= 0")
    epochs = rq.get("epochs", int, default=30, check=positive[0], describe=positive[1])
    batch_size = rq.get("batch_size", int, default=64, check=positive[0],
                        describe=positive[1])
    lr = rq.get("lr", float, default=1e-3, check=lambda v: v > 0, describe="must be > 0")
    rqvae_seed = rq.get("seed", int, default=0)

    index = _Section("index", raw.get("index", {}), {"mode"})
    mode = index.get("mode", str, default=indexer.P_ID,
                     check=lambda v: v in (indexer.P_ID, indexer.N_ID, indexer.O_ID),
                     describe="must be one of P-ID, N-ID, O-ID")

    pr = _Section("prompts", raw.get("prompts", {}), {"proportions", "total", "seed"})
    proportions = pr.get("proportions", dict)
    if proportions is not None:
        for key, value in proportions.items():
            if key not in prompts.TASKS:
                raise UsageError(f"prompts.proportions.{key}: unknown task")
            if not isinstance(value, (int, float)) or isinstance(value, bool) or value < 0:
                raise UsageError(f"prompts.proportions.{key}: must be a number >= 0")
        if abs(sum(proportions.values()) - 1.0) > 1e-9:
            raise UsageError("prompts.proportions: must sum to 1")
        proportions = {k2: float(v) for k2, v in proportions.items()}
    total = pr.get("total", int, default=600, check=lambda v: v >= 0,
                   describe="must be >= 0")
    prompt_seed = pr.get("seed", int, default=0)

    rk = _Section("rank", raw.get("rank", {}),
                  {"retriever", "scorer", "top_k", "scorer_seed",
                   "candidates_path", "logits_path"})
    retriever = rk.get("retriever", str, default="cooc",
                       check=lambda v: v in ("cooc", "file"),
                       describe="must be 'cooc' or 'file'")
    scorer = rk.get("scorer", str, default="overlap",
                    check=lambda v: v in set(rank.SCORERS) | {"file"},
                    describe=f"must be one of {sorted(set(rank.SCORERS) | {'file'})}")
    top_k = rk.get("top_k", int, default=20, check=positive[0], describe=positive[1])
    scorer_seed = rk.get("scorer_seed", int, default=0)
    candidates_path = rk.get("candidates_path", str)
    logits_path = rk.get("logits_path", str)
    if retriever == "file" and candidates_path is None:
        raise UsageError("rank.candidates_path: required for retriever 'file'")
    if scorer == "file" and logits_path is None:
        raise UsageError("rank.logits_path: required for scorer 'file'")

    ev = _Section("eval", raw.get("eval", {}), {"ks"})
    ks = ev.get("ks", list, default=[5, 10])
    if not ks or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 1
                         for v in ks):
        raise UsageError("eval.ks: must be a non-empty list of integers >= 1")

    return PipelineConfig(
        reviews=reviews, metadata=metadata, workdir=workdir,
        embed_provider=provider, embed_dim=dim, embed_seed=embed_seed,
        embed_reviews_path=Path(embed_reviews) if embed_reviews else None,
        embed_ids_path=Path(embed_ids) if embed_ids else None,
        codebook_size=k, num_levels=p_levels, code_dim=d_code, hidden_dim=hidden,
        beta=beta, epochs=epochs, batch_size=batch_size, lr=lr, rqvae_seed=rqvae_seed,
        index_mode=mode, proportions=proportions, prompt_total=total,
        prompt_seed=prompt_seed, retriever=retriever, scorer=scorer, top_k=top_k,
        scorer_seed=scorer_seed,
        candidates_path=Path(candidates_path) if candidates_path else None,
        logits_path=Path(logits_path) if logits_path else None,
        eval_ks=tuple(ks), raw=raw,
    )


def config_digest(cfg: PipelineConfig) -> str:
    return hashlib.sha256(
        json.dumps(cfg.raw, sort_keys=True, separators=(",", ":"), default=str).encode()
    ).hexdigest()


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def update_manifest(cfg: PipelineConfig, artifacts) -> Path:
    """Record config hash, seeds, and checksums; content is timestamp-free."""
    path = cfg.artifact(MANIFEST)
    digest = config_digest(cfg)
    data = {"config_hash": digest, "seeds": {}, "artifacts": {}}
    if path.exists():
        with open(path, "r", encoding="utf-8") as fh:
            previous = json.load(fh)
        if previous.get("config_hash") == digest:
            data = previous
    data["config_hash"] = digest
    data["seeds"] = {"embed": cfg.embed_seed, "rqvae": cfg.rqvae_seed,
                     "prompts": cfg.prompt_seed, "scorer": cfg.scorer_seed}
    for artifact in artifacts:
        artifact = Path(artifact)
        data["artifacts"][artifact.name] = _sha256_file(artifact)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def _require(cfg: PipelineConfig, name: str, producer: str | None = None) -> Path:
    path = cfg.artifact(name)
    if not path.is_file():
        producer = producer or PRODUCERS.get(name, "an earlier stage")
        raise DataError(f"missing artifact {name}; run `semidrec {producer}` first")
    return path


def _read_split(cfg: PipelineConfig, name: str) -> dict[str, corpus.UserSequence]:
    seqs = corpus.read_sequences(_require(cfg, name))
    return {s.user_id: s for s in seqs}


def cmd_prepare(cfg: PipelineConfig) -> list[Path]:
    """Ingest raw reviews + metadata, 5-core filter, leave-one-out split."""
    cfg.workdir.mkdir(parents=True, exist_ok=True)
    sequences, catalog, stats = corpus.ingest_files(cfg.reviews, cfg.metadata)
    sequences = corpus.kcore_filter(sequences, k=5)
    split = corpus.split_leave_one_out(sequences)

    kept_items = {i.item_id for s in sequences for i in s.interactions}
    catalog = {item: title for item, title in catalog.items() if item in kept_items}

    out = []

    def emit(name, writer):
        path = cfg.artifact(name)
        writer(path)
        out.append(path)

    train_seqs = [corpus.UserSequence(u, split.train[u]) for u in sorted(split.train)]
    emit("train.tsv", lambda p: corpus.write_sequences(p, train_seqs))
    emit("valid.tsv", lambda p: corpus.write_sequences(
        p, [corpus.UserSequence(u, [split.valid[u]]) for u in sorted(split.valid)]))
    emit("test.tsv", lambda p: corpus.write_sequences(
        p, [corpus.UserSequence(u, [split.test[u]]) for u in sorted(split.test)]))
    emit("catalog.tsv", lambda p: corpus.write_catalog(p, catalog))

    def write_reviews(path):
        with open(path, "w", encoding="utf-8") as fh:
            for seq in train_seqs:
                for inter in seq.interactions:
                    fh.write(json.dumps({
                        "user_id": inter.user_id,
                        "item_id": inter.item_id,
                        "text": inter.review_text,
                    }) + "\n")
    emit("reviews_train.jsonl", write_reviews)

    def write_stats(path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({
                "users": len(split.train),
                "items": len(catalog),
                "interactions": sum(len(s.interactions) for s in sequences),
                "skipped_short_users": len(split.skipped_users),
                "malformed_reviews": stats.malformed_reviews,
                "malformed_meta": stats.malformed_meta,
                "dropped_missing_title": stats.dropped_missing_title,
            }, fh, indent=2, sort_keys=True)
            fh.write("\n")
    emit("prepare.json", write_stats)

    update_manifest(cfg, out)
    return out


def _train_review_texts(cfg: PipelineConfig) -> dict[str, list[str]]:
    texts: dict[str, list[str]] = {}
    path = _require(cfg, "reviews_train.jsonl")
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                texts.setdefault(rec["user_id"], []).append(rec["text"])
            except (KeyError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad review record: {exc}") from exc
    return texts


def cmd_embed(cfg: PipelineConfig) -> list[Path]:
    """Embed each user's most recent 20 training reviews and the ID string."""
    texts = _train_review_texts(cfg)
    if cfg.embed_provider == "hashing":
        embedder = HashingEmbedder(dim=cfg.embed_dim, seed=cfg.embed_seed)
        review_vectors = {}
        id_vectors = {}
        for user in sorted(texts):
            recent = texts[user][-prompts.MAX_HISTORY:]
            for j, text in enumerate(recent):
                review_vectors[f"{user}:{j}"] = embedder.embed_text(text)
            id_vectors[user] = embedder.embed_text(user)
    else:
        review_vectors = load_embeddings(cfg.embed_reviews_path)
        id_vectors = load_embeddings(cfg.embed_ids_path)
        for user in texts:
            if user not in id_vectors:
                raise DataError(f"no precomputed ID embedding for user {user!r}")
            if f"{user}:0" not in review_vectors:
                raise DataError(f"no precomputed review embeddings for user {user!r}")
        dims = {v.shape[0] for v in review_vectors.values()}
        dims |= {v.shape[0] for v in id_vectors.values()}
        if dims != {cfg.embed_dim}:
            raise DataError(
                f"precomputed embeddings have dimensions {sorted(dims)}, "
                f"config says D={cfg.embed_dim}")
    rv_path = cfg.artifact("review_vectors.tsv")
    id_path = cfg.artifact("id_vectors.tsv")
    save_embeddings(rv_path, review_vectors, cfg.embed_dim)
    save_embeddings(id_path, id_vectors, cfg.embed_dim)
    update_manifest(cfg, [rv_path, id_path])
    return [rv_path, id_path]


def _reviews_by_user(review_vectors: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    grouped: dict[str, dict[int, np.ndarray]] = {}
    for key, vec in review_vectors.items():
        user, _, idx = key.rpartition(":")
        if not user or not idx.isdigit():
            raise DataError(f"bad review-vector key {key!r}; expected 'user:index'")
        grouped.setdefault(user, {})[int(idx)] = vec
    return {u: np.stack([rows[i] for i in sorted(rows)]) for u, rows in grouped.items()}


def cmd_train_index(cfg: PipelineConfig) -> list[Path]:
    """Joint fusion + quantizer training, then all three ID assignments."""
    review_vectors = load_embeddings(_require(cfg, "review_vectors.tsv"))
    id_vectors = load_embeddings(_require(cfg, "id_vectors.tsv"))
    reviews_by_user = _reviews_by_user(review_vectors)
    missing = set(reviews_by_user) - set(id_vectors)
    if missing:
        raise DataError(f"users missing ID vectors: {sorted(missing)[:5]}")

    model_cfg = rqvae.RqvaeConfig(
        input_dim=cfg.embed_dim, code_dim=cfg.code_dim, hidden_dim=cfg.hidden_dim,
        codebook_size=cfg.codebook_size, num_levels=cfg.num_levels, beta=cfg.beta,
    )
    model = rqvae.RqvaeModel.init(model_cfg, seed=cfg.rqvae_seed)
    attn = AttentionParams.init(cfg.embed_dim, seed=cfg.rqvae_seed)
    train_cfg = rqvae.TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size,
                                  lr=cfg.lr, seed=cfg.rqvae_seed)
    trace, fused = rqvae.train_joint(model, attn, reviews_by_user, id_vectors, train_cfg)

    out = []
    model_path = cfg.artifact("model.npz")
    rqvae.save_model(model_path, model, attn)
    out.append(model_path)

    fused_path = cfg.artifact("fused.tsv")
    save_embeddings(fused_path, fused, cfg.embed_dim)
    out.append(fused_path)

    users = sorted(reviews_by_user)
    assignments = {
        indexer.P_ID: indexer.assign_pid(model, fused),
        indexer.N_ID: indexer.assign_nid(users),
        indexer.O_ID: indexer.assign_oid(users),
    }
    for assign_mode, assignment in assignments.items():
        path = cfg.artifact(f"assignment_{assign_mode}.tsv")
        indexer.save_assignment(path, assignment)
        out.append(path)

    trace_path = cfg.artifact("train_trace.json")
    with open(trace_path, "w", encoding="utf-8") as fh:
        json.dump([{"recon": e.recon, "rq": e.rq} for e in trace], fh, indent=2)
        fh.write("\n")
    out.append(trace_path)

    update_manifest(cfg, out)
    return out


def _rendered_ids(cfg: PipelineConfig, mode: str | None = None) -> dict[str, str]:
    mode = mode or cfg.index_mode
    path = _require(cfg, f"assignment_{mode}.tsv", producer="train-index")
    assignment = indexer.load_assignment(path)
    if assignment.mode != mode:
        raise DataError(f"{path}: expected mode {mode}, found {assignment.mode}")
    return {u: sid.rendered for u, sid in assignment.ids.items()}


def cmd_gen_prompts(cfg: PipelineConfig) -> list[Path]:
    """Summaries, the six per-task corpora, and the mixed training corpus."""
    train = _read_split(cfg, "train.tsv")
    catalog = corpus.read_catalog(_require(cfg, "catalog.tsv"))
    rendered = _rendered_ids(cfg)
    texts = _train_review_texts(cfg)

    summarizer = TfSummarizer()
    summaries = {u: summarizer.summarize(u, texts.get(u, [])) for u in sorted(train)}
    out = []
    summaries_path = cfg.artifact("summaries.jsonl")
    prompts.write_summaries(summaries_path, summaries)
    out.append(summaries_path)

    per_task, stats = prompts.build_corpus(train, catalog, rendered, summaries,
                                           seed=cfg.prompt_seed)
    if cfg.proportions is None:
        mixture = uniform_mixture(cfg.prompt_total, cfg.prompt_seed)
    else:
        mixture = MixtureConfig(cfg.proportions, cfg.prompt_total, cfg.prompt_seed)
    mixed = prompts.mix(per_task, mixture)

    corpus_path = cfg.artifact("corpus.jsonl")
    prompts.write_corpus(corpus_path, mixed)
    out.append(corpus_path)

    stats_path = cfg.artifact("corpus_stats.json")
    counts = {t: sum(1 for inst in mixed if inst.task == t) for t in prompts.TASKS}
    with open(stats_path, "w", encoding="utf-8") as fh:
        json.dump({"mixed_counts": counts,
                   "available": {t: len(per_task[t]) for t in prompts.TASKS},
                   "skipped": dict(stats.skipped)}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    out.append(stats_path)

    update_manifest(cfg, out)
    return out


class _FixedCandidates:
    name = "fixed"

    def __init__(self, candidates: dict[str, list[str]]):
        self.candidates = candidates

    def retrieve(self, user_id, history, top_k):
        return self.candidates[user_id][:top_k]


def _build_retriever(cfg: PipelineConfig, train: dict[str, corpus.UserSequence],
                     catalog: dict[str, str]):
    if cfg.retriever == "cooc":
        return rank.CoocRetriever(train, catalog)
    return rank.FileRetriever(cfg.candidates_path)


def _build_scorer(cfg: PipelineConfig):
    if cfg.scorer == "file":
        return rank.FileScorer(cfg.logits_path)
    if cfg.scorer == "random":
        return rank.RandomScorer(seed=cfg.scorer_seed)
    return rank.SCORERS[cfg.scorer]()


def _rank_for_mode(cfg: PipelineConfig, mode: str) -> tuple[list[rank.RankingResult], dict]:
    train = _read_split(cfg, "train.tsv")
    valid = _read_split(cfg, "valid.tsv")
    test = _read_split(cfg, "test.tsv")
    catalog = corpus.read_catalog(_require(cfg, "catalog.tsv"))
    rendered = _rendered_ids(cfg, mode)

    histories = {}
    test_items = {}
    for user, seq in test.items():
        past = train[user].item_ids() + valid[user].item_ids()
        histories[user] = past
        test_items[user] = seq.interactions[-1].item_id

    retriever = _build_retriever(cfg, train, catalog)
    candidates = {u: retriever.retrieve(u, histories[u], cfg.top_k)
                  for u in sorted(test_items)}
    scorer = _build_scorer(cfg)
    results = rank.run_ranking(test_items, histories, catalog, rendered,
                               _FixedCandidates(candidates), scorer, cfg.top_k)
    return results, candidates


def _write_results(path, results) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps({
                "user_id": r.user_id,
                "ranking": list(r.ranking),
                "gt_in_candidates": r.gt_in_candidates,
                "gt_rank": r.gt_rank,
            }) + "\n")


def read_results(path) -> list[rank.RankingResult]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                out.append(rank.RankingResult(
                    rec["user_id"], tuple(rec["ranking"]),
                    rec["gt_in_candidates"], rec["gt_rank"]))
            except (KeyError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad result record: {exc}") from exc
    return out


def cmd_rank(cfg: PipelineConfig) -> list[Path]:
    """Retrieve candidates and rank them for every test user."""
    results, candidates = _rank_for_mode(cfg, cfg.index_mode)
    out = []
    cand_path = cfg.artifact("candidates.tsv")
    rank.write_candidates(cand_path, candidates)
    out.append(cand_path)
    results_path = cfg.artifact(cfg.results_name())
    _write_results(results_path, results)
    out.append(results_path)
    update_manifest(cfg, out)
    return out


def cmd_eval(cfg: PipelineConfig) -> tuple[evalmod.MetricsReport, list[Path]]:
    """Aggregate the ranking results into the Rank/Overall report."""
    results_path = _require(cfg, cfg.results_name(), producer="rank")
    results = read_results(results_path)
    report = evalmod.aggregate(results, cfg.eval_ks)
    report_path = cfg.artifact(cfg.report_name())
    evalmod.write_report(report_path, report, cfg.eval_ks)
    update_manifest(cfg, [report_path])
    return report, [report_path]


def cmd_all(cfg: PipelineConfig) -> evalmod.MetricsReport:
    cmd_prepare(cfg)
    cmd_embed(cfg)
    cmd_train_index(cfg)
    cmd_gen_prompts(cfg)
    cmd_rank(cfg)
    report, _ = cmd_eval(cfg)
    return report


def cmd_ablate_index(cfg: PipelineConfig) -> str:
    """Rank + eval under each indexing mode and emit the comparison grid."""
    modes = (indexer.P_ID, indexer.N_ID, indexer.O_ID)
    for mode in modes:
        _require(cfg, f"assignment_{mode}.tsv", producer="train-index")
    names = evalmod.metric_names(cfg.eval_ks)
    rows = []
    out = []
    for mode in modes:
        results, _ = _rank_for_mode(cfg, mode)
        results_path = cfg.artifact(f"results_{mode}.jsonl")
        _write_results(results_path, results)
        out.append(results_path)
        report = evalmod.aggregate(results, cfg.eval_ks)
        report_path = cfg.artifact(f"report_{mode}.jsonl")
        evalmod.write_report(report_path, report, cfg.eval_ks)
        out.append(report_path)
        rows.append((mode, report))

    width = max(len(n) for n in names) + 2
    lines = []
    for view in ("Rank", "Overall"):
        lines.append(view)
        lines.append("  " + "mode".ljust(8) + "".join(n.rjust(width) for n in names))
        for mode, report in rows:
            values = report.rank if view == "Rank" else report.overall
            lines.append("  " + mode.ljust(8)
                         + "".join(f"{values[n]:.4f}".rjust(width) for n in names))
    table = "\n".join(lines)

    table_path = cfg.artifact("ablation.txt")
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    out.append(table_path)
    update_manifest(cfg, out)
    return table
