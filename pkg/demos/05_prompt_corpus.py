"""
From review histories to an instruction corpus
==============================================

Builds the six alignment tasks for the bundled mini corpus: ingest,
filter, split, assign semantic IDs, summarize preferences, then mix a
balanced instruction set.
"""

from pathlib import Path

import numpy as np

from semidrec import corpus, indexer, prompts, rqvae
from semidrec.embed import HashingEmbedder
from semidrec.fusion import AttentionParams, fuse

DATA = Path(__file__).resolve().parents[1] / "data" / "mini"

sequences, catalog, _ = corpus.ingest_files(DATA / "reviews.jsonl", DATA / "meta.jsonl")
sequences = corpus.kcore_filter(sequences, k=5)
split = corpus.split_leave_one_out(sequences)
train = {u: corpus.UserSequence(u, inters) for u, inters in split.train.items()}
print(f"{len(train)} users after 5-core filtering and leave-one-out split")

# hash-based stand-in embeddings keep the demo self-contained
embedder = HashingEmbedder(dim=32, seed=7)
attn = AttentionParams.init(32, seed=7)
fused = {}
for user, seq in train.items():
    texts = [i.review_text for i in seq.interactions]
    review_vecs = np.stack([embedder.embed_text(t) for t in texts])
    fused[user] = fuse(attn, review_vecs, embedder.embed_text(user))

model = rqvae.RqvaeModel.init(
    rqvae.RqvaeConfig(input_dim=32, code_dim=12, hidden_dim=48,
                      codebook_size=32, num_levels=3), seed=7)
rqvae.init_codebooks(model, np.stack([fused[u] for u in sorted(fused)]),
                     np.random.default_rng(7))
assignment = indexer.assign_pid(model, fused)
rendered = {u: sid.rendered for u, sid in assignment.ids.items()}

summarizer = prompts.TfSummarizer()
summaries = {u: summarizer.summarize(u, [i.review_text for i in train[u].interactions])
             for u in train}

per_task, stats = prompts.build_corpus(train, catalog, rendered, summaries, seed=7)
mixed = prompts.mix(per_task, prompts.uniform_mixture(60, seed=7))
print(f"mixed corpus: {len(mixed)} instances, skipped: {dict(stats.skipped)}\n")

shown = set()
for inst in mixed:
    if inst.task in shown:
        continue
    shown.add(inst.task)
    print(f"--- {inst.task} ---")
    print(inst.input)
    print("=>", inst.target, "\n")
