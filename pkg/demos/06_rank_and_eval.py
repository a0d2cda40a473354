# Two-stage evaluation on the bundled mini corpus: a co-occurrence
# retriever proposes 20 candidates per held-out user, a scorer ranks them
# through candidate-letter logits, and the report shows both the rank view
# (hits only) and the overall view (all users).

from pathlib import Path

from semidrec import corpus, rank
from semidrec.eval import aggregate, format_report

DATA = Path(__file__).resolve().parents[1] / "data" / "mini"

sequences, catalog, _ = corpus.ingest_files(DATA / "reviews.jsonl", DATA / "meta.jsonl")
sequences = corpus.kcore_filter(sequences, k=5)
split = corpus.split_leave_one_out(sequences)

train = {u: corpus.UserSequence(u, inters) for u, inters in split.train.items()}
# scoring-time history includes the validation item; the test item is hidden
histories = {u: [i.item_id for i in inters] + [split.valid[u].item_id]
             for u, inters in split.train.items()}
test_items = {u: split.test[u].item_id for u in split.test}
rendered = {u: f"<a_{n}>" for n, u in enumerate(sorted(test_items), start=1)}

retriever = rank.CoocRetriever(train, catalog)

for scorer in (rank.OverlapScorer(), rank.RandomScorer(seed=0), rank.OracleScorer()):
    results = rank.run_ranking(test_items, histories, catalog, rendered,
                               retriever, scorer, top_k=20)
    report = aggregate(results, ks=(5, 10))
    print(f"=== scorer: {scorer.name} ===")
    print(format_report(report, ks=(5, 10)))
    print()
