# Identical embeddings collide on the same codeword tuple. The assigner
# bumps later claimants to the nearest free tuple, deepest level first,
# so every user ends up with a unique hierarchical ID.

import numpy as np

from semidrec import indexer, rqvae

cfg = rqvae.RqvaeConfig(input_dim=4, code_dim=3, hidden_dim=6,
                        codebook_size=4, num_levels=2)
model = rqvae.RqvaeModel.init(cfg, seed=7)

# sixteen users, every one with the same vector: worst case, and it still
# fills the whole 4 x 4 code space injectively
same = np.array([0.3, -0.1, 0.2, 0.5])
users = {f"user{i:02d}": same.copy() for i in range(16)}

assignment = indexer.assign_pid(model, users)
for user in sorted(assignment.ids):
    print(user, "->", assignment.ids[user].rendered)

rendered = [s.rendered for s in assignment.ids.values()]
assert len(set(rendered)) == len(rendered)
assert len(rendered) == 16

# a seventeenth user would exceed K^p capacity and is rejected up front
try:
    indexer.assign_pid(model, {f"user{i:02d}": same.copy() for i in range(17)})
except Exception as exc:
    print("17th user rejected:", exc)

# numbering and passthrough baselines share the same assignment API
print("N-ID:", {u: s.rendered for u, s in indexer.assign_nid(["mo", "ada"]).ids.items()})
print("O-ID:", {u: s.rendered for u, s in indexer.assign_oid(["mo", "ada"]).ids.items()})
