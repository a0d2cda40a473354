"""
Fusing a review history into one vector
=======================================

Review embeddings are combined by attention against the user-ID
embedding: reviews that look like the user's identity get the weight.
"""

import numpy as np

from semidrec.embed import HashingEmbedder
from semidrec.fusion import AttentionParams, attention_weights, fuse

embedder = HashingEmbedder(dim=32, seed=7)

reviews = [
    "great hair dye, the color lasts for weeks",
    "this conditioner left my hair soft and shiny",
    "bought a phone case, it cracked in a day",
]
review_vecs = np.stack([embedder.embed_text(t) for t in reviews])

# the ID embedding stands in for who the user is; here a hair-care person
id_vec = embedder.embed_text("loves hair color and hair care")

attn = AttentionParams.init(32, seed=7)
weights = attention_weights(attn, review_vecs, id_vec)

for w, text in zip(weights, reviews):
    print(f"{w:.3f}  {text}")
assert abs(weights.sum() - 1.0) < 1e-12

fused = fuse(attn, review_vecs, id_vec)
print("fused vector norm:", round(float(np.linalg.norm(fused)), 3))

# the fused vector is the weighted mean, so it stays in the review span
assert np.allclose(fused, weights @ review_vecs)

# the two on-topic reviews should outweigh the phone case
assert weights[0] + weights[1] > weights[2]
print("hair reviews dominate the phone case, as they should")
