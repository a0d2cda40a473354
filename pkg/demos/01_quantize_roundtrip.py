"""
Residual quantization in five lines of algebra
==============================================

A latent vector is coded level by level: each level's codebook absorbs
the nearest codeword and passes the leftover residual to the next one.
"""

import numpy as np

from semidrec import rqvae
from semidrec.indexer import parse_id, render_id

rng = np.random.default_rng(0)

# three levels of eight codewords in a 4-dim latent space
stack = rqvae.CodebookStack(
    [rqvae.Codebook(i, rng.standard_normal((8, 4))) for i in range(3)]
)

z = rng.standard_normal(4)
result = rqvae.quantize(stack, z)

print("latent          ", np.round(z, 3))
print("codewords       ", result.codewords)
print("quantized       ", np.round(result.quantized, 3))
for i, r in enumerate(result.residuals):
    print(f"residual r_{i}    ", np.round(r, 3), " norm", round(float(np.linalg.norm(r)), 3))

# the residuals telescope: z - quantized == final residual
assert np.allclose(z - result.quantized, result.residuals[-1])

# the codeword tuple renders as a readable hierarchical ID and parses back
rendered = render_id(result.codewords)
print("rendered ID     ", rendered)
assert parse_id(rendered) == tuple(result.codewords)
print("round trip OK")
