"""Hierarchical semantic user IDs from review histories, with alignment-task
prompt corpora and two-stage retrieval + ranking evaluation.

Review texts are embedded, fused per user with ID-conditioned attention, and
compressed by a residual-quantized autoencoder into unique multi-level ID
tokens. The package also builds the six instruction corpora that ground
those IDs and evaluates next-item ranking with leave-one-out splits.
"""

from .errors import DataError, TrainingDivergence, UsageError

__version__ = "0.1.0"

__all__ = ["DataError", "TrainingDivergence", "UsageError", "__version__"]
