"""Braid-based mode inference and entropy-minimizing speed planning at an
unsignalized four-way intersection."""

from .braid import BraidWord, are_equal, canonical_key, free_reduce, mode_count_bound, permutation_of
from .topology import ProjectionFrame, SystemTrajectory, extract_braid

__all__ = ["BraidWord", "ProjectionFrame", "SystemTrajectory", "are_equal", "canonical_key",
           "extract_braid", "free_reduce", "mode_count_bound", "permutation_of"]
