"""Small shared helpers."""
from __future__ import annotations

import numpy as np


def derive_seed(master: int, *indices: int) -> int:
    """Deterministic child seed from a master seed and an index path."""
    ss = np.random.SeedSequence([int(master), *[int(i) for i in indices]])
    return int(ss.generate_state(1, np.uint64)[0])
