"""
Seed derivation for independently seeded jobs.
"""

import numpy as np


def derive_seed(base: int, *keys: int) -> int:
    """Derive a stable 63-bit seed from a base seed and integer keys."""
    entropy = [int(base) & 0xFFFFFFFFFFFFFFFF] + [int(k) & 0xFFFFFFFF for k in keys]
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & 0x7FFFFFFFFFFFFFFF
