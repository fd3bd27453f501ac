"""Master-seed splitting rule.

Chain i (and bootstrap resample i) draws from the i-th child of
SeedSequence(master_seed). Results depend only on (master_seed, i), never on
the worker that ran them.
"""

from typing import List

import numpy as np


def child_sequences(master_seed: int, n: int) -> List[np.random.SeedSequence]:
    return np.random.SeedSequence(master_seed).spawn(n)
