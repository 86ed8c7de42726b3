"""Deterministic seed fan-out.

Every stochastic component gets its own generator derived from
``(master seed, label, indices)`` so results never depend on scheduling.
"""
import zlib

import numpy as np


def derive_seed(master: int, label: str = "", *indices: int) -> int:
    words = [int(master) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(label.encode())]
    words += [int(i) for i in indices]
    ss = np.random.SeedSequence(words)
    hi, lo = (int(w) for w in ss.generate_state(2, dtype=np.uint32))
    return (hi << 32) | lo


def rng_for(master: int, label: str = "", *indices: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, label, *indices))
