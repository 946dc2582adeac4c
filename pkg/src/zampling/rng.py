"""Deterministic, labelled random streams.

Every random quantity in a run is drawn from a stream keyed by
``(master_seed, label, *indices)``. The derivation is part of the wire
contract between server and clients, since both sides must regenerate the
same influence matrix from nothing but the seed:

    key     = SeedSequence(entropy=master_seed,
                           spawn_key=(crc32(label), *indices))
    stream  = Generator(Philox(key))

Philox is counter-based, so streams with different keys never overlap and
the result does not depend on the order in which streams are created.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

MATRIX = "matrix"
P_INIT = "p-init"
CLIENT = "client"
EVALUATION = "evaluation"
SHUFFLE = "shuffle"
TRAIN = "train"
PARTITION = "partition"
PERTURB = "perturb"


def label_code(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must fit in 64 unsigned bits")

    def stream(self, label: str, *indices: int) -> np.random.Generator:
        key = np.random.SeedSequence(
            entropy=int(self.master_seed),
            spawn_key=(label_code(label), *(int(i) for i in indices)),
        )
        return np.random.Generator(np.random.Philox(key))

    def matrix(self) -> np.random.Generator:
        return self.stream(MATRIX)

    def p_init(self) -> np.random.Generator:
        return self.stream(P_INIT)

    def client(self, k: int, t: int) -> np.random.Generator:
        return self.stream(CLIENT, k, t)

    def evaluation(self, *indices: int) -> np.random.Generator:
        return self.stream(EVALUATION, *indices)


def as_seed(seed) -> SeedSpec:
    if isinstance(seed, SeedSpec):
        return seed
    return SeedSpec(int(seed))


def box_muller(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard normal variates from pairs of uniforms.

    Uses only ``rng.random`` so the output depends on the bit stream alone,
    not on numpy's ziggurat tables.
    """
    half = (size + 1) // 2
    u1 = 1.0 - rng.random(half)  # (0, 1], keeps log finite
    u2 = rng.random(half)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(2 * half)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:size]
