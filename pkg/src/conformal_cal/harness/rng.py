"""Named random streams.

Each ``(trial, component)`` pair gets its own generator, derived from the
base seed through ``SeedSequence`` spawn keys. Adding a new component never
shifts the numbers another component sees.
"""

from __future__ import annotations

import zlib

import numpy as np


def component_id(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(base_seed: int, trial: int, component: str) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(trial), component_id(component)))
    return np.random.Generator(np.random.PCG64(ss))
