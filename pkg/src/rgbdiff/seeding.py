"""Deterministic seed derivation.

All randomness in the package flows from one root seed through named
substreams, so individual components can be re-run and tested in isolation.
Derivation is by hashing, not arithmetic, so substreams never collide for
different name paths.
"""

from __future__ import annotations

import hashlib

import numpy as np
import torch

_MASK = (1 << 63) - 1


def derive_seed(root_seed: int, *names) -> int:
    """Derive a child seed from ``root_seed`` and a path of substream names.

    Names may be strings or integers; the same path always yields the same
    seed and distinct paths yield (cryptographically) independent ones.
    """
    h = hashlib.sha256()
    h.update(str(int(root_seed)).encode())
    for name in names:
        h.update(b"/")
        h.update(str(name).encode())
    return int.from_bytes(h.digest()[:8], "little") & _MASK


def numpy_rng(root_seed: int, *names) -> np.random.Generator:
    """NumPy generator for the given substream."""
    return np.random.Generator(np.random.PCG64(derive_seed(root_seed, *names)))


def torch_generator(root_seed: int, *names) -> torch.Generator:
    """Torch generator for the given substream."""
    gen = torch.Generator()
    gen.manual_seed(derive_seed(root_seed, *names))
    return gen
