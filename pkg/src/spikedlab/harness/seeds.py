"""Replica seed derivation."""

import hashlib
import struct

import numpy as np

_MASK = (1 << 64) - 1


class SeedCollision(RuntimeError):
    pass


def _hash(*parts) -> int:
    data = b"".join(struct.pack("<Q", int(p) & _MASK) if isinstance(p, (int, np.integer))
                    else str(p).encode() + b"\x00" for p in parts)
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def replica_seed(master: int, cell: int, disorder: int, init: int) -> int:
    return _hash("replica", master, cell, disorder, init)


def disorder_seed(master: int, N: int, index: int) -> int:
    """Disorder seeds depend on N but not on (k, lam, beta), so cells at equal N share noise."""
    return _hash("disorder", master, N, index)


def batch_seed(master: int, cell: int, disorder: int, tag: str) -> int:
    return _hash(tag, master, cell, disorder)


def seed_grid(master: int, n_cells: int, n_disorder: int, n_init: int) -> np.ndarray:
    """All replica seeds, shape (cells, disorders, inits); raises on any duplicate."""
    out = np.empty((n_cells, n_disorder, n_init), dtype=np.uint64)
    for c in range(n_cells):
        for d in range(n_disorder):
            for i in range(n_init):
                out[c, d, i] = replica_seed(master, c, d, i)
    flat = out.ravel()
    if np.unique(flat).size != flat.size:
        raise SeedCollision("replica seed collision; change the master seed")
    return out


def split(seed: int, n: int = 2) -> list:
    """Independent child seeds (e.g. one for the start, one for the Brownian path)."""
    ss = np.random.SeedSequence(int(seed))
    return [int(c.generate_state(1, np.uint64)[0]) for c in ss.spawn(n)]
