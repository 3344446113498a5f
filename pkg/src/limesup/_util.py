"""Small shared helpers: deterministic thread mapping and content hashing."""

import hashlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def pmap(fn, items, threads=1):
    """Map ``fn`` over ``items``, optionally on a thread pool.

    Results are always returned in input order, so any reduction applied on
    top of them is independent of scheduling.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def array_digest(*arrays):
    """SHA-256 hex digest of the raw bytes of the given arrays."""
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()
