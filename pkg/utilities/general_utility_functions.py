#------------------------------------------------
#  This file contains extra functions to perform
#  additional operations needed everywhere
#  e.g. one-line warnings, reproducible chunked reductions,
#  seeded generator streams and JSON output.
import concurrent.futures
import hashlib
import json
import warnings

import numpy as np

# Row chunk size of every parallel reduction. Partial sums are combined in
# chunk order so results do not depend on the number of threads.
CHUNK_SIZE = 32768


def custom_formatwarning(msg, *args, **kwargs):
    # ignore everything except the message
    return str(msg) + '\n'


def warn(message, category=RuntimeWarning):
    warnings.formatwarning = custom_formatwarning
    warnings.warn(message, category, stacklevel=2)


def chunk_bounds(n_rows, chunk_size=CHUNK_SIZE):
    """
    :param n_rows:      Number of rows to split
    :type n_rows:       int
    :param chunk_size:  Rows per chunk
    :type chunk_size:   int
    :return:            list of (start, stop) pairs covering range(n_rows)
    :rtype:             list
    """
    if n_rows == 0:
        return []
    starts = range(0, n_rows, chunk_size)
    return [(s, min(s + chunk_size, n_rows)) for s in starts]


def chunked_reduce(func, n_rows, threads=1, chunk_size=CHUNK_SIZE):
    """
    Evaluate func(start, stop) on fixed row chunks and add the partial
    results in chunk order. func may return a float or a numpy array
    (or a tuple of them).
    """
    bounds = chunk_bounds(n_rows, chunk_size)
    if not bounds:
        return None
    if threads > 1 and len(bounds) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: func(*b), bounds))
    else:
        parts = [func(*b) for b in bounds]

    total = parts[0]
    for part in parts[1:]:
        if isinstance(total, tuple):
            total = tuple(t + p for t, p in zip(total, part))
        else:
            total = total + part
    return total


def spawn_generators(seed, n):
    """Independent numpy generators derived from one master seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.default_rng(c) for c in children]


def file_digest(path):
    sha = hashlib.sha256()
    with open(path, 'rb') as handle:
        for block in iter(lambda: handle.read(1 << 20), b''):
            sha.update(block)
    return sha.hexdigest()


class NumpyEncoder(json.JSONEncoder):
    def default(self, obj):
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, (set, frozenset)):
            return sorted(obj)
        return super().default(obj)


def dump_json(obj, path):
    with open(path, 'w') as handle:
        json.dump(obj, handle, indent=2, cls=NumpyEncoder)
