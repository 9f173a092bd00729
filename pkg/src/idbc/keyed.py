"""Seeded random streams and a counter-based keyed hash.

`stream(seed, *keys)` gives an independent numpy Generator per key path, so a
code's pool, each message's bin and each evaluation trial batch can be
regenerated without replaying anything else.  `keyed_uniform` maps integer
keys to uniforms in [0, 1) with a splitmix64 mix; it stands in for tables of
i.i.d. draws that are far too large to materialize (codeword indices per
message pair, feedback tags per output sequence).
"""
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

# stream tags
POOL, BINS_Y, BINS_Z, BINS_3, BINS_CM, INDEX, TAGS, TCODE, EVAL = range(9)


def stream(seed, *keys):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys)))


def _mix(z):
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def keyed_hash(seed, *keys):
    """uint64 hash of (seed, keys...); keys broadcast as integer arrays."""
    h = _mix(np.asarray([int(seed) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
    for k in keys:
        k = np.asarray(k).astype(np.uint64)
        h = _mix(h ^ k)
    return h


def keyed_uniform(seed, *keys):
    h = keyed_hash(seed, *keys)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def hash_rows(rows):
    """One uint64 per row of a 2-d symbol array."""
    rows = np.atleast_2d(rows)
    h = np.full(rows.shape[0], np.uint64(rows.shape[1]), dtype=np.uint64)
    for j in range(rows.shape[1]):
        h = _mix(h ^ rows[:, j].astype(np.uint64))
    return h


def draw_from_lists(u, lists_flat, starts, lengths):
    """Pick lists_flat[starts + floor(u * lengths)] elementwise."""
    off = np.minimum((u * lengths).astype(np.int64), np.maximum(lengths - 1, 0))
    return lists_flat[starts + off]
