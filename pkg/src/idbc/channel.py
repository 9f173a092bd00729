"""Finite-alphabet channel models, n-fold laws and sampling.

Sequences are numpy uint8 arrays of alphabet indices.  Every channel value
is immutable after construction.
"""
import json
from decimal import Decimal, InvalidOperation

import numpy as np

TOL = 1e-12
MAX_ALPHABET = 256


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_rows(a, what):
    if np.any(~np.isfinite(a)) or np.any(a < 0):
        raise ValueError(f"{what}: entries must be finite and non-negative")
    sums = a.reshape(a.shape[0], -1).sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > TOL)
    if bad.size:
        raise ValueError(f"{what}: row {bad[0]} sums to {sums[bad[0]]!r}, not 1")
    for k in a.shape:
        if k < 1 or k > MAX_ALPHABET:
            raise ValueError(f"{what}: alphabet size {k} outside [1, {MAX_ALPHABET}]")


class Pmf:
    """Probability vector over a finite alphabet."""

    def __init__(self, probs):
        p = _frozen(probs)
        if p.ndim != 1:
            raise ValueError("Pmf needs a 1-d vector")
        _check_rows(p[None, :], "Pmf")
        self.probs = p

    @classmethod
    def uniform(cls, k):
        return cls(np.full(k, 1.0 / k))

    @property
    def size(self):
        return self.probs.size

    def support(self):
        return np.flatnonzero(self.probs > 0)

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    def __len__(self):
        return self.probs.size

    def __repr__(self):
        return f"Pmf({np.array2string(self.probs, precision=6)})"


def as_pmf(p):
    return p if isinstance(p, Pmf) else Pmf(p)


def as_probs(p):
    return p.probs if isinstance(p, Pmf) else np.asarray(p, dtype=float)


class Dmc:
    """Row-stochastic matrix W[x, y] = W(y|x)."""

    def __init__(self, rows):
        w = _frozen(rows)
        if w.ndim != 2:
            raise ValueError("Dmc needs a 2-d matrix")
        _check_rows(w, "Dmc")
        self.W = w

    @property
    def nx(self):
        return self.W.shape[0]

    @property
    def ny(self):
        return self.W.shape[1]

    def __repr__(self):
        return f"Dmc({self.nx}x{self.ny})"


class Bc2:
    """Two-receiver broadcast channel, tensor T[x, y, z] = W(y,z|x)."""

    def __init__(self, tensor):
        t = _frozen(tensor)
        if t.ndim != 3:
            raise ValueError("Bc2 needs a 3-d tensor")
        _check_rows(t, "Bc2")
        self.T = t

    @property
    def nx(self):
        return self.T.shape[0]

    def __repr__(self):
        return "Bc2(%dx%dx%d)" % self.T.shape


class Bc3:
    """Three-receiver broadcast channel, tensor T[x, y1, y2, y3]."""

    def __init__(self, tensor):
        t = _frozen(tensor)
        if t.ndim != 4:
            raise ValueError("Bc3 needs a 4-d tensor")
        _check_rows(t, "Bc3")
        self.T = t

    @property
    def nx(self):
        return self.T.shape[0]

    def __repr__(self):
        return "Bc3(%dx%dx%dx%d)" % self.T.shape


# ---------------------------------------------------------------- builders

def bsc(p):
    return Dmc([[1 - p, p], [p, 1 - p]])


def z_channel(p):
    """Input 1 flips to 0 with probability p; input 0 is noiseless."""
    return Dmc([[1.0, 0.0], [p, 1 - p]])


def noiseless(k):
    return Dmc(np.eye(k))


def compose(w1, w2):
    """Cascade x -> w1 -> w2 (a degraded version of w1)."""
    return Dmc(_renorm(w1.W @ w2.W))


def _renorm(a):
    # Float products can miss 1 by a few ulps; this is not user input.
    return a / a.sum(axis=tuple(range(1, a.ndim)), keepdims=True)


def product_bc(wy, wz):
    """Conditionally independent outputs: W(y,z|x) = W_Y(y|x) W_Z(z|x)."""
    if wy.nx != wz.nx:
        raise ValueError("input alphabets differ")
    return Bc2(_renorm(wy.W[:, :, None] * wz.W[:, None, :]))


def identical_bc(w):
    """Both receivers observe the same output Z = Y."""
    t = np.zeros((w.nx, w.ny, w.ny))
    idx = np.arange(w.ny)
    t[:, idx, idx] = w.W
    return Bc2(t)


def product_bc3(w1, w2, w3):
    t = w1.W[:, :, None, None] * w2.W[:, None, :, None] * w3.W[:, None, None, :]
    return Bc3(_renorm(t))


# ------------------------------------------------------------- marginals

def marginal_y(bc):
    return Dmc(bc.T.sum(axis=2))


def marginal_z(bc):
    return Dmc(bc.T.sum(axis=1))


def marginal(bc3, k):
    """Marginal channel to receiver k in {0, 1, 2} of a Bc3."""
    axes = tuple(a for a in (1, 2, 3) if a != k + 1)
    return Dmc(bc3.T.sum(axis=axes))


def conditional_z_given_xy(bc):
    """W~_Z(z|x,y) = W(y,z|x) / W_Y(y|x).

    Returns (probs, defined) where probs has shape (|X|, |Y|, |Z|) and
    defined[x, y] is False wherever W_Y(y|x) = 0; those rows are all-zero.
    """
    wy = bc.T.sum(axis=2)
    defined = wy > 0
    probs = np.zeros_like(bc.T)
    np.divide(bc.T, wy[:, :, None], out=probs, where=defined[:, :, None])
    probs.setflags(write=False)
    defined.setflags(write=False)
    return probs, defined


# ------------------------------------------------------------- sequences

def as_sequence(symbols, alphabet_size=MAX_ALPHABET):
    s = np.asarray(symbols)
    if s.size and (s.min() < 0 or s.max() >= alphabet_size):
        raise ValueError("symbol outside alphabet")
    return s.astype(np.uint8)


def nfold_prob(ch, x, y):
    """W^n(y|x) = prod_i W(y_i|x_i)."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    return float(np.prod(ch.W[x, y]))


def sample_output(ch, x, rng):
    """Pass x (any shape) through the channel symbol by symbol."""
    x = np.asarray(x)
    cdf = np.cumsum(ch.W, axis=1)
    u = rng.random(x.shape)
    y = (u[..., None] >= cdf[x]).sum(axis=-1)
    return np.minimum(y, ch.ny - 1).astype(np.uint8)


def sample_joint_output(tensor, x, rng):
    """Sample the flattened joint output of a broadcast tensor for inputs x."""
    flat = tensor.reshape(tensor.shape[0], -1)
    cdf = np.cumsum(flat, axis=1)
    u = rng.random(np.shape(x))
    j = (u[..., None] >= cdf[np.asarray(x)]).sum(axis=-1)
    j = np.minimum(j, flat.shape[1] - 1)
    return np.unravel_index(j, tensor.shape[1:])


# ------------------------------------------------------------ file format

def parse_channel(text):
    """Parse a channel document.

    {"inputs": |X|, "outputs": [|Y|] | [|Y|, |Z|] | [|Y1|, |Y2|, |Y3|],
     "probs": row-major numbers}

    Numbers are parsed as exact decimals and each row must sum to one within
    1e-12; nothing is renormalized.
    """
    try:
        doc = json.loads(text, parse_float=Decimal, parse_int=Decimal)
    except ValueError as e:
        raise ValueError(f"bad channel document: {e}") from None
    try:
        nx = int(doc["inputs"])
        outs = [int(k) for k in doc["outputs"]]
        flat = list(_flatten(doc["probs"]))
    except (KeyError, TypeError, InvalidOperation) as e:
        raise ValueError(f"bad channel document: {e!r}") from None
    if not 1 <= len(outs) <= 3:
        raise ValueError("outputs must list 1 to 3 alphabet sizes")
    for k in [nx] + outs:
        if not 1 <= k <= MAX_ALPHABET:
            raise ValueError(f"alphabet size {k} outside [1, {MAX_ALPHABET}]")
    row = int(np.prod(outs))
    if len(flat) != nx * row:
        raise ValueError(f"expected {nx * row} probabilities, got {len(flat)}")
    for x in range(nx):
        r = flat[x * row:(x + 1) * row]
        if any(not isinstance(v, Decimal) or not v.is_finite() or v < 0 for v in r):
            raise ValueError(f"row {x}: entries must be non-negative numbers")
        s = sum(r, Decimal(0))
        if abs(s - 1) > Decimal("1e-12"):
            raise ValueError(f"row {x} sums to {s}, not 1")
    arr = np.array([float(v) for v in flat]).reshape([nx] + outs)
    return {1: Dmc, 2: Bc2, 3: Bc3}[len(outs)](arr)


def _flatten(v):
    if isinstance(v, list):
        for item in v:
            yield from _flatten(item)
    else:
        yield v


def load_channel(path):
    with open(path, encoding="utf-8") as fh:
        return parse_channel(fh.read())


def channel_to_dict(ch):
    a = ch.W if isinstance(ch, Dmc) else ch.T
    return {"inputs": a.shape[0], "outputs": list(a.shape[1:]),
            "probs": [float(v) for v in a.ravel()]}
