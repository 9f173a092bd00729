"""Method-of-types helpers: empirical types, typicality, type classes,
the equitype decomposition of W^n and random L-type approximation."""
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from math import comb, factorial, lgamma

import numpy as np

from .channel import as_probs
from .info import entropy, mutual_information

# slack for float comparisons in count windows
_FTOL = 1e-9


@dataclass(frozen=True)
class TypeVector:
    counts: tuple
    n: int

    def __post_init__(self):
        if sum(self.counts) != self.n or min(self.counts, default=0) < 0:
            raise ValueError("counts must be non-negative and sum to n")

    @property
    def pmf(self):
        return np.array(self.counts, dtype=float) / self.n


@dataclass(frozen=True)
class LType:
    """Weights count/L on a finite list of sequences."""
    support: np.ndarray
    counts: np.ndarray
    L: int

    @property
    def weights(self):
        return self.counts / self.L


def empirical_type(x, alphabet_size):
    x = np.asarray(x)
    counts = np.bincount(x.ravel(), minlength=alphabet_size)
    if counts.size > alphabet_size:
        raise ValueError("symbol outside alphabet")
    return TypeVector(tuple(int(c) for c in counts), int(x.size))


def count_windows(p, n, eps):
    """Integer count bounds [lo, hi] per symbol for eps-typicality at length n."""
    p = np.asarray(p, dtype=float)
    lo = np.ceil(n * p * (1 - eps) - _FTOL).astype(np.int64)
    hi = np.floor(n * p * (1 + eps) + _FTOL).astype(np.int64)
    return np.maximum(lo, 0), hi


def is_typical(x, p, eps):
    """|N(a|x)/n - P(a)| <= eps P(a) for every symbol a."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    p = as_probs(p)
    x = np.asarray(x)
    counts = np.bincount(x.ravel(), minlength=p.size)
    if counts.size > p.size:
        return False
    lo, hi = count_windows(p, x.size, eps)
    return bool(np.all((counts >= lo) & (counts <= hi)))


def joint_pmf(p, w):
    """The matrix P(x) W(y|x)."""
    W = w.W if hasattr(w, "W") else np.asarray(w)
    return as_probs(p)[:, None] * W


def is_jointly_typical(x, y, joint, eps):
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise ValueError("length mismatch")
    joint = np.asarray(joint, dtype=float)
    ny = joint.shape[1]
    return is_typical(x.astype(np.int64) * ny + y, joint.ravel(), eps)


class JointTypicality:
    """Vectorized joint-typicality test against a fixed P x W."""

    def __init__(self, joint, n, eps):
        self.joint = np.asarray(joint, dtype=float)
        self.n, self.eps = n, eps
        self.nx, self.ny = self.joint.shape
        lo, hi = count_windows(self.joint.ravel(), n, eps)
        self.cells = [(a, b, lo[a * self.ny + b], hi[a * self.ny + b])
                      for a in range(self.nx) for b in range(self.ny)
                      if self.joint[a, b] > 0]
        self.empty = any(l > h for _, _, l, h in self.cells)

    def matrix(self, xs, ys, chunk=1 << 22):
        """Boolean (len(xs), len(ys)) matrix of joint typicality."""
        xs = np.atleast_2d(xs)
        ys = np.atleast_2d(ys)
        out = np.zeros((xs.shape[0], ys.shape[0]), dtype=bool)
        if self.empty or xs.shape[0] == 0 or ys.shape[0] == 0:
            return out
        xo = [(xs == a).astype(np.float32) for a in range(self.nx)]
        step = max(1, chunk // max(1, xs.shape[0]))
        for s in range(0, ys.shape[0], step):
            yb = ys[s:s + step]
            yo = [(yb == b).astype(np.float32).T for b in range(self.ny)]
            ok = np.ones((xs.shape[0], yb.shape[0]), dtype=bool)
            total = np.zeros((xs.shape[0], yb.shape[0]), dtype=np.float32)
            for a, b, lo, hi in self.cells:
                c = xo[a] @ yo[b]
                ok &= (c >= lo - 0.5) & (c <= hi + 0.5)
                total += c
            # all mass must sit on positive cells
            ok &= total >= self.n - 0.5
            out[:, s:s + step] = ok
        return out


def check_eps(eps, p, w, r_tilde):
    """2 delta(eps) < I(P,W) - R~ with delta(u) = u H(P x W)."""
    return 2 * eps * entropy(joint_pmf(p, w).ravel()) < mutual_information(p, w) - r_tilde


def default_eps(p, w, r_tilde):
    """Half of the largest eps allowed by check_eps."""
    return 0.5 * (mutual_information(p, w) - r_tilde) / entropy(joint_pmf(p, w).ravel()) / 2


# ------------------------------------------------------------ combinatorics

def type_class_size(t):
    size = factorial(t.n)
    for c in t.counts:
        size //= factorial(c)
    return size


def log_type_class_size(t):
    return lgamma(t.n + 1) - sum(lgamma(c + 1) for c in t.counts)


def compositions(n, k):
    """All k-tuples of non-negative integers summing to n."""
    if k == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in compositions(n - first, k - 1):
            yield (first,) + rest


def all_types(n, k):
    return [TypeVector(c, n) for c in compositions(n, k)]


def all_sequences(n, k):
    """Every length-n sequence over k symbols, row i is i written in base k."""
    if k ** n > 1 << 26:
        raise ValueError(f"{k}^{n} sequences exceed the enumeration budget")
    idx = np.arange(k ** n)
    digits = (idx[:, None] // k ** np.arange(n - 1, -1, -1)[None, :]) % k
    return digits.astype(np.uint8)


def sequence_index(seqs, k):
    seqs = np.atleast_2d(seqs).astype(np.int64)
    return seqs @ (k ** np.arange(seqs.shape[1] - 1, -1, -1))


def type_class(t):
    """All sequences with type t, in lexicographic order."""
    seqs = all_sequences(t.n, len(t.counts))
    counts = np.stack([(seqs == a).sum(axis=1) for a in range(len(t.counts))], axis=1)
    return seqs[np.all(counts == np.array(t.counts), axis=1)]


# ---------------------------------------------------- equitype decomposition

@dataclass(frozen=True)
class EquitypeTerm:
    V: np.ndarray        # conditional type V(y|x), W rows where P(x) = 0
    k: tuple             # joint counts k[a][b]
    c: float             # W^n(T_{PxV}(x) | x)
    L: int               # |T_{PxV}(x)|


def equitype_decompose(w, t, budget=1 << 20, exact=False):
    """Canonical decomposition W^n = sum_V c_V W_{V|P} on the type class t.

    With exact=True the weights c_V are Fractions built from the (binary
    exact) float entries of W.
    """
    W = w.W
    nx, ny = W.shape
    if len(t.counts) != nx:
        raise ValueError("type alphabet does not match channel input")
    total = 1
    for na in t.counts:
        total *= comb(na + ny - 1, ny - 1)
    if total > budget:
        raise ValueError(f"{total} conditional types exceed budget {budget}")
    per_symbol = [list(compositions(na, ny)) for na in t.counts]
    terms = []
    for choice in product(*per_symbol):
        L = 1
        c = Fraction(1) if exact else 1.0
        V = np.array(W, dtype=float)
        for a, ks in enumerate(choice):
            na = t.counts[a]
            mult = factorial(na)
            for kb in ks:
                mult //= factorial(kb)
            L *= mult
            for b, kb in enumerate(ks):
                if kb:
                    c *= (Fraction(W[a, b]) if exact else W[a, b]) ** kb
            if na:
                V[a] = np.array(ks, dtype=float) / na
        c *= L
        if c:
            terms.append(EquitypeTerm(V=V, k=choice, c=c, L=L))
    return terms


def equitype_prob(terms, x, y, nx, ny):
    """sum_V c_V W_{V|P}(y|x) for one pair of sequences."""
    x = np.asarray(x)
    y = np.asarray(y)
    k = tuple(tuple(int(np.sum((x == a) & (y == b))) for b in range(ny)) for a in range(nx))
    for term in terms:
        if term.k == k:
            return term.c / term.L
    return 0


# ----------------------------------------------------------------- L-types

def l_type_approximate(support, q, L, rng):
    """Empirical distribution of L i.i.d. draws from q over `support`."""
    if L < 1:
        raise ValueError("L must be at least 1")
    q = np.asarray(q, dtype=float)
    counts = rng.multinomial(L, q / q.sum())
    return LType(support=np.asarray(support), counts=counts, L=int(L))


def output_law(seqs, weights, w):
    """(Q W^n)(y) for every y in Y^n (index order of all_sequences)."""
    seqs = np.atleast_2d(seqs)
    n = seqs.shape[1]
    W = w.W
    ys = all_sequences(n, W.shape[1])
    out = np.zeros(ys.shape[0])
    for x, q in zip(seqs, weights):
        if q:
            out += q * np.prod(W[x[None, :], ys], axis=1)
    return out


def l_type_bounds(qw_d, n, delta, eps):
    """Lower and upper bounds on (Q'W^n)(D) given (QW^n)(D)."""
    t = np.exp(-n * delta)
    upper = (1 + eps) / (1 - t) * qw_d + t
    lower = (1 - eps) * (1 - t) * qw_d - t
    return lower, upper


def rho(u, ny):
    """rho(u) = 6u + 2 g(3u) + sqrt(3u) ln|Y|, g(u) = -sqrt(2u) ln sqrt(2u)."""
    def g(v):
        s = np.sqrt(2 * v)
        return 0.0 if v == 0 else -s * np.log(s)
    return 6 * u + 2 * g(3 * u) + np.sqrt(3 * u) * np.log(ny)


def l_type_check(w, t, q, L, delta, eps, n_sets, rng):
    """Draw an L-type approximation of q (a PMF on the type class t) and count
    the random decision sets D on which the two-sided bounds fail."""
    support = type_class(t)
    q = np.asarray(q, dtype=float)
    if q.shape != (support.shape[0],):
        raise ValueError("q must give one weight per sequence of the type class")
    approx = l_type_approximate(support, q, L, rng)
    law_q = output_law(support, q / q.sum(), w)
    law_a = output_law(support, approx.weights, w)
    failures = 0
    for _ in range(n_sets):
        d = rng.random(law_q.size) < rng.random()
        lower, upper = l_type_bounds(law_q[d].sum(), t.n, delta, eps)
        val = law_a[d].sum()
        failures += not (lower - 1e-12 <= val <= upper + 1e-12)
    return {"failures": int(failures), "sets": int(n_sets), "L": int(L), "n": t.n}
