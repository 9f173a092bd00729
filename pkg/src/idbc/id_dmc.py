"""Single-user identification code: pool and bins, stochastic encoder,
typicality decoder and error evaluation.

The evaluation engine here (`acceptance`) is shared by the broadcast and
extension codes: every scheme reduces to "which pool indices are sent, with
what weights" and "which bins define the decision sets".
"""
from dataclasses import dataclass, field

import numpy as np

from . import keyed
from .channel import as_pmf
from .info import entropy, mutual_information
from .typeskit import JointTypicality, default_eps, joint_pmf

DEFAULT_BUDGET_STATES = 1 << 24
DEFAULT_POOL_BUDGET = 1 << 26          # pool symbols (bytes)
FULL_PAIR_LIMIT = 64
Z_WILSON = 1.96


class ParamError(ValueError):
    """Raised when parameters violate a scheme's rate constraints."""

    def __init__(self, reasons):
        super().__init__("invalid parameters: " + ", ".join(reasons))
        self.reasons = list(reasons)


class BudgetError(RuntimeError):
    pass


def pool_size_for(n, pool_rate):
    return max(1, int(np.floor(np.exp(n * pool_rate) + 0.5)))


def selection_prob(n, pool_rate, bin_rate):
    return float(min(1.0, np.exp(-n * (pool_rate - bin_rate))))


@dataclass(frozen=True)
class IdParams:
    n: int
    m_count: int
    pool_rate: float
    bin_rate: float
    input_pmf: tuple
    eps: float = None
    seed: int = 0
    id_rate: float = None

    @property
    def pool_size(self):
        return pool_size_for(self.n, self.pool_rate)

    @property
    def p_sel(self):
        return selection_prob(self.n, self.pool_rate, self.bin_rate)


def validate_dmc(params, w):
    """Reason codes for every violated constraint (empty list if valid)."""
    p = as_pmf(params.input_pmf)
    reasons = []
    if params.n < 1 or params.m_count < 1:
        reasons.append("bad-size")
    i = mutual_information(p, w)
    if not params.bin_rate < i:
        reasons.append("bin-rate-exceeds-mutual-info")
    if not params.bin_rate < params.pool_rate:
        reasons.append("bin-rate-exceeds-pool-rate")
    if params.id_rate is not None and not params.id_rate < params.bin_rate:
        reasons.append("id-rate-exceeds-bin-rate")
    eps = params.eps
    if eps is not None and (eps <= 0 or not 2 * eps * entropy(joint_pmf(p, w).ravel()) < i - params.bin_rate):
        reasons.append("eps-too-large")
    return reasons


def empirical_id_rate(n, m_count):
    """(1/n) ln ln |M|, reported only for |M| >= 3."""
    return float(np.log(np.log(m_count)) / n) if m_count >= 3 else None


# ------------------------------------------------------------------ codes

def draw_pool(seed, n, size, p, budget=DEFAULT_POOL_BUDGET):
    if size * n > budget:
        raise BudgetError(f"pool of {size} x {n} symbols exceeds budget {budget}")
    rng = keyed.stream(seed, keyed.POOL)
    cdf = np.cumsum(as_pmf(p).probs)
    u = rng.random((size, n))
    x = (u[..., None] >= cdf).sum(axis=-1)
    return np.minimum(x, cdf.size - 1).astype(np.uint8)


def draw_bin(seed, tag, key, pool_size, p_sel):
    """Independent Bernoulli(p_sel) selection of each pool index."""
    rng = keyed.stream(seed, tag, *np.atleast_1d(key))
    if p_sel >= 1.0:
        return np.arange(pool_size, dtype=np.int64)
    size = rng.binomial(pool_size, p_sel)
    return np.sort(rng.choice(pool_size, size=size, replace=False)).astype(np.int64)


@dataclass
class IdCodeDmc:
    params: IdParams
    pool: np.ndarray
    index_sets: list
    joint: np.ndarray          # P x W used by the decoder
    eps: float
    v_star: int = 0

    @property
    def n(self):
        return self.pool.shape[1]

    def sender_weights(self, m):
        """(pool indices, probabilities) of the codeword sent for m."""
        b = self.index_sets[m]
        if b.size == 0:
            return np.array([self.v_star]), np.array([1.0])
        return b, np.full(b.size, 1.0 / b.size)


def build_dmc_code(params, w, check=True, pool_budget=DEFAULT_POOL_BUDGET):
    """Pool of i.i.d. P^n sequences and one Bernoulli bin per message."""
    if check:
        reasons = validate_dmc(params, w)
        if reasons:
            raise ParamError(reasons)
    p = as_pmf(params.input_pmf)
    eps = params.eps if params.eps is not None else default_eps(p, w, params.bin_rate)
    pool = draw_pool(params.seed, params.n, params.pool_size, p, pool_budget)
    bins = [draw_bin(params.seed, keyed.BINS_Y, m, params.pool_size, params.p_sel)
            for m in range(params.m_count)]
    return IdCodeDmc(params=params, pool=pool, index_sets=bins,
                     joint=joint_pmf(p, w), eps=float(eps))


def encode_dmc(code, m, rng):
    b = code.index_sets[m]
    if b.size == 0:
        return code.pool[code.v_star].copy()
    return code.pool[b[rng.integers(b.size)]].copy()


def decode_accepts(code, m_prime, y):
    b = code.index_sets[m_prime]
    if b.size == 0:
        return False
    typ = JointTypicality(code.joint, code.n, code.eps)
    return bool(typ.matrix(code.pool[b], np.asarray(y)[None, :]).any())


# ------------------------------------------------------- evaluation engine

def wilson_halfwidth(k, t, z=Z_WILSON):
    """Half-width of the Wilson score interval for k successes in t trials."""
    k = np.asarray(k, dtype=float)
    p = k / t
    denom = 1 + z * z / t
    return z * np.sqrt(p * (1 - p) / t + z * z / (4 * t * t)) / denom


def wilson_center(k, t, z=Z_WILSON):
    p = np.asarray(k, dtype=float) / t
    return (p + z * z / (2 * t)) / (1 + z * z / t)


def _loglik(typ_cells_W, xs, ys):
    """ln W^n(y|x) for all pairs via joint counts."""
    W = typ_cells_W
    nx, ny = W.shape
    xo = [(xs == a).astype(np.float32) for a in range(nx)]
    yo = [(ys == b).astype(np.float32).T for b in range(ny)]
    ll = np.zeros((xs.shape[0], ys.shape[0]))
    dead = np.zeros((xs.shape[0], ys.shape[0]), dtype=bool)
    for a in range(nx):
        for b in range(ny):
            c = xo[a] @ yo[b]
            if W[a, b] > 0:
                ll += c * np.log(W[a, b])
            else:
                dead |= c > 0.5
    ll[dead] = -np.inf
    return ll


def acceptance(pool, senders, decisions, W, joint, eps, mode="exact", trials=100000,
               seed=0, budget_states=DEFAULT_BUDGET_STATES, chunk=1 << 14):
    """Acceptance probabilities acc[s, d] = P(Y^n in D_d | sender s).

    senders: list of (pool indices, weights); decisions: list of bins.
    W is the matrix of the channel the decoders observe, joint the P x W
    their typicality test uses.  In Monte Carlo mode also returns the
    Wilson half-widths; exact mode returns zeros there.
    """
    n = pool.shape[1]
    ny = W.shape[1]
    typ = JointTypicality(joint, n, eps)
    dec_union = np.unique(np.concatenate([d for d in decisions] + [np.zeros(0, np.int64)])).astype(np.int64)
    member = np.zeros((len(decisions), dec_union.size), dtype=bool)
    for j, d in enumerate(decisions):
        member[j, np.searchsorted(dec_union, d)] = True
    dec_x = pool[dec_union]
    if mode == "exact":
        if ny ** n > budget_states:
            raise BudgetError(f"|Y|^n = {ny}^{n} exceeds budget {budget_states}")
        src_union = np.unique(np.concatenate([s for s, _ in senders])).astype(np.int64)
        S = np.zeros((len(senders), src_union.size))
        for i, (idx, wts) in enumerate(senders):
            np.add.at(S[i], np.searchsorted(src_union, idx), wts)
        src_x = pool[src_union]
        acc = np.zeros((len(senders), len(decisions)))
        total = ny ** n
        for s in range(0, total, chunk):
            ys = _sequences_slice(n, ny, s, min(total, s + chunk))
            T = typ.matrix(dec_x, ys).astype(np.float64)
            D = (member.astype(np.float64) @ T) > 0
            L = np.exp(_loglik(W, src_x, ys))
            acc += (S @ L) @ D.T.astype(np.float64)
        return np.clip(acc, 0.0, 1.0), np.zeros_like(acc)
    if mode != "mc":
        raise ValueError(f"unknown mode {mode!r}")
    hits = np.zeros((len(senders), len(decisions)))
    for i, (idx, wts) in enumerate(senders):
        rng = keyed.stream(seed, keyed.EVAL, i)
        done = 0
        while done < trials:
            t = min(chunk * 4, trials - done)
            v = idx[rng.choice(idx.size, size=t, p=wts)] if idx.size > 1 else np.full(t, idx[0])
            ys = sample_output_matrix(W, pool[v], rng)
            T = typ.matrix(dec_x, ys)
            D = (member.astype(np.float32) @ T.astype(np.float32)) > 0
            hits[i] += D.sum(axis=1)
            done += t
    return hits / trials, wilson_halfwidth(hits, trials)


def sample_output_matrix(W, xs, rng):
    cdf = np.cumsum(W, axis=1)
    u = rng.random(xs.shape)
    y = (u[..., None] >= cdf[xs]).sum(axis=-1)
    return np.minimum(y, W.shape[1] - 1).astype(np.uint8)


def _sequences_slice(n, k, start, stop):
    idx = np.arange(start, stop)
    digits = (idx[:, None] // k ** np.arange(n - 1, -1, -1)[None, :]) % k
    return digits.astype(np.uint8)


@dataclass
class ErrorReport:
    missed: np.ndarray                  # per message
    wrong: np.ndarray                   # [m, m'] with nan on the diagonal
    method: str
    trials: int = 0
    missed_hw: np.ndarray = None
    wrong_hw: np.ndarray = None
    messages: np.ndarray = None         # message labels (subsampled runs)
    notes: list = field(default_factory=list)

    @property
    def p_missed(self):
        return float(np.max(self.missed)) if self.missed.size else 0.0

    @property
    def p_wrong(self):
        w = self.wrong[~np.isnan(self.wrong)]
        return float(w.max()) if w.size else 0.0

    @property
    def max_error(self):
        return max(self.p_missed, self.p_wrong)

    def to_dict(self):
        return {"method": self.method, "trials": self.trials,
                "p_missed": self.p_missed, "p_wrong": self.p_wrong,
                "missed": self.missed.tolist(),
                "wrong": [[None if np.isnan(v) else float(v) for v in row] for row in self.wrong],
                "notes": list(self.notes)}


def report_from_acceptance(acc, hw, method, trials=0, messages=None, notes=()):
    """acc[m, m'] = acceptance of decision m' when m is sent."""
    k = acc.shape[0]
    missed = 1.0 - np.diag(acc)
    wrong = acc.copy()
    wrong[np.arange(k), np.arange(k)] = np.nan
    whw = hw.copy()
    whw[np.arange(k), np.arange(k)] = np.nan
    return ErrorReport(missed=missed, wrong=wrong, method=method, trials=trials,
                       missed_hw=np.diag(hw).copy(), wrong_hw=whw,
                       messages=messages, notes=list(notes))


def message_subset(m_count, seed, limit=FULL_PAIR_LIMIT):
    if m_count <= limit:
        return np.arange(m_count), []
    rng = keyed.stream(seed, keyed.EVAL, 1 << 30)
    chosen = np.sort(rng.choice(m_count, size=limit, replace=False))
    return chosen, [f"pairwise errors over a seeded sample of {limit} of {m_count} messages; maxima are lower estimates"]


def error_report_dmc(code, w, mode="exact", trials=100000, seed=0,
                     budget_states=DEFAULT_BUDGET_STATES):
    """Missed and wrong identification probabilities of every message."""
    msgs, notes = message_subset(len(code.index_sets), seed)
    senders = [code.sender_weights(m) for m in msgs]
    decisions = [code.index_sets[m] for m in msgs]
    acc, hw = acceptance(code.pool, senders, decisions, w.W, code.joint, code.eps,
                         mode=mode, trials=trials, seed=seed, budget_states=budget_states)
    return report_from_acceptance(acc, hw, "exact" if mode == "exact" else "monte-carlo",
                                  trials=0 if mode == "exact" else trials,
                                  messages=msgs, notes=notes)


def mixture_report(pool, mixtures, decisions, w, joint, eps, mode="exact", **kw):
    """Report of a general code whose message m sends pool[v] w.p. mixtures[m][v]."""
    senders = []
    for mix in mixtures:
        idx = np.flatnonzero(mix)
        senders.append((idx, mix[idx]))
    acc, hw = acceptance(pool, senders, decisions, w.W, joint, eps, mode=mode, **kw)
    return report_from_acceptance(acc, hw, "exact" if mode == "exact" else "monte-carlo")


# -------------------------------------------------------- G_mu diagnostics

def g_mu_failure_bound(m_count, n, bin_rate, mu):
    a = np.exp(n * (bin_rate - mu))
    return float(m_count * np.exp(-a / 2) + m_count ** 2 * np.exp(-a / 3))


def check_G_mu(code, mu, id_rate=None, pair_budget=1 << 16, seed=0):
    """Evaluate the three G_mu inequalities on the code's bins."""
    prm = code.params
    upper = prm.pool_rate - prm.bin_rate
    if id_rate is None:
        id_rate = prm.id_rate
    if id_rate is not None:
        upper = min(upper, prm.bin_rate - id_rate)
    if not 0 < mu < upper:
        raise ValueError(f"mu={mu} outside (0, {upper})")
    n = prm.n
    target = np.exp(n * prm.bin_rate)
    delta_n = np.exp(-n * mu / 2)
    inter_cap = np.exp(n * (prm.bin_rate - mu / 2) + np.log(2))
    sizes = np.array([b.size for b in code.index_sets])
    too_small = int(np.sum(sizes <= (1 - delta_n) * target))
    too_large = int(np.sum(sizes >= (1 + delta_n) * target))
    k = len(code.index_sets)
    pairs = [(a, b) for a in range(k) for b in range(a + 1, k)]
    note = None
    if len(pairs) > pair_budget:
        rng = keyed.stream(seed, keyed.EVAL, 1 << 31)
        sel = rng.choice(len(pairs), size=pair_budget, replace=False)
        pairs = [pairs[i] for i in np.sort(sel)]
        note = "intersections checked on a seeded pair sample"
    big = 0
    for a, b in pairs:
        inter = np.intersect1d(code.index_sets[a], code.index_sets[b], assume_unique=True).size
        big += inter >= inter_cap
    return {"mu": mu, "delta_n": float(delta_n), "target": float(target),
            "too_small": too_small, "too_large": too_large,
            "big_intersections": int(big), "pairs_checked": len(pairs),
            "in_G": too_small == 0 and too_large == 0 and big == 0,
            "mean_bin_size": float(sizes.mean()) if k else 0.0, "note": note}
