"""Extensions of the broadcast identification code.

* three receivers: one bin family per receiver, V drawn from the triple
  intersection;
* common message: bins keyed by (common, private) pairs on each side;
* one-sided feedback towards Y: a Z-side pool/bin code for the first n uses,
  then a short transmission code carrying a keyed tag of the fed-back Y^n;
* a Monte Carlo check of how well the empirical joint type concentrates
  when inputs are chosen causally from past outputs.

Keys are arranged so that collapsing an extra message axis to a singleton
reproduces the smaller construction with the same seed: three-receiver
side k uses the same stream tags as the two-receiver Y and Z sides, and a
common message m = 0 uses the bare two-receiver keys.
"""
from dataclasses import dataclass, field
from math import ceil

import numpy as np

from . import keyed
from .channel import as_pmf, marginal, marginal_y, marginal_z, sample_joint_output
from .id_bc import BinFamily, intersect_draw_mask, pairs_report
from .id_dmc import DEFAULT_BUDGET_STATES, DEFAULT_POOL_BUDGET, BudgetError, \
    ParamError, Z_WILSON, acceptance, draw_bin, draw_pool, pool_size_for, \
    report_from_acceptance, sample_output_matrix, selection_prob, wilson_halfwidth, \
    _loglik, _sequences_slice
from .info import capacity, entropy, mutual_information
from .typeskit import JointTypicality, all_sequences, joint_pmf

PAIR_LIMIT = 1 << 12
_SIDE_TAGS = (keyed.BINS_Y, keyed.BINS_Z, keyed.BINS_3)


def _eps_room(p, w, r):
    return (mutual_information(p, w) - r) / (2 * entropy(joint_pmf(p, w).ravel()))


def _method(mode):
    return "exact" if mode == "exact" else "monte-carlo"


def _other_tuples(shape, seed, tag, limit=PAIR_LIMIT):
    """All index tuples of `shape` (rows), or a seeded sample of `limit`."""
    total = int(np.prod(shape)) if len(shape) else 1
    if total <= limit:
        flat = np.arange(total)
        notes = []
    else:
        rng = keyed.stream(seed, keyed.EVAL, 1 << 34, tag)
        flat = np.sort(rng.choice(total, size=limit, replace=False))
        notes = [f"average over a seeded sample of {limit} of {total} other-side message tuples"]
    return np.stack(np.unravel_index(flat, shape), axis=1) if len(shape) else flat[:, None], notes


def _point_senders(v):
    return [(np.array([x]), np.array([1.0])) for x in v]


def _mixture(v):
    idx, cnt = np.unique(v, return_counts=True)
    return idx, cnt / cnt.sum()


def _side_report(pool, rows_v, decisions, w, joint, eps, criterion, mode, trials, seed,
                 budget_states, notes):
    """rows_v[m] holds V for every sampled other-side tuple (same order per m)."""
    method = _method(mode)
    t = trials if mode != "exact" else 0
    if criterion == "average":
        acc, hw = acceptance(pool, [_mixture(v) for v in rows_v], decisions, w.W, joint, eps,
                             mode=mode, trials=trials, seed=seed, budget_states=budget_states)
        return report_from_acceptance(acc, hw, method, t, notes=notes)
    k, o = len(rows_v), len(rows_v[0])
    acc, hw = acceptance(pool, _point_senders(np.concatenate(rows_v)), decisions, w.W, joint,
                         eps, mode=mode, trials=trials, seed=seed, budget_states=budget_states)
    return pairs_report(acc.reshape(k, o, -1), hw.reshape(k, o, -1), criterion, method, t, notes)


@dataclass
class MultiReport:
    """One ErrorReport per receiver."""
    sides: dict
    criterion: str

    def row(self):
        out = {}
        for name, rep in self.sides.items():
            out[f"p_{name.lower()}_missed"] = rep.p_missed
            out[f"p_{name.lower()}_wrong"] = rep.p_wrong
        return out

    @property
    def max_error(self):
        return max(self.row().values())


# ======================================================= three receivers

@dataclass(frozen=True)
class Bc3IdParams:
    n: int
    m_counts: tuple
    bin_rates: tuple
    pool_rate: float
    input_pmf: tuple
    eps: float = None
    seed: int = 0

    @property
    def pool_size(self):
        return pool_size_for(self.n, self.pool_rate)

    def p_sel(self, k):
        return selection_prob(self.n, self.pool_rate, self.bin_rates[k])


def validate_bc3(params, bc3):
    p = as_pmf(params.input_pmf)
    ws = [marginal(bc3, k) for k in range(3)]
    mi = [mutual_information(p, w) for w in ws]
    r = params.bin_rates
    reasons = []
    if params.n < 1 or len(params.m_counts) != 3 or min(params.m_counts) < 1 or len(r) != 3:
        return ["bad-size"]
    for k in range(3):
        if not r[k] < mi[k]:
            reasons.append(f"bin-rate-{k + 1}-exceeds-mutual-info")
        if not r[k] < sum(mi) - mi[k]:
            reasons.append(f"bin-rate-{k + 1}-exceeds-others-mutual-info")
        if not r[k] < params.pool_rate:
            reasons.append(f"bin-rate-{k + 1}-exceeds-pool-rate")
    if not 2 * params.pool_rate < sum(r):
        reasons.append("pool-rate-exceeds-half-bin-rate-sum")
    if params.eps is not None:
        room = min(_eps_room(p, w, rk) for w, rk in zip(ws, r))
        if not 0 < params.eps < room:
            reasons.append("eps-too-large")
    return reasons


@dataclass
class Bc3IdCode:
    params: Bc3IdParams
    pool: np.ndarray
    bins: tuple                # three BinFamily objects
    joints: tuple
    eps: float

    @property
    def n(self):
        return self.pool.shape[1]

    def codeword_indices(self, m1, m2, m3):
        m1, m2, m3 = np.broadcast_arrays(*(np.atleast_1d(np.asarray(m, dtype=np.int64))
                                           for m in (m1, m2, m3)))
        u = keyed.keyed_uniform(self.params.seed, keyed.INDEX, m1, m2, m3)
        out = np.empty(m1.size, dtype=np.int64)
        size = self.pool.shape[0]
        for a, b in set(zip(m1.tolist(), m2.tolist())):
            sel = np.flatnonzero((m1 == a) & (m2 == b))
            mask = np.zeros(size, dtype=bool)
            mask[self.bins[0][a]] = True
            keep = np.zeros(size, dtype=bool)
            keep[self.bins[1][b]] = True
            out[sel] = intersect_draw_mask(mask & keep, self.bins[2], m3[sel], u[sel])
        return out


def build_bc3_code(params, bc3, check=True, pool_budget=DEFAULT_POOL_BUDGET):
    if check:
        reasons = validate_bc3(params, bc3)
        if reasons:
            raise ParamError(reasons)
    p = as_pmf(params.input_pmf)
    ws = [marginal(bc3, k) for k in range(3)]
    eps = params.eps
    if eps is None:
        eps = 0.5 * min(_eps_room(p, w, r) for w, r in zip(ws, params.bin_rates))
    size = params.pool_size
    pool = draw_pool(params.seed, params.n, size, p, budget=pool_budget)
    fams = tuple(BinFamily([draw_bin(params.seed, _SIDE_TAGS[k], m, size, params.p_sel(k))
                            for m in range(params.m_counts[k])]) for k in range(3))
    return Bc3IdCode(params=params, pool=pool, bins=fams,
                     joints=tuple(joint_pmf(p, w) for w in ws), eps=float(eps))


def _bc3_rows(code, k):
    counts = code.params.m_counts
    rest = [j for j in range(3) if j != k]
    tuples, notes = _other_tuples(tuple(counts[j] for j in rest), code.params.seed, k)
    rows = []
    for m in range(counts[k]):
        idx = [None] * 3
        idx[k] = np.full(tuples.shape[0], m)
        idx[rest[0]], idx[rest[1]] = tuples[:, 0], tuples[:, 1]
        rows.append(code.codeword_indices(*idx))
    return rows, notes


def evaluate_bc3(code, bc3, mode="exact", criterion="average", trials=100000, seed=0,
                 budget_states=DEFAULT_BUDGET_STATES):
    """Per-receiver reports, averaged (or maximized) over the other two receivers."""
    sides = {}
    for k in range(3):
        rows, notes = _bc3_rows(code, k)
        sides[str(k + 1)] = _side_report(code.pool, rows, list(code.bins[k].bins), marginal(bc3, k),
                                         code.joints[k], code.eps, criterion, mode, trials,
                                         seed + k, budget_states, notes)
    return MultiReport(sides=sides, criterion=criterion)


# ======================================================= common message

@dataclass(frozen=True)
class CmIdParams:
    n: int
    m_count: int               # common messages
    m_y_count: int
    m_z_count: int
    bin_rate_y: float
    bin_rate_z: float
    pool_rate: float
    input_pmf: tuple
    eps: float = None
    seed: int = 0
    rate: float = None         # optional ID rates checked against the bin rates
    rate_y: float = None
    rate_z: float = None

    @property
    def pool_size(self):
        return pool_size_for(self.n, self.pool_rate)

    def p_sel(self, side):
        return selection_prob(self.n, self.pool_rate,
                              self.bin_rate_y if side == "Y" else self.bin_rate_z)


def validate_cm(params, bc):
    p = as_pmf(params.input_pmf)
    wy, wz = marginal_y(bc), marginal_z(bc)
    reasons = []
    if params.n < 1 or min(params.m_count, params.m_y_count, params.m_z_count) < 1:
        return ["bad-size"]
    for side, w, rt, rp in (("y", wy, params.bin_rate_y, params.rate_y),
                            ("z", wz, params.bin_rate_z, params.rate_z)):
        if not rt < mutual_information(p, w):
            reasons.append(f"bin-rate-{side}-exceeds-mutual-info")
        if not rt < params.pool_rate:
            reasons.append(f"bin-rate-{side}-exceeds-pool-rate")
        if params.rate is not None and not params.rate < rt:
            reasons.append(f"common-rate-exceeds-bin-rate-{side}")
        if rp is not None and not rp < rt:
            reasons.append(f"id-rate-{side}-exceeds-bin-rate")
    if not params.pool_rate < params.bin_rate_y + params.bin_rate_z:
        reasons.append("pool-rate-exceeds-bin-rate-sum")
    if params.eps is not None:
        room = min(_eps_room(p, wy, params.bin_rate_y), _eps_room(p, wz, params.bin_rate_z))
        if not 0 < params.eps < room:
            reasons.append("eps-too-large")
    return reasons


def _cm_key(private, common):
    # m = 0 keeps the two-receiver key so |M| = 1 reproduces that code
    return (private,) if common == 0 else (private, common)


@dataclass
class CmIdCode:
    params: CmIdParams
    pool: np.ndarray
    bins_y: list               # bins_y[m] is the BinFamily over m_Y
    bins_z: list
    joint_y: np.ndarray
    joint_z: np.ndarray
    eps: float

    @property
    def n(self):
        return self.pool.shape[1]

    def codeword_indices(self, m, m_y, m_z):
        m, m_y, m_z = np.broadcast_arrays(*(np.atleast_1d(np.asarray(a, dtype=np.int64))
                                            for a in (m, m_y, m_z)))
        u = np.empty(m.size)
        zero = m == 0
        u[zero] = keyed.keyed_uniform(self.params.seed, keyed.INDEX, m_y[zero], m_z[zero])
        u[~zero] = keyed.keyed_uniform(self.params.seed, keyed.INDEX, m_y[~zero], m_z[~zero],
                                       m[~zero])
        out = np.empty(m.size, dtype=np.int64)
        size = self.pool.shape[0]
        for c, a in set(zip(m.tolist(), m_y.tolist())):
            sel = np.flatnonzero((m == c) & (m_y == a))
            mask = np.zeros(size, dtype=bool)
            mask[self.bins_y[c][a]] = True
            out[sel] = intersect_draw_mask(mask, self.bins_z[c], m_z[sel], u[sel])
        return out

    def decisions(self, side):
        """Bins flattened over (m, m_side) in row-major order."""
        fams = self.bins_y if side == "Y" else self.bins_z
        return [b for fam in fams for b in fam.bins]


def build_cm_code(params, bc, check=True, pool_budget=DEFAULT_POOL_BUDGET):
    if check:
        reasons = validate_cm(params, bc)
        if reasons:
            raise ParamError(reasons)
    p = as_pmf(params.input_pmf)
    wy, wz = marginal_y(bc), marginal_z(bc)
    eps = params.eps
    if eps is None:
        eps = 0.5 * min(_eps_room(p, wy, params.bin_rate_y), _eps_room(p, wz, params.bin_rate_z))
    size = params.pool_size
    pool = draw_pool(params.seed, params.n, size, p, budget=pool_budget)
    by = [BinFamily([draw_bin(params.seed, keyed.BINS_Y, _cm_key(a, c), size, params.p_sel("Y"))
                     for a in range(params.m_y_count)]) for c in range(params.m_count)]
    bz = [BinFamily([draw_bin(params.seed, keyed.BINS_Z, _cm_key(b, c), size, params.p_sel("Z"))
                     for b in range(params.m_z_count)]) for c in range(params.m_count)]
    return CmIdCode(params=params, pool=pool, bins_y=by, bins_z=bz, joint_y=joint_pmf(p, wy),
                    joint_z=joint_pmf(p, wz), eps=float(eps))


def _cm_rows(code, side):
    pr = code.params
    own, other = (pr.m_y_count, pr.m_z_count) if side == "Y" else (pr.m_z_count, pr.m_y_count)
    tuples, notes = _other_tuples((other,), pr.seed, 3 if side == "Y" else 4)
    o = tuples[:, 0]
    rows = []
    for c in range(pr.m_count):
        for a in range(own):
            if side == "Y":
                rows.append(code.codeword_indices(c, np.full(o.size, a), o))
            else:
                rows.append(code.codeword_indices(c, o, np.full(o.size, a)))
    return rows, notes


def evaluate_cm(code, bc, mode="exact", criterion="average", trials=100000, seed=0,
                budget_states=DEFAULT_BUDGET_STATES):
    """Reports over flattened (m, m_side) identities, averaged over the other private message."""
    sides = {}
    for i, (side, w, joint) in enumerate((("Y", marginal_y(bc), code.joint_y),
                                         ("Z", marginal_z(bc), code.joint_z))):
        rows, notes = _cm_rows(code, side)
        sides[side] = _side_report(code.pool, rows, code.decisions(side), w, joint, code.eps,
                                   criterion, mode, trials, seed + i, budget_states, notes)
    return MultiReport(sides=sides, criterion=criterion)


# ======================================================= transmission code

@dataclass
class TransmissionCode:
    codebook: np.ndarray       # f: row u is the codeword of message u
    W: np.ndarray
    decoder: str
    joint: np.ndarray
    eps: float
    transition: np.ndarray = None      # T[u, u'] = P(phi(Y^k) = u' | f(u)), when enumerable
    eps_k: float = None
    eps_k_hw: float = 0.0
    eps_k_method: str = None

    @property
    def k(self):
        return self.codebook.shape[1]

    @property
    def size(self):
        return self.codebook.shape[0]

    def decode(self, ys):
        """phi for each row of ys; decoding failures map to message 0."""
        ys = np.atleast_2d(ys)
        out = np.empty(ys.shape[0], dtype=np.int64)
        step = max(1, (1 << 22) // max(1, self.size))
        for s in range(0, ys.shape[0], step):
            yb = ys[s:s + step]
            if self.decoder == "ml":
                ll = _loglik(self.W, self.codebook, yb)
                out[s:s + step] = np.argmax(ll, axis=0)
            else:
                typ = JointTypicality(self.joint, self.k, self.eps).matrix(self.codebook, yb)
                hits = typ.sum(axis=0)
                out[s:s + step] = np.where(hits == 1, np.argmax(typ, axis=0), 0)
        return out


def transmission_eps(code, trials=10000, seed=0, budget_states=1 << 20):
    """(eps_k, half-width, method): exact when Y^k is enumerable, else MC per codeword."""
    ny = code.W.shape[1]
    if ny ** code.k <= budget_states and code.size * ny ** code.k <= 1 << 24:
        ys = all_sequences(code.k, ny)
        lik = np.exp(_loglik(code.W, code.codebook, ys))
        dec = code.decode(ys)
        T = np.zeros((code.size, code.size))
        for u in range(code.size):
            T[:, u] = lik[:, dec == u].sum(axis=1)
        code.transition = T
        return float(np.max(1.0 - np.diag(T))), 0.0, "exact"
    rng = keyed.stream(seed, keyed.EVAL, 1 << 35)
    errs = np.zeros(code.size)
    for u in range(code.size):
        ys = sample_output_matrix(code.W, np.repeat(code.codebook[u][None, :], trials, axis=0), rng)
        errs[u] = np.sum(code.decode(ys) != u)
    worst = int(np.argmax(errs))
    return float(errs[worst] / trials), float(wilson_halfwidth(errs[worst], trials)), "monte-carlo"


def build_transmission_code(w_y, k, rate, seed, decoder="ml", expurgate=True, input_pmf=None,
                            eps=None, trials=10000, budget_states=1 << 20):
    """Random i.i.d. codebook of round(e^{k rate}) words with a pluggable decoder.

    decoder "ml": maximum likelihood, ties to the lowest index;
    decoder "typicality": the unique jointly eps-typical codeword, failure -> 0.
    With expurgate, twice as many words are drawn and the better half (by
    per-word error under the full book) is kept, the usual route from
    average to maximum error.
    """
    p_star, c = capacity(w_y)
    if not 0 < rate < c:
        raise ParamError(["transmission-rate-not-below-capacity"])
    if decoder not in ("typicality", "ml"):
        raise ValueError(f"unknown decoder {decoder!r}")
    if k < 1:
        raise ValueError("k must be positive")
    p = as_pmf(p_star if input_pmf is None else input_pmf).probs
    size = max(1, int(np.floor(np.exp(k * rate) + 0.5)))
    rng = keyed.stream(seed, keyed.TCODE)
    cdf = np.cumsum(p)
    draw = 2 * size if expurgate else size
    x = (rng.random((draw, k))[..., None] >= cdf).sum(axis=-1)
    book = np.minimum(x, p.size - 1).astype(np.uint8)
    joint = joint_pmf(p, w_y)
    if eps is None:
        eps = 0.5 * (mutual_information(p, w_y) - rate) / entropy(joint.ravel())
    code = TransmissionCode(codebook=book, W=np.asarray(w_y.W), decoder=decoder, joint=joint,
                            eps=float(eps))
    if expurgate:
        errs = _per_word_errors(code, trials, seed, budget_states)
        keep = np.sort(np.argsort(errs, kind="stable")[:size])
        code.codebook = book[keep]
        code.transition = None
    code.eps_k, code.eps_k_hw, code.eps_k_method = transmission_eps(code, trials, seed, budget_states)
    return code


def _per_word_errors(code, trials, seed, budget_states):
    transmission_eps(code, trials, seed, budget_states)
    if code.transition is not None:
        return 1.0 - np.diag(code.transition)
    rng = keyed.stream(seed, keyed.EVAL, 1 << 38)
    out = np.zeros(code.size)
    for u in range(code.size):
        ys = sample_output_matrix(code.W, np.repeat(code.codebook[u][None, :], trials, axis=0), rng)
        out[u] = np.mean(code.decode(ys) != u)
    return out


# ======================================================= one-sided feedback

@dataclass(frozen=True)
class FbIdParams:
    n: int
    m_y_count: int
    m_z_count: int
    bin_rate_z: float
    pool_rate: float
    trans_rate: float          # rate of the tail transmission code
    input_pmf: tuple
    eps: float = None
    seed: int = 0
    decoder: str = "ml"
    rate_y: float = None
    rate_z: float = None

    @property
    def k(self):
        return int(ceil(np.sqrt(self.n)))

    @property
    def pool_size(self):
        return pool_size_for(self.n, self.pool_rate)

    @property
    def p_sel(self):
        return selection_prob(self.n, self.pool_rate, self.bin_rate_z)


def validate_fb(params, bc):
    p = as_pmf(params.input_pmf)
    wy, wz = marginal_y(bc), marginal_z(bc)
    if params.n < 1 or min(params.m_y_count, params.m_z_count) < 1:
        return ["bad-size"]
    reasons = []
    if not params.bin_rate_z < mutual_information(p, wz):
        reasons.append("bin-rate-z-exceeds-mutual-info")
    if not mutual_information(p, wy) < params.pool_rate:
        reasons.append("pool-rate-below-mutual-info-y")
    if not params.bin_rate_z < params.pool_rate:
        reasons.append("bin-rate-z-exceeds-pool-rate")
    if not 0 < params.trans_rate < capacity(wy)[1]:
        reasons.append("transmission-rate-not-below-capacity")
    if params.rate_z is not None and not params.rate_z < params.bin_rate_z:
        reasons.append("id-rate-z-exceeds-bin-rate")
    if params.eps is not None:
        bad = not 0 < params.eps < _eps_room(p, wz, params.bin_rate_z)
        if params.rate_y is not None:
            hy = entropy(joint_pmf(p, wy).ravel())
            bad |= not 3 * params.eps * hy < entropy(p @ wy.W) - params.rate_y
        if bad:
            reasons.append("eps-too-large")
    return reasons


@dataclass
class FbIdCode:
    params: FbIdParams
    pool: np.ndarray
    bins_z: BinFamily
    joint_z: np.ndarray
    eps: float
    tcode: TransmissionCode
    v_star: int = 0

    @property
    def n(self):
        return self.pool.shape[1]

    def codeword_indices(self, m_y, m_z):
        """V uniform over bin(m_Z), or v_star when that bin is empty."""
        m_y, m_z = np.broadcast_arrays(np.atleast_1d(np.asarray(m_y, dtype=np.int64)),
                                       np.atleast_1d(np.asarray(m_z, dtype=np.int64)))
        u = keyed.keyed_uniform(self.params.seed, keyed.INDEX, m_y, m_z)
        b = self.bins_z
        starts = np.concatenate([[0], np.cumsum(b.sizes)[:-1]]).astype(np.int64)
        v = keyed.draw_from_lists(u, b.flat, starts[m_z], b.sizes[m_z]) if b.flat.size else \
            np.full(m_y.size, self.v_star)
        return np.where(b.sizes[m_z] > 0, v, self.v_star)

    def tags(self, ys, m_y):
        """Phi(y^n, m_Y) for each row of ys and each m_Y: shape (rows, len(m_y))."""
        h = keyed.hash_rows(ys)
        m_y = np.atleast_1d(np.asarray(m_y, dtype=np.int64))
        u = keyed.keyed_uniform(self.params.seed, keyed.TAGS, h[:, None], m_y[None, :])
        return np.minimum((u * self.tcode.size).astype(np.int64), self.tcode.size - 1)


def build_fb_code(params, bc, check=True, pool_budget=DEFAULT_POOL_BUDGET):
    if check:
        reasons = validate_fb(params, bc)
        if reasons:
            raise ParamError(reasons)
    p = as_pmf(params.input_pmf)
    wy, wz = marginal_y(bc), marginal_z(bc)
    eps = params.eps
    if eps is None:
        eps = 0.5 * _eps_room(p, wz, params.bin_rate_z)
    size = params.pool_size
    pool = draw_pool(params.seed, params.n, size, p, budget=pool_budget)
    bz = BinFamily([draw_bin(params.seed, keyed.BINS_Z, m, size, params.p_sel)
                    for m in range(params.m_z_count)])
    tcode = build_transmission_code(wy, params.k, params.trans_rate, params.seed,
                                    decoder=params.decoder)
    return FbIdCode(params=params, pool=pool, bins_z=bz, joint_z=joint_pmf(p, wz),
                    eps=float(eps), tcode=tcode)


@dataclass
class Transcript:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    tag: int


def encode_fb(code, m_y, m_z, rng, bc):
    """Send pool[V] for n uses, read Y^n back, then send f(Phi(Y^n, m_Y))."""
    x_head = code.pool[code.codeword_indices(m_y, m_z)[0]]
    y_head, z_head = sample_joint_output(bc.T, x_head, rng)
    tag = int(code.tags(y_head[None, :].astype(np.uint8), m_y)[0, 0])
    x_tail = code.tcode.codebook[tag]
    y_tail, z_tail = sample_joint_output(bc.T, x_tail, rng)
    return Transcript(x=np.concatenate([x_head, x_tail]).astype(np.uint8),
                      y=np.concatenate([y_head, y_tail]).astype(np.uint8),
                      z=np.concatenate([z_head, z_tail]).astype(np.uint8), tag=tag)


def fb_accepts_y(code, m_prime, y):
    y = np.asarray(y, dtype=np.uint8)
    n = code.n
    tag = code.tags(y[None, :n], m_prime)[0, 0]
    return bool(code.tcode.decode(y[None, n:])[0] == tag)


def fb_accepts_z(code, m_prime, z):
    b = code.bins_z[m_prime]
    if b.size == 0:
        return False
    typ = JointTypicality(code.joint_z, code.n, code.eps)
    return bool(typ.matrix(code.pool[b], np.asarray(z, dtype=np.uint8)[None, :code.n]).any())


def _fb_y_acceptance(code, wy, rows_v, mode, trials, seed, budget_states, chunk=1 << 14):
    """acc[r, m'] for rows (m_Y, V choices averaged uniformly) on the Y side."""
    m_count = code.params.m_y_count
    ny, n = wy.ny, code.n
    tc = code.tcode
    T = tc.transition
    all_m = np.arange(m_count)
    acc = np.zeros((len(rows_v), m_count))
    if mode == "exact":
        if ny ** n > budget_states:
            raise BudgetError(f"|Y|^n = {ny}^{n} exceeds budget {budget_states}")
        if T is None:
            raise BudgetError("tail transition matrix not enumerable; use mode='mc'")
        total = ny ** n
        for s in range(0, total, chunk):
            ys = _sequences_slice(n, ny, s, min(total, s + chunk))
            tags = code.tags(ys, all_m)
            for r, (m, v) in enumerate(rows_v):
                idx, wts = _mixture(v)
                lik = wts @ np.exp(_loglik(wy.W, code.pool[idx], ys))
                acc[r] += lik @ T[tags[:, m][:, None], tags]
        return np.clip(acc, 0.0, 1.0), np.zeros_like(acc)
    if mode != "mc":
        raise ValueError(f"unknown mode {mode!r}")
    sq = np.zeros_like(acc)
    for r, (m, v) in enumerate(rows_v):
        rng = keyed.stream(seed, keyed.EVAL, 1 << 36, r)
        done = 0
        while done < trials:
            t = min(chunk, trials - done)
            pick = v[rng.integers(0, len(v), size=t)]
            ys = sample_output_matrix(wy.W, code.pool[pick], rng)
            tags = code.tags(ys, all_m)
            if T is not None:
                val = T[tags[:, m][:, None], tags]
            else:
                tails = sample_output_matrix(wy.W, tc.codebook[tags[:, m]], rng)
                val = (tc.decode(tails)[:, None] == tags).astype(float)
            acc[r] += val.sum(axis=0)
            sq[r] += (val ** 2).sum(axis=0)
            done += t
    mean = acc / trials
    var = np.maximum(sq / trials - mean ** 2, 0.0)
    # never narrower than the Wilson width of a 0/1 estimate with the same mean
    hw = np.maximum(Z_WILSON * np.sqrt(var / trials), 0.0)
    hw = np.where(var == 0, wilson_halfwidth(np.round(mean * trials), trials), hw)
    return mean, hw


def _fb_rows(code, side):
    pr = code.params
    own, other = (pr.m_y_count, pr.m_z_count) if side == "Y" else (pr.m_z_count, pr.m_y_count)
    tuples, notes = _other_tuples((other,), pr.seed, 5 if side == "Y" else 6)
    o = tuples[:, 0]
    rows = []
    for a in range(own):
        mine = np.full(o.size, a)
        rows.append(code.codeword_indices(mine, o) if side == "Y" else code.codeword_indices(o, mine))
    return rows, notes


def evaluate_fb(code, bc, mode="mc", criterion="average", trials=100000, seed=0,
                budget_states=DEFAULT_BUDGET_STATES):
    """Y and Z reports of the feedback scheme."""
    wy, wz = marginal_y(bc), marginal_z(bc)
    rows_z, notes_z = _fb_rows(code, "Z")
    z = _side_report(code.pool, rows_z, list(code.bins_z.bins), wz, code.joint_z, code.eps,
                     criterion, mode, trials, seed + 1, budget_states, notes_z)
    rows_y, notes_y = _fb_rows(code, "Y")
    method = _method(mode)
    t = trials if mode != "exact" else 0
    if criterion == "average":
        acc, hw = _fb_y_acceptance(code, wy, list(enumerate(rows_y)), mode, trials, seed,
                                   budget_states)
        y = report_from_acceptance(acc, hw, method, t, notes=notes_y)
    else:
        o = len(rows_y[0])
        flat = [(m, np.array([v])) for m, row in enumerate(rows_y) for v in row]
        acc, hw = _fb_y_acceptance(code, wy, flat, mode, trials, seed, budget_states)
        k = code.params.m_y_count
        y = pairs_report(acc.reshape(k, o, k), hw.reshape(k, o, k), criterion, method, t, notes_y)
    return MultiReport(sides={"Y": y, "Z": z}, criterion=criterion)


def fb_index_distribution_diag(code, m_z):
    """(P_V, P~_V, tv): empirical law of V over m_Y against uniform on bin(m_Z).

    Each V_{m_Y, m_Z} is itself uniform over bin(m_Z) by construction; the
    empirical average over finitely many m_Y is not, hence a nonzero tv.
    """
    size = code.pool.shape[0]
    m_y = np.arange(code.params.m_y_count)
    v = code.codeword_indices(m_y, np.full(m_y.size, m_z))
    p_v = np.bincount(v, minlength=size) / m_y.size
    p_t = np.zeros(size)
    b = code.bins_z[m_z]
    if b.size:
        p_t[b] = 1.0 / b.size
    else:
        p_t[code.v_star] = 1.0
    return p_v, p_t, 0.5 * float(np.abs(p_v - p_t).sum())


def pool_output_tv(pool, w, p):
    """tv between the output law of a uniformly chosen pool word and (PW)^n."""
    pool = np.atleast_2d(pool)
    n = pool.shape[1]
    ys = all_sequences(n, w.ny)
    law = np.zeros(ys.shape[0])
    for s in range(0, pool.shape[0], 256):
        law += np.exp(_loglik(w.W, pool[s:s + 256], ys)).sum(axis=0)
    law /= pool.shape[0]
    q = as_pmf(p).probs @ w.W
    prod = np.prod(q[ys], axis=1)
    return 0.5 * float(np.abs(law - prod).sum())


# ======================================================= feedback type check

@dataclass
class EncoderFamily:
    """Causal input laws: probs(i, x_past, y_past, msg) -> (trials, |X|)."""
    name: str
    probs: object
    m_count: int = 1


def memoryless_family(p):
    p = as_pmf(p).probs

    def probs(i, xs, ys, msg):
        return np.broadcast_to(p, (msg.size, p.size))
    return EncoderFamily("memoryless", probs)


def switching_family(p0, p1):
    """Use p1 after a 1 was observed at the previous output, p0 otherwise."""
    p0, p1 = as_pmf(p0).probs, as_pmf(p1).probs

    def probs(i, xs, ys, msg):
        if i == 0:
            return np.broadcast_to(p0, (msg.size, p0.size))
        return np.where((ys[:, i - 1] == 1)[:, None], p1, p0)
    return EncoderFamily("switching", probs)


def message_dependent_family(pmfs):
    """Message m uses pmfs[m], swapped with the next one when the past output count is odd."""
    table = np.array([as_pmf(q).probs for q in pmfs])
    k = table.shape[0]

    def probs(i, xs, ys, msg):
        odd = (ys[:, :i].sum(axis=1) % 2).astype(np.int64) if i else np.zeros(msg.size, np.int64)
        return table[(msg + odd) % k]
    return EncoderFamily("message-dependent", probs, m_count=k)


@dataclass
class ConcentrationResult:
    frequency: float
    bound: float
    slack: float
    trials: int
    passed: bool
    family: str = ""
    notes: list = field(default_factory=list)

    def to_dict(self):
        return dict(family=self.family, frequency=self.frequency, bound=self.bound,
                    slack=self.slack, trials=self.trials, passed=self.passed)


def fb_type_concentration_check(encoder_family, w, n, nu, trials, seed=0):
    """Frequency of |P_{XY}(x,y) - Pbar(x) W(y|x)| >= sqrt(W(y|x)) nu for some (x, y).

    Pbar(x) is the time average of the causal input laws.  Passes iff the
    frequency is at most |X||Y|/(n nu^2) plus three binomial standard errors.
    """
    W = np.asarray(w.W)
    nx, ny = W.shape
    rng = keyed.stream(seed, keyed.EVAL, 1 << 37)
    msg = rng.integers(0, encoder_family.m_count, size=trials)
    xs = np.zeros((trials, n), dtype=np.uint8)
    ys = np.zeros((trials, n), dtype=np.uint8)
    pbar = np.zeros((trials, nx))
    cdf_w = np.cumsum(W, axis=1)
    for i in range(n):
        pr = np.asarray(encoder_family.probs(i, xs, ys, msg), dtype=float)
        pbar += pr
        u = rng.random(trials)
        x = np.minimum((u[:, None] >= np.cumsum(pr, axis=1)).sum(axis=1), nx - 1)
        u = rng.random(trials)
        y = np.minimum((u[:, None] >= cdf_w[x]).sum(axis=1), ny - 1)
        xs[:, i], ys[:, i] = x, y
    pbar /= n
    joint = np.zeros((trials, nx, ny))
    np.add.at(joint, (np.repeat(np.arange(trials), n), xs.ravel(), ys.ravel()), 1.0 / n)
    dev = np.abs(joint - pbar[:, :, None] * W[None]) >= np.sqrt(W)[None] * nu
    freq = float(dev.any(axis=(1, 2)).mean())
    bound = nx * ny / (n * nu * nu)
    b = min(bound, 1.0)
    slack = 3 * np.sqrt(b * (1 - b) / trials)
    return ConcentrationResult(frequency=freq, bound=float(bound), slack=float(slack),
                               trials=int(trials), passed=bool(freq <= bound + slack),
                               family=encoder_family.name)
