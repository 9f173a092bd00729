"""Two-receiver broadcast identification code with a deterministic encoder.

Message pair (m_Y, m_Z) is sent as pool[V] where V is uniform over
bin_Y(m_Y) & bin_Z(m_Z) when that is nonempty and uniform over the whole pool
otherwise.  V is never tabulated: it is recomputed from a keyed hash of
(seed, m_Y, m_Z).
"""
from dataclasses import dataclass

import numpy as np

from . import keyed
from .channel import as_pmf, marginal_y, marginal_z
from .id_dmc import DEFAULT_BUDGET_STATES, ErrorReport, ParamError, acceptance, \
    draw_bin, draw_pool, report_from_acceptance
from .info import entropy, mutual_information
from .typeskit import JointTypicality, all_sequences, default_eps, joint_pmf

FULL_AVERAGE_LIMIT = 4096
TV_FULL_LIMIT = 1 << 20


@dataclass(frozen=True)
class BcIdParams:
    n: int
    m_y_count: int
    m_z_count: int
    bin_rate_y: float
    bin_rate_z: float
    pool_rate: float
    input_pmf: tuple
    eps: float = None
    seed: int = 0

    @property
    def pool_size(self):
        return max(1, int(np.floor(np.exp(self.n * self.pool_rate) + 0.5)))

    def p_sel(self, side):
        r = self.bin_rate_y if side == "Y" else self.bin_rate_z
        return float(min(1.0, np.exp(-self.n * (self.pool_rate - r))))


def _eps_room(p, w, r):
    return (mutual_information(p, w) - r) / (2 * entropy(joint_pmf(p, w).ravel()))


def validate_bc(params, bc):
    p = as_pmf(params.input_pmf)
    wy, wz = marginal_y(bc), marginal_z(bc)
    reasons = []
    if not params.bin_rate_y < mutual_information(p, wy):
        reasons.append("bin-rate-y-exceeds-mutual-info")
    if not params.bin_rate_z < mutual_information(p, wz):
        reasons.append("bin-rate-z-exceeds-mutual-info")
    if not params.bin_rate_y < params.pool_rate:
        reasons.append("bin-rate-y-exceeds-pool-rate")
    if not params.bin_rate_z < params.pool_rate:
        reasons.append("bin-rate-z-exceeds-pool-rate")
    if not params.pool_rate < params.bin_rate_y + params.bin_rate_z:
        reasons.append("pool-rate-exceeds-bin-rate-sum")
    if params.eps is not None:
        room = min(_eps_room(p, wy, params.bin_rate_y), _eps_room(p, wz, params.bin_rate_z))
        if not 0 < params.eps < room:
            reasons.append("eps-too-large")
    return reasons


def shared_default_eps(p, ws, rates):
    return min(default_eps(p, w, r) for w, r in zip(ws, rates))


class BinFamily:
    """Index sets of one side stored flat for vectorized intersections."""

    def __init__(self, bins):
        self.bins = bins
        self.sizes = np.array([b.size for b in bins], dtype=np.int64)
        self.flat = np.concatenate(bins + [np.zeros(0, np.int64)]).astype(np.int64)
        self.owner = np.repeat(np.arange(len(bins)), self.sizes)

    def __len__(self):
        return len(self.bins)

    def __getitem__(self, m):
        return self.bins[m]


def intersect_draw(pool_size, fixed_bin, family, others, u):
    """V for one fixed bin against family[others], one uniform per other.

    Uniform over the intersection when nonempty, else over the pool.
    """
    mask = np.zeros(pool_size, dtype=bool)
    mask[fixed_bin] = True
    return intersect_draw_mask(mask, family, others, u)


def intersect_draw_mask(mask, family, others, u):
    """As intersect_draw with the fixed set given as a boolean pool mask."""
    pool_size = mask.size
    others = np.asarray(others, dtype=np.int64)
    if family.flat.size == 0:
        return np.minimum((u * pool_size).astype(np.int64), pool_size - 1)
    pos = np.full(len(family), -1, dtype=np.int64)
    pos[others] = np.arange(others.size)
    keep = mask[family.flat] & (pos[family.owner] >= 0)
    inter = family.flat[keep]
    who = pos[family.owner[keep]]
    counts = np.bincount(who, minlength=others.size)
    order = np.argsort(who, kind="stable")
    inter = inter[order]
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    v = np.minimum((u * pool_size).astype(np.int64), pool_size - 1)
    nz = counts > 0
    off = np.minimum((u[nz] * counts[nz]).astype(np.int64), counts[nz] - 1)
    v[nz] = inter[starts[nz] + off]
    return v


@dataclass
class BcIdCode:
    params: BcIdParams
    pool: np.ndarray
    bins_y: BinFamily
    bins_z: BinFamily
    joint_y: np.ndarray
    joint_z: np.ndarray
    eps: float

    @property
    def n(self):
        return self.pool.shape[1]

    def codeword_indices(self, m_y, m_z):
        """V for arrays of message pairs."""
        m_y = np.atleast_1d(np.asarray(m_y, dtype=np.int64))
        m_z = np.atleast_1d(np.asarray(m_z, dtype=np.int64))
        m_y, m_z = np.broadcast_arrays(m_y, m_z)
        out = np.empty(m_y.size, dtype=np.int64)
        u = keyed.keyed_uniform(self.params.seed, keyed.INDEX, m_y, m_z)
        for a in np.unique(m_y):
            sel = np.flatnonzero(m_y == a)
            out[sel] = intersect_draw(self.pool.shape[0], self.bins_y[a], self.bins_z,
                                      m_z[sel], u[sel])
        return out

    def side(self, side):
        if side == "Y":
            return self.bins_y, self.joint_y
        if side == "Z":
            return self.bins_z, self.joint_z
        raise ValueError("side must be 'Y' or 'Z'")


def build_bc_code(params, bc, check=True):
    if check:
        reasons = validate_bc(params, bc)
        if reasons:
            raise ParamError(reasons)
    p = as_pmf(params.input_pmf)
    wy, wz = marginal_y(bc), marginal_z(bc)
    eps = params.eps
    if eps is None:
        eps = shared_default_eps(p, [wy, wz], [params.bin_rate_y, params.bin_rate_z])
    size = params.pool_size
    pool = draw_pool(params.seed, params.n, size, p)
    by = [draw_bin(params.seed, keyed.BINS_Y, m, size, params.p_sel("Y")) for m in range(params.m_y_count)]
    bz = [draw_bin(params.seed, keyed.BINS_Z, m, size, params.p_sel("Z")) for m in range(params.m_z_count)]
    return BcIdCode(params=params, pool=pool, bins_y=BinFamily(by), bins_z=BinFamily(bz),
                    joint_y=joint_pmf(p, wy), joint_z=joint_pmf(p, wz), eps=float(eps))


def encode_bc(code, m_y, m_z):
    return code.pool[code.codeword_indices(m_y, m_z)[0]].copy()


def decoder_accepts(code, side, m_prime, observed):
    bins, joint = code.side(side)
    b = bins[m_prime]
    if b.size == 0:
        return False
    typ = JointTypicality(joint, code.n, code.eps)
    return bool(typ.matrix(code.pool[b], np.asarray(observed)[None, :]).any())


# ------------------------------------------------------------ evaluation

@dataclass
class BcReport:
    y: ErrorReport
    z: ErrorReport
    criterion: str

    def row(self):
        return {"p_y_missed": self.y.p_missed, "p_y_wrong": self.y.p_wrong,
                "p_z_missed": self.z.p_missed, "p_z_wrong": self.z.p_wrong}

    @property
    def max_error(self):
        return max(self.row().values())


def _other_messages(count, seed, side_tag):
    if count <= FULL_AVERAGE_LIMIT:
        return np.arange(count), []
    rng = keyed.stream(seed, keyed.EVAL, 1 << 32, side_tag)
    sel = np.sort(rng.choice(count, size=FULL_AVERAGE_LIMIT, replace=False))
    return sel, [f"average over a seeded sample of {FULL_AVERAGE_LIMIT} of {count} other-side messages"]


def pair_acceptance(code, w, side, mode="exact", trials=100000, seed=0,
                    budget_states=DEFAULT_BUDGET_STATES, others=None):
    """acc[m, o, m'] for the side's decoders, o ranging over other-side messages."""
    bins, joint = code.side(side)
    k = len(bins)
    other_count = code.params.m_z_count if side == "Y" else code.params.m_y_count
    if others is None:
        others, _ = _other_messages(other_count, code.params.seed, 0 if side == "Y" else 1)
    mm, oo = np.meshgrid(np.arange(k), others, indexing="ij")
    if side == "Y":
        v = code.codeword_indices(mm.ravel(), oo.ravel())
    else:
        v = code.codeword_indices(oo.ravel(), mm.ravel())
    senders = [(np.array([vi]), np.array([1.0])) for vi in v]
    acc, hw = acceptance(code.pool, senders, list(bins.bins), w.W, joint, code.eps,
                         mode=mode, trials=trials, seed=seed, budget_states=budget_states)
    return acc.reshape(k, len(others), k), hw.reshape(k, len(others), k)


def mixture_senders(code, side, others):
    """Q_m = average over the other side of point masses at V."""
    bins, _ = code.side(side)
    out = []
    for m in range(len(bins)):
        if side == "Y":
            v = code.codeword_indices(np.full(len(others), m), others)
        else:
            v = code.codeword_indices(others, np.full(len(others), m))
        idx, cnt = np.unique(v, return_counts=True)
        out.append((idx, cnt / cnt.sum()))
    return out


def _side_report(code, w, side, criterion, mode, trials, seed, budget_states):
    bins, joint = code.side(side)
    other_count = code.params.m_z_count if side == "Y" else code.params.m_y_count
    others, notes = _other_messages(other_count, code.params.seed, 0 if side == "Y" else 1)
    method = "exact" if mode == "exact" else "monte-carlo"
    if criterion == "average" and mode != "exact":
        senders = mixture_senders(code, side, others)
        acc, hw = acceptance(code.pool, senders, list(bins.bins), w.W, joint, code.eps,
                             mode=mode, trials=trials, seed=seed, budget_states=budget_states)
        return report_from_acceptance(acc, hw, method, trials, notes=notes)
    acc, hw = pair_acceptance(code, w, side, mode, trials, seed, budget_states, others)
    return pairs_report(acc, hw, criterion, method, trials if mode != "exact" else 0, notes)


def pairs_report(acc, hw, criterion, method, trials=0, notes=()):
    """ErrorReport from acc[m, o, m'] under the average or maximum criterion."""
    k = acc.shape[0]
    diag = np.arange(k)
    if criterion == "average":
        a = acc.mean(axis=1)
        h = np.sqrt((hw ** 2).mean(axis=1))
        return report_from_acceptance(a, h, method, trials, notes=notes)
    if criterion != "maximum":
        raise ValueError(f"unknown criterion {criterion!r}")
    miss = 1.0 - acc[diag, :, diag]                 # [m, o]
    wrong = acc.copy()
    wrong[diag, :, diag] = -np.inf
    rep = ErrorReport(missed=miss.max(axis=1), wrong=wrong.max(axis=1), method=method,
                      trials=trials, notes=list(notes))
    rep.wrong[diag, diag] = np.nan
    rep.missed_hw = hw[diag, :, diag].max(axis=1)
    rep.wrong_hw = hw.max(axis=1)
    return rep


def avg_error_report_bc(code, bc, mode="exact", trials=100000, seed=0,
                        budget_states=DEFAULT_BUDGET_STATES):
    """Errors averaged over the other receiver's uniform message."""
    wy, wz = marginal_y(bc), marginal_z(bc)
    return BcReport(y=_side_report(code, wy, "Y", "average", mode, trials, seed, budget_states),
                    z=_side_report(code, wz, "Z", "average", mode, trials, seed + 1, budget_states),
                    criterion="average")


def max_error_report_bc(code, bc, mode="exact", trials=100000, seed=0,
                        budget_states=DEFAULT_BUDGET_STATES):
    """Errors maximized over the other receiver's message."""
    wy, wz = marginal_y(bc), marginal_z(bc)
    return BcReport(y=_side_report(code, wy, "Y", "maximum", mode, trials, seed, budget_states),
                    z=_side_report(code, wz, "Z", "maximum", mode, trials, seed + 1, budget_states),
                    criterion="maximum")


# ------------------------------------------------------------ diagnostics

def index_distribution_diag(code, side, m, limit=TV_FULL_LIMIT):
    """(P_V, P~_V, tv) for message m of `side` over the pool index set."""
    bins, _ = code.side(side)
    size = code.pool.shape[0]
    other_count = code.params.m_z_count if side == "Y" else code.params.m_y_count
    if other_count <= limit:
        others = np.arange(other_count)
    else:
        rng = keyed.stream(code.params.seed, keyed.EVAL, 1 << 33)
        others = rng.choice(other_count, size=limit, replace=False)
    mine = np.full(others.size, m)
    v = code.codeword_indices(mine, others) if side == "Y" else code.codeword_indices(others, mine)
    p_v = np.bincount(v, minlength=size) / others.size
    p_t = np.zeros(size)
    b = bins[m]
    if b.size:
        p_t[b] = 1.0 / b.size
    else:
        p_t[0] = 1.0
    return p_v, p_t, 0.5 * float(np.abs(p_v - p_t).sum())


def output_tv_diag(code, bc, side, m):
    """TV between the output laws of Q_m and of uniform-on-bin, by enumeration."""
    p_v, p_t, tv_idx = index_distribution_diag(code, side, m)
    w = marginal_y(bc) if side == "Y" else marginal_z(bc)
    ys = all_sequences(code.n, w.ny)
    used = np.flatnonzero((p_v > 0) | (p_t > 0))
    lik = np.array([np.prod(w.W[code.pool[v][None, :], ys], axis=1) for v in used])
    out_v = p_v[used] @ lik
    out_t = p_t[used] @ lik
    return 0.5 * float(np.abs(out_v - out_t).sum()), tv_idx
