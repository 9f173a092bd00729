"""Entropy, mutual information, capacity and capacity-region membership.

All quantities are in nats.  Region membership maximizes the smallest
constraint slack min_j (c_j(P) - r_j) over the input simplex; every c_j used
here is concave in P, so any local maximizer is global.
"""
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import minimize

from .channel import Bc2, Bc3, Dmc, Pmf, as_probs, conditional_z_given_xy, marginal, \
    marginal_y, marginal_z

MEMBERSHIP_TOL = 1e-6
POSITIVE_CAPACITY = 1e-9
_TINY = 1e-300


def bits(nats):
    return nats / np.log(2)


def _xlogx(p):
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    np.multiply(p, np.log(p, where=p > 0, out=np.zeros_like(p)), out=out, where=p > 0)
    return out


def entropy(p):
    """H(p) = -sum p ln p with 0 ln 0 = 0."""
    return float(-_xlogx(as_probs(p)).sum())


def _matrix(w):
    return w.W if isinstance(w, Dmc) else np.asarray(w, dtype=float)


def output_entropy(p, w):
    return entropy(as_probs(p) @ _matrix(w))


def mutual_information(p, w):
    """I(P, W) = H(PW) - H(W|P)."""
    p = as_probs(p)
    W = _matrix(w)
    if p.shape[0] != W.shape[0]:
        raise ValueError(f"input pmf has {p.shape[0]} symbols, channel has {W.shape[0]} inputs")
    cond = -_xlogx(W).sum(axis=1)
    return max(0.0, entropy(p @ W) - float(p @ cond))


def _divergences(W, q):
    """D(W(.|x) || q) for every x, with 0 ln 0 = 0."""
    ratio = np.where(W > 0, W / np.maximum(q, _TINY)[None, :], 1.0)
    return (W * np.log(ratio)).sum(axis=1)


class CapacityNotConverged(RuntimeError):
    def __init__(self, p, lower, upper):
        super().__init__(f"Blahut-Arimoto gap {upper - lower:.3g} after max_iter")
        self.p, self.lower, self.upper = p, lower, upper


def capacity(w, tol=1e-9, max_iter=100000):
    """Blahut-Arimoto.  Returns (P*, C) with max_x D(W_x||P*W) - I(P*,W) <= tol."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    W = _matrix(w)
    p = np.full(W.shape[0], 1.0 / W.shape[0])
    best = (p, -np.inf, np.inf)
    for _ in range(int(max_iter)):
        d = _divergences(W, p @ W)
        lower = float(p @ d)
        upper = float(d.max())
        if upper - lower < best[2] - best[1]:
            best = (p, lower, upper)
        if upper - lower <= tol:
            return Pmf(p / p.sum()), lower
        p = p * np.exp(d - upper)
        p /= p.sum()
    raise CapacityNotConverged(Pmf(best[0] / best[0].sum()), best[1], best[2])


def has_positive_capacity(w):
    return capacity(w)[1] > POSITIVE_CAPACITY


# ------------------------------------------------------------ concave terms

class _Term:
    """A concave function of P with its gradient."""

    def __init__(self, kind, W, A=None, scale=1.0):
        self.kind, self.W, self.A, self.scale = kind, W, A, scale
        if kind == "mi":
            self.cond = -_xlogx(W).sum(axis=1)

    def __call__(self, p):
        r = p if self.A is None else p @ self.A
        q = r @ self.W
        if self.kind == "mi":
            d = _divergences(self.W, q)
            val, g = float(r @ d), d - 1.0
        else:
            lq = np.log(np.maximum(q, _TINY))
            val = float(-(q * lq).sum())
            g = -(self.W @ (lq + 1.0))
        if self.A is not None:
            g = self.A @ g
        return self.scale * val, self.scale * g


def _lifted_input(bc):
    """Map p(x) -> p(x) W_Y(y|x) on X x Y, plus W~_Z rows on the pairs."""
    wy = marginal_y(bc).W
    nx, ny = wy.shape
    A = np.zeros((nx, nx * ny))
    for x in range(nx):
        A[x, x * ny:(x + 1) * ny] = wy[x]
    cond, defined = conditional_z_given_xy(bc)
    rows = cond.reshape(nx * ny, -1).copy()
    # undefined rows carry zero input weight; any valid row keeps the formula finite
    rows[~defined.ravel()] = 1.0 / rows.shape[1]
    return A, rows


KINDS = ("dmc", "bc", "bc3-inner", "bc3-outer", "cm", "fb-two-sided",
         "fb-one-sided-inner", "fb-one-sided-outer", "cr")
RATE_COUNT = {"dmc": 1, "bc": 2, "bc3-inner": 3, "bc3-outer": 3, "cm": 3,
              "fb-two-sided": 2, "fb-one-sided-inner": 2, "fb-one-sided-outer": 2, "cr": 2}


def region_constraints(kind, channel):
    """Return a list of (term, rate_index) pairs: c_j(P) >= r[rate_index]."""
    if kind == "dmc":
        _need(channel, Dmc, kind)
        return [(_Term("mi", channel.W), 0)]
    if kind in ("bc3-inner", "bc3-outer"):
        _need(channel, Bc3, kind)
        Ws = [marginal(channel, k).W for k in range(3)]
        out = [(_Term("mi", Ws[k]), k) for k in range(3)]
        if kind == "bc3-inner":
            for k in range(3):
                others = [l for l in range(3) if l != k]
                out.append((_Sum([_Term("mi", Ws[l]) for l in others]), k))
        return out
    _need(channel, Bc2, kind)
    wy, wz = marginal_y(channel), marginal_z(channel)
    if kind == "bc":
        return [(_Term("mi", wy.W), 0), (_Term("mi", wz.W), 1)]
    if kind == "cm":
        iy, iz = _Term("mi", wy.W), _Term("mi", wz.W)
        return [(iy, 0), (iy, 1), (iz, 0), (iz, 2)]
    ind_y = 1.0 if has_positive_capacity(wy) else 0.0
    hy = _Term("h", wy.W, scale=ind_y)
    if kind == "fb-two-sided":
        ind_z = 1.0 if has_positive_capacity(wz) else 0.0
        return [(hy, 0), (_Term("h", wz.W, scale=ind_z), 1)]
    if kind == "fb-one-sided-inner":
        return [(hy, 0), (_Term("mi", wz.W), 1)]
    if kind == "fb-one-sided-outer":
        ind_z = 1.0 if has_positive_capacity(wz) else 0.0
        A, rows = _lifted_input(channel)
        return [(hy, 0), (_Term("mi", rows, A=A, scale=ind_z), 1)]
    raise ValueError(f"unknown region kind {kind!r}")


class _Sum:
    def __init__(self, terms):
        self.terms = terms

    def __call__(self, p):
        vals = [t(p) for t in self.terms]
        return sum(v for v, _ in vals), sum(g for _, g in vals)


def _need(channel, cls, kind):
    if not isinstance(channel, cls):
        raise ValueError(f"region kind {kind!r} needs a {cls.__name__}, got {type(channel).__name__}")


# ------------------------------------------------------------- optimization

def simplex_grid(k, max_points=500):
    """All points of the simplex with coordinates in multiples of 1/res."""
    res = 1
    while _n_compositions(res + 1, k) <= max_points:
        res += 1
        if res >= 64:
            break
    pts = []
    for bars in combinations(range(res + k - 1), k - 1):
        prev, parts = -1, []
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(res + k - 2 - prev)
        pts.append(parts)
    return np.array(pts, dtype=float) / res


def _n_compositions(res, k):
    from math import comb
    return comb(res + k - 1, k - 1)


def _project(p):
    p = np.clip(p, 0.0, None)
    s = p.sum()
    return p / s if s > 0 else np.full(p.size, 1.0 / p.size)


def _eval_min(cons, r, p):
    vals = np.array([t(p)[0] for t, _ in cons]) - r[[j for _, j in cons]]
    return vals


def maximize_min_slack(cons, rates, k, n_starts=3, max_grid=500):
    """max_P min_j (c_j(P) - r_j): grid seeding, then SLSQP on the epigraph.

    Returns (p, slack, per-constraint slacks).  Deterministic; ties keep the
    lowest start index.
    """
    r = np.asarray(rates, dtype=float)
    grid = simplex_grid(k, max_grid)
    fvals = np.array([_eval_min(cons, r, p).min() for p in grid])
    order = np.argsort(-fvals, kind="stable")[:n_starts]
    best_p, best_f = grid[order[0]], fvals[order[0]]
    for i in order:
        p = _refine(cons, r, grid[i], fvals[i])
        f = _eval_min(cons, r, p).min()
        if f > best_f + 1e-15:
            best_p, best_f = p, f
    return best_p, float(best_f), _eval_min(cons, r, best_p)


def _refine(cons, r, p0, f0):
    k = p0.size
    idx = [j for _, j in cons]

    def ineq(z):
        return np.array([t(z[:k])[0] for t, _ in cons]) - r[idx] - z[k]

    def ineq_jac(z):
        rows = [np.append(t(z[:k])[1], -1.0) for t, _ in cons]
        return np.array(rows)

    z0 = np.append(p0, f0)
    res = minimize(lambda z: -z[k], z0, jac=lambda z: np.append(np.zeros(k), -1.0),
                   method="SLSQP", bounds=[(0.0, 1.0)] * k + [(None, None)],
                   constraints=[{"type": "ineq", "fun": ineq, "jac": ineq_jac},
                                {"type": "eq", "fun": lambda z: z[:k].sum() - 1.0,
                                 "jac": lambda z: np.append(np.ones(k), 0.0)}],
                   options={"ftol": 1e-14, "maxiter": 500})
    return _project(res.x[:k])


# ---------------------------------------------------------------- queries

@dataclass(frozen=True)
class RegionQuery:
    rates: tuple
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown region kind {self.kind!r}; choose from {KINDS}")
        rates = tuple(float(v) for v in self.rates)
        if len(rates) != RATE_COUNT[self.kind]:
            raise ValueError(f"{self.kind} takes {RATE_COUNT[self.kind]} rates, got {len(rates)}")
        if any(not np.isfinite(v) or v < 0 for v in rates):
            raise ValueError("rates must be finite and non-negative")
        object.__setattr__(self, "rates", rates)


@dataclass
class RegionAnswer:
    inside: bool
    status: str
    slack: float
    witness: Pmf
    constraint_slacks: tuple = ()
    u_witness: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        d = {"inside": self.inside, "status": self.status, "slack": self.slack,
             "witness": [float(v) for v in self.witness.probs],
             "constraint_slacks": [float(v) for v in self.constraint_slacks]}
        if self.u_witness is not None:
            d["u_witness"] = [[float(v) for v in row] for row in self.u_witness]
        return d


def _answer(p, slack, per, tol, u=None):
    if abs(slack) <= tol:
        status = "boundary"
    else:
        status = "inside" if slack > 0 else "outside"
    return RegionAnswer(inside=bool(slack >= -tol), status=status, slack=float(slack),
                        witness=Pmf(p), constraint_slacks=tuple(float(v) for v in per),
                        u_witness=u)


def region_membership(q, channel, tol=MEMBERSHIP_TOL, n_starts=3, u_size=None):
    if q.kind == "cr":
        if u_size is None:
            raise ValueError("common-randomness region needs an explicit u_size")
        return cr_region_membership(channel, q.rates, u_size, tol=tol)
    cons = region_constraints(q.kind, channel)
    p, slack, per = maximize_min_slack(cons, q.rates, channel.nx, n_starts=n_starts)
    return _answer(p, slack, per, tol)


def constraint_values(kind, channel, p):
    """The right-hand sides c_j(P) for a fixed P, in constraint order."""
    p = as_probs(p)
    return [(t(p)[0], j) for t, j in region_constraints(kind, channel)]


def region_boundary(channel, kind="bc", grid_resolution=21):
    """Weighted-sum tracing of a two-rate region with one constraint per rate.

    For each weight lam the maximizer of lam*c_0 + (1-lam)*c_1 gives a corner
    (c_0(P), c_1(P)) of the union-of-rectangles region.
    """
    if grid_resolution < 2:
        raise ValueError("grid_resolution must be at least 2")
    cons = region_constraints(kind, channel)
    if RATE_COUNT[kind] != 2 or len(cons) != 2:
        raise ValueError(f"boundary tracing supports two-constraint kinds, not {kind!r}")
    (t0, _), (t1, _) = cons
    pts = []
    for lam in np.linspace(0.0, 1.0, grid_resolution):
        comb_ = _Weighted(t0, t1, lam)
        p, _, _ = maximize_min_slack([(comb_, 0)], [0.0], channel.nx, n_starts=2)
        pt = (t0(p)[0], t1(p)[0])
        if not pts or max(abs(pt[0] - pts[-1][0]), abs(pt[1] - pts[-1][1])) > 1e-9:
            pts.append(pt)
    return sorted(pts)


class _Weighted:
    def __init__(self, a, b, lam):
        self.a, self.b, self.lam = a, b, lam

    def __call__(self, p):
        va, ga = self.a(p)
        vb, gb = self.b(p)
        return self.lam * va + (1 - self.lam) * vb, self.lam * ga + (1 - self.lam) * gb


# ------------------------------------------------- common-randomness region

def cr_terms(bc, joint):
    """Information terms for a joint PMF P_{U,X} (rows U, columns X)."""
    wy, wz = marginal_y(bc).W, marginal_z(bc).W
    pu = joint.sum(axis=1)
    px = joint.sum(axis=0)

    def cond_entropy_given_u(w):
        puy = joint @ w
        return entropy(puy.ravel()) - entropy(pu)

    hyx = float(px @ -_xlogx(wy).sum(axis=1))
    hzx = float(px @ -_xlogx(wz).sum(axis=1))
    hy, hz = entropy(px @ wy), entropy(px @ wz)
    hy_u, hz_u = cond_entropy_given_u(wy), cond_entropy_given_u(wz)
    return {"I(U;Y)": hy - hy_u, "I(U;Z)": hz - hz_u,
            "I(X;Y|U)": hy_u - hyx, "I(X;Z|U)": hz_u - hzx,
            "I(X;Y)": hy - hyx, "I(X;Z)": hz - hzx}


def cr_slack(bc, joint, rates):
    """Best slack of the two alternative constraint sets at a fixed P_{U,X}."""
    ry, rz = rates
    t = cr_terms(bc, joint)
    s1 = min(t["I(U;Y)"] - ry, min(t["I(U;Y)"] + t["I(X;Z|U)"], t["I(X;Z)"]) - rz)
    s2 = min(min(t["I(U;Z)"] + t["I(X;Y|U)"], t["I(X;Y)"]) - ry, t["I(U;Z)"] - rz)
    return max(s1, s2)


def cr_region_membership(bc, rates, u_size=None, tol=MEMBERSHIP_TOL, n_random=12, seed=0):
    """Inner approximation of the common-randomness region with |U| = u_size.

    Multistart local search over P_{U,X}; the objective is not concave, so
    the verdict is exact only up to the search.
    """
    if not isinstance(bc, Bc2):
        raise ValueError("common-randomness region needs a Bc2")
    nx = bc.nx
    u_size = nx + 1 if u_size is None else int(u_size)
    if u_size < 1:
        raise ValueError("u_size must be at least 1")
    rates = tuple(float(v) for v in rates)
    k = u_size * nx
    starts = []
    for px in np.vstack([np.full(nx, 1.0 / nx), simplex_grid(nx, 50)]):
        j = np.zeros((u_size, nx))
        for x in range(nx):
            j[x % u_size, x] = px[x]          # U = X when u_size >= nx
        starts.append(j.ravel())
        starts.append((np.ones((u_size, 1)) / u_size * px[None, :]).ravel())
    rng = np.random.default_rng(seed)
    starts.extend(rng.dirichlet(np.ones(k), size=n_random))

    def obj(v):
        return cr_slack(bc, _project(v).reshape(u_size, nx), rates)

    vals = np.array([obj(s) for s in starts])
    best_v, best_f = starts[int(np.argmax(vals))], vals.max()
    for i in np.argsort(-vals, kind="stable")[:4]:
        res = minimize(lambda v: -obj(v), starts[i], method="Powell",
                       bounds=[(0.0, 1.0)] * k, options={"xtol": 1e-8, "ftol": 1e-12})
        f = obj(res.x)
        if f > best_f + 1e-15:
            best_v, best_f = res.x, f
    joint = _project(best_v).reshape(u_size, nx)
    return _answer(joint.sum(axis=0), best_f, (best_f,), tol, u=joint)
