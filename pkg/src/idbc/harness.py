"""Parameter sweeps over (n, rates, message counts, eps, mu) x seeds.

A sweep is described by a JSON config.  Every grid point is validated
before anything runs; each (point, seed) then yields one RunRecord.  The
CSV written at the end is ordered by grid point and seed, so the file is
byte-identical across runs and worker counts.  A JSON-lines journal next to
the CSV makes interrupted sweeps resumable.
"""
import csv
import hashlib
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
from scipy.stats import binom

from . import keyed
from .channel import Bc2, Bc3, Dmc, load_channel
from .id_bc import BcIdParams, avg_error_report_bc, build_bc_code, max_error_report_bc, validate_bc
from .id_dmc import BudgetError, IdParams, ParamError, build_dmc_code, check_G_mu, \
    error_report_dmc, g_mu_failure_bound, pool_size_for, validate_dmc
from .id_ext import Bc3IdParams, CmIdParams, FbIdParams, build_bc3_code, build_cm_code, \
    build_fb_code, evaluate_bc3, evaluate_cm, evaluate_fb, fb_type_concentration_check, \
    memoryless_family, message_dependent_family, switching_family, validate_bc3, validate_cm, \
    validate_fb
from .typeskit import TypeVector, l_type_check, type_class

SCHEMES = ("dmc", "bc", "bc3", "cm", "fb")
SCHEME_ID = {s: i for i, s in enumerate(SCHEMES)}
ERROR_COLUMNS = {
    "dmc": ("p_missed", "p_wrong"),
    "bc": ("p_y_missed", "p_y_wrong", "p_z_missed", "p_z_wrong"),
    "bc3": ("p_1_missed", "p_1_wrong", "p_2_missed", "p_2_wrong", "p_3_missed", "p_3_wrong"),
    "cm": ("p_y_missed", "p_y_wrong", "p_z_missed", "p_z_wrong"),
    "fb": ("p_y_missed", "p_y_wrong", "p_z_missed", "p_z_wrong"),
}
# rates tuple layout and message-count layout per scheme
RATE_FIELDS = {
    "dmc": ("pool_rate", "bin_rate"),
    "bc": ("pool_rate", "bin_rate_y", "bin_rate_z"),
    "bc3": ("pool_rate", "bin_rate_1", "bin_rate_2", "bin_rate_3"),
    "cm": ("pool_rate", "bin_rate_y", "bin_rate_z"),
    "fb": ("pool_rate", "bin_rate_z", "trans_rate"),
}
COUNT_FIELDS = {"dmc": ("m",), "bc": ("m_y", "m_z"), "bc3": ("m_1", "m_2", "m_3"),
                "cm": ("m", "m_y", "m_z"), "fb": ("m_y", "m_z")}
BASE_COLUMNS = ("scheme", "config_hash", "point", "n", "rates", "m_counts", "eps", "mu", "seed",
                "code_seed", "status", "method", "max_error")


class ConfigError(ValueError):
    def __init__(self, message, rejected=()):
        super().__init__(message)
        self.rejected = list(rejected)


@dataclass
class ExperimentConfig:
    channel: str
    scheme: str
    n: list
    rates: list
    m_counts: list
    seeds: list
    eps: list = field(default_factory=lambda: [None])
    mu: list = field(default_factory=lambda: [None])
    input_pmf: list = None
    mode: str = "exact"
    criterion: str = "average"
    trials: int = 100000
    budget_states: int = 1 << 24
    root_seed: int = 0
    output: str = "sweep.csv"
    base_dir: str = field(default=".", repr=False)

    @classmethod
    def from_dict(cls, d, base_dir="."):
        d = dict(d)
        grid = d.pop("grid", {})
        d.update(grid)
        known = set(cls.__dataclass_fields__) - {"base_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d, base_dir=str(base_dir))
        cfg.check_shape()
        return cfg

    @classmethod
    def load(cls, path):
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base_dir=path.parent)

    def check_shape(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.mode not in ("exact", "mc"):
            raise ConfigError("mode must be 'exact' or 'mc'")
        if self.criterion not in ("average", "maximum"):
            raise ConfigError("criterion must be 'average' or 'maximum'")
        for r in self.rates:
            if len(r) != len(RATE_FIELDS[self.scheme]):
                raise ConfigError(f"{self.scheme} rates are {RATE_FIELDS[self.scheme]}")
        for m in self.m_counts:
            if len(m) != len(COUNT_FIELDS[self.scheme]):
                raise ConfigError(f"{self.scheme} message counts are {COUNT_FIELDS[self.scheme]}")

    def to_dict(self):
        return {"channel": self.channel, "scheme": self.scheme, "n": list(self.n),
                "rates": [list(r) for r in self.rates], "m_counts": [list(m) for m in self.m_counts],
                "seeds": list(self.seeds), "eps": list(self.eps), "mu": list(self.mu),
                "input_pmf": None if self.input_pmf is None else list(self.input_pmf),
                "mode": self.mode, "criterion": self.criterion, "trials": self.trials,
                "budget_states": self.budget_states, "root_seed": self.root_seed,
                "output": self.output}

    def channel_path(self):
        p = Path(self.channel)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def output_path(self):
        p = Path(self.output)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def grid(self):
        return [dict(n=int(n), rates=tuple(float(v) for v in r), m_counts=tuple(int(v) for v in m),
                     eps=e, mu=u)
                for n, r, m, e, u in product(self.n, self.rates, self.m_counts, self.eps, self.mu)]


def config_hash(cfg, channel_doc):
    """sha256 of the canonical JSON of the config and the channel contents."""
    d = cfg.to_dict()
    d.pop("output")
    blob = json.dumps({"config": d, "channel": channel_doc}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def code_seed(root_seed, scheme, point, seed):
    """Counter-mode split of the root seed by (scheme, grid index, seed)."""
    h = keyed.keyed_hash(root_seed, SCHEME_ID[scheme], point, seed)[0]
    return int(h >> np.uint64(1))


# ------------------------------------------------------------ per scheme

def _input_pmf(cfg, channel):
    if cfg.input_pmf is not None:
        return tuple(float(v) for v in cfg.input_pmf)
    return tuple([1.0 / channel.nx] * channel.nx)


def make_params(cfg, channel, point, seed):
    s, r, m = cfg.scheme, point["rates"], point["m_counts"]
    p = _input_pmf(cfg, channel)
    n, eps = point["n"], point["eps"]
    if s == "dmc":
        return IdParams(n=n, m_count=m[0], pool_rate=r[0], bin_rate=r[1], input_pmf=p, eps=eps,
                        seed=seed)
    if s == "bc":
        return BcIdParams(n=n, m_y_count=m[0], m_z_count=m[1], bin_rate_y=r[1], bin_rate_z=r[2],
                          pool_rate=r[0], input_pmf=p, eps=eps, seed=seed)
    if s == "bc3":
        return Bc3IdParams(n=n, m_counts=tuple(m), bin_rates=tuple(r[1:]), pool_rate=r[0],
                           input_pmf=p, eps=eps, seed=seed)
    if s == "cm":
        return CmIdParams(n=n, m_count=m[0], m_y_count=m[1], m_z_count=m[2], bin_rate_y=r[1],
                          bin_rate_z=r[2], pool_rate=r[0], input_pmf=p, eps=eps, seed=seed)
    return FbIdParams(n=n, m_y_count=m[0], m_z_count=m[1], bin_rate_z=r[1], pool_rate=r[0],
                      trans_rate=r[2], input_pmf=p, eps=eps, seed=seed)


_EXPECTED_CHANNEL = {"dmc": Dmc, "bc": Bc2, "bc3": Bc3, "cm": Bc2, "fb": Bc2}
VALIDATORS = {"dmc": validate_dmc, "bc": validate_bc, "bc3": validate_bc3, "cm": validate_cm,
              "fb": validate_fb}


def validate_point(cfg, channel, point):
    """Reason codes from the scheme's own validator."""
    return VALIDATORS[cfg.scheme](make_params(cfg, channel, point, 0), channel)


def _run_one(cfg, channel, point, seed):
    params = make_params(cfg, channel, point, seed)
    s = cfg.scheme
    kw = dict(mode=cfg.mode, trials=cfg.trials, seed=seed, budget_states=cfg.budget_states)
    extra = {}
    if s == "dmc":
        code = build_dmc_code(params, channel)
        rep = error_report_dmc(code, channel, **kw)
        errs = {"p_missed": rep.p_missed, "p_wrong": rep.p_wrong}
        if point["mu"] is not None:
            extra["in_g_mu"] = check_G_mu(code, point["mu"])["in_G"]
        method = rep.method
    elif s == "bc":
        code = build_bc_code(params, channel)
        fn = avg_error_report_bc if cfg.criterion == "average" else max_error_report_bc
        rep = fn(code, channel, **kw)
        errs = rep.row()
        method = rep.y.method
    else:
        build, evaluate = {"bc3": (build_bc3_code, evaluate_bc3), "cm": (build_cm_code, evaluate_cm),
                           "fb": (build_fb_code, evaluate_fb)}[s]
        code = build(params, channel)
        rep = evaluate(code, channel, criterion=cfg.criterion, **kw)
        errs = rep.row()
        method = next(iter(rep.sides.values())).method
    return errs, method, extra


@dataclass
class RunRecord:
    config_hash: str
    point: int
    grid_point: dict
    seed: int
    code_seed: int
    status: str
    method: str = ""
    errors: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    message: str = ""
    wall_time: float = 0.0

    @property
    def max_error(self):
        vals = [v for v in self.errors.values() if v is not None]
        return max(vals) if vals else None

    def to_json(self):
        d = {k: getattr(self, k) for k in ("config_hash", "point", "grid_point", "seed", "code_seed",
                                          "status", "method", "errors", "extra", "message")}
        d["grid_point"] = {k: list(v) if isinstance(v, tuple) else v for k, v in self.grid_point.items()}
        return d

    @classmethod
    def from_json(cls, d):
        gp = dict(d["grid_point"])
        gp["rates"], gp["m_counts"] = tuple(gp["rates"]), tuple(gp["m_counts"])
        return cls(**{**d, "grid_point": gp})


def _task(args):
    cfg, point_index, point, seed, chash = args
    channel = load_channel(cfg.channel_path())
    cs = code_seed(cfg.root_seed, cfg.scheme, point_index, seed)
    t0 = time.perf_counter()
    try:
        errs, method, extra = _run_one(cfg, channel, point, cs)
        status, msg = "ok", ""
    except BudgetError as e:
        errs, method, extra, status, msg = {}, "", {}, "budget", str(e)
    except (ParamError, ValueError, MemoryError) as e:
        errs, method, extra, status, msg = {}, "", {}, "error", str(e)
    return RunRecord(config_hash=chash, point=point_index, grid_point=point, seed=int(seed),
                     code_seed=cs, status=status, method=method, errors=errs, extra=extra,
                     message=msg, wall_time=time.perf_counter() - t0)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (tuple, list)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def csv_text(cfg, records):
    cols = list(BASE_COLUMNS) + list(ERROR_COLUMNS[cfg.scheme]) + ["in_g_mu", "message"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in records:
        g = r.grid_point
        row = {"scheme": cfg.scheme, "config_hash": r.config_hash, "point": r.point, "n": g["n"],
               "rates": g["rates"], "m_counts": g["m_counts"], "eps": g["eps"], "mu": g["mu"],
               "seed": r.seed, "code_seed": r.code_seed, "status": r.status, "method": r.method,
               "max_error": r.max_error, "in_g_mu": r.extra.get("in_g_mu"), "message": r.message}
        row.update(r.errors)
        w.writerow([_fmt(row.get(c)) for c in cols])
    return buf.getvalue()


def _workers():
    try:
        return max(1, int(os.environ.get("IDBC_WORKERS", "1")))
    except ValueError:
        return 1


def prepare(cfg):
    """Load the channel, hash the config and validate every grid point."""
    path = cfg.channel_path()
    channel = load_channel(path)
    want = _EXPECTED_CHANNEL[cfg.scheme]
    if not isinstance(channel, want):
        raise ConfigError(f"scheme {cfg.scheme} needs a {want.__name__} channel")
    chash = config_hash(cfg, json.loads(Path(path).read_text()))
    grid = cfg.grid()
    rejected = []
    for i, point in enumerate(grid):
        reasons = validate_point(cfg, channel, point)
        if reasons:
            rejected.append((i, reasons))
    if rejected:
        raise ConfigError("invalid grid points: " + "; ".join(f"#{i}: {', '.join(r)}" for i, r in rejected),
                          rejected)
    return channel, chash, grid


def run_sweep(cfg, write=True):
    """Run every (grid point, seed); returns records in grid order.

    Records already present in the output CSV's journal for the same config
    hash are reused, so a finished sweep re-runs with no computation.
    """
    _, chash, grid = prepare(cfg)
    out = cfg.output_path()
    journal = out.with_name(out.name + ".journal.jsonl")
    done = {}
    if write and journal.exists():
        for line in journal.read_text().splitlines():
            if line.strip():
                rec = RunRecord.from_json(json.loads(line))
                if rec.config_hash == chash:
                    done[(rec.point, rec.seed)] = rec
    todo = [(cfg, i, p, s, chash) for i, p in enumerate(grid) for s in cfg.seeds
            if (i, int(s)) not in done]
    fresh = []
    if todo:
        workers = _workers()
        ex = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
        results = ex.map(_task, todo) if ex else map(_task, todo)
        fh = None
        if write:
            out.parent.mkdir(parents=True, exist_ok=True)
            fh = journal.open("a")
        try:
            for r in results:
                fresh.append(r)
                if fh:
                    fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")
                    fh.flush()
        finally:
            if fh:
                fh.close()
            if ex:
                ex.shutdown()
    for r in fresh:
        done[(r.point, r.seed)] = r
    records = [done[(i, int(s))] for i in range(len(grid)) for s in cfg.seeds]
    if write:
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_if_changed(out, csv_text(cfg, records))
        sidecar = {"config": cfg.to_dict(), "config_hash": chash, "records": len(records)}
        _write_if_changed(out.with_name(out.name + ".json"),
                          json.dumps(sidecar, sort_keys=True, indent=2) + "\n")
    return records


def _write_if_changed(path, text):
    if path.exists() and path.read_text() == text:
        return
    path.write_text(text)


# ------------------------------------------------------------ summaries

def median_ci(values, level=0.95):
    """Median with a distribution-free order-statistic interval."""
    v = np.sort(np.asarray(values, dtype=float))
    k = v.size
    if k == 0:
        return None, None, None
    med = float(np.median(v))
    if k == 1:
        return med, med, med
    lo_i = int(binom.ppf((1 - level) / 2, k, 0.5))
    hi_i = min(k - 1, k - lo_i)
    return med, float(v[max(0, lo_i - 1)]), float(v[hi_i])


def fit_slope(ns, errors, cutoff=0.5):
    """Least-squares slope of ln(error) against n over 0 < error < cutoff."""
    ns = np.asarray(ns, dtype=float)
    e = np.asarray(errors, dtype=float)
    keep = (e > 0) & (e < cutoff) & np.isfinite(e)
    if np.unique(ns[keep]).size < 2:
        return None
    return float(np.polyfit(ns[keep], np.log(e[keep]), 1)[0])


def summarize(records):
    """Per grid point medians/intervals, plus ln-error slopes per series.

    A series collects the points that differ only in n.  Points with any
    non-ok record are flagged with their failure count.
    """
    by_point = {}
    for r in records:
        by_point.setdefault(r.point, []).append(r)
    rows = []
    for point in sorted(by_point):
        recs = by_point[point]
        ok = [r for r in recs if r.status == "ok"]
        row = {"point": point, "grid_point": recs[0].grid_point, "records": len(recs),
               "failed": len(recs) - len(ok), "flagged": len(ok) < len(recs)}
        names = sorted({k for r in ok for k in r.errors} | ({"max_error"} if ok else set()))
        for name in names:
            vals = [r.max_error if name == "max_error" else r.errors[name] for r in ok]
            med, lo, hi = median_ci(vals)
            row[name] = {"median": med, "ci_low": lo, "ci_high": hi}
        rows.append(row)
    series = {}
    for row in rows:
        g = row["grid_point"]
        key = (tuple(g["rates"]), tuple(g["m_counts"]), g["eps"], g["mu"])
        series.setdefault(key, []).append(row)
    slopes = []
    for key, pts in series.items():
        ns = [p["grid_point"]["n"] for p in pts]
        entry = {"rates": list(key[0]), "m_counts": list(key[1]), "eps": key[2], "mu": key[3],
                 "n": ns}
        names = sorted({k for p in pts for k, v in p.items() if isinstance(v, dict) and "median" in v})
        for name in names:
            meds = [p[name]["median"] if name in p else np.nan for p in pts]
            entry[f"slope_{name}"] = fit_slope(ns, meds)
        slopes.append(entry)
    return {"points": rows, "slopes": slopes}


# ------------------------------------------------------------ lemma checks

def _binomial_slack(p, trials):
    p = min(max(p, 0.0), 1.0)
    return 3 * np.sqrt(p * (1 - p) / trials)


def lemma_g_mu(channel, n, m_count, pool_rate, bin_rate, mu, seeds, input_pmf=None, root_seed=0):
    """Frequency of codes outside G_mu against its union bound."""
    p = tuple(input_pmf) if input_pmf else tuple([1.0 / channel.nx] * channel.nx)
    fails, sizes = 0, []
    for s in range(seeds):
        prm = IdParams(n=n, m_count=m_count, pool_rate=pool_rate, bin_rate=bin_rate, input_pmf=p,
                       seed=root_seed + s)
        code = build_dmc_code(prm, channel, check=False)
        res = check_G_mu(code, mu)
        fails += not res["in_G"]
        sizes.extend(b.size for b in code.index_sets)
    bound = g_mu_failure_bound(m_count, n, bin_rate, mu)
    freq = fails / seeds
    slack = _binomial_slack(bound, seeds)
    size_count = pool_size_for(n, pool_rate)
    p_sel = min(1.0, np.exp(-n * (pool_rate - bin_rate)))
    target = np.exp(n * bin_rate)
    sigma = np.sqrt(size_count * p_sel * (1 - p_sel) / len(sizes))
    mean = float(np.mean(sizes))
    return {"check": "g_mu", "frequency": freq, "bound": bound, "slack": slack,
            "passed_frequency": bool(freq <= bound + slack), "mean_bin_size": mean,
            "target": float(target), "sigma": float(sigma),
            "passed_bin_mean": bool(abs(mean - target) <= 3 * sigma),
            "seeds": seeds}


def lemma_l_type(channel, counts, L, delta, eps, seeds, sets, root_seed=0):
    t = TypeVector(tuple(int(c) for c in counts), int(sum(counts)))
    size = type_class(t).shape[0]
    failures = 0
    for s in range(seeds):
        rng = keyed.stream(root_seed + s, keyed.EVAL, 1 << 39)
        q = rng.dirichlet(np.ones(size))
        failures += l_type_check(channel, t, q, L, delta, eps, sets, rng)["failures"]
    return {"check": "l_type", "type": list(counts), "L": L, "delta": delta, "eps": eps,
            "failures": failures, "sets": sets * seeds, "passed": failures == 0}


def lemma_fb_types(channel, family, n, nu, trials, root_seed=0):
    nx = channel.nx
    fams = {
        "memoryless": lambda: memoryless_family(np.full(nx, 1.0 / nx)),
        "switching": lambda: switching_family(np.eye(nx)[0] * 0.8 + 0.2 / nx,
                                              np.eye(nx)[-1] * 0.8 + 0.2 / nx),
        "message-dependent": lambda: message_dependent_family(
            [np.eye(nx)[j % nx] * 0.6 + 0.4 / nx for j in range(3)]),
    }
    if family not in fams:
        raise ConfigError(f"family must be one of {sorted(fams)}")
    res = fb_type_concentration_check(fams[family](), channel, n, nu, trials, seed=root_seed)
    return {"check": "fb_types", **res.to_dict()}


LEMMAS = {"g_mu": lemma_g_mu, "l_type": lemma_l_type, "fb_types": lemma_fb_types}


def run_lemmas(doc, base_dir=".", root_seed=None):
    """Run the checks listed in a verify-lemmas config document."""
    path = Path(doc["channel"])
    channel = load_channel(path if path.is_absolute() else Path(base_dir) / path)
    seed = doc.get("root_seed", 0) if root_seed is None else root_seed
    out = []
    for check in doc.get("checks", []):
        check = dict(check)
        kind = check.pop("kind")
        if kind not in LEMMAS:
            raise ConfigError(f"unknown check {kind!r}; choose from {sorted(LEMMAS)}")
        out.append(LEMMAS[kind](channel, root_seed=seed, **check))
    return out
