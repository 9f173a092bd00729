"""Command line entry point: ``idbc <command> ...``.

Every command writes JSON (or CSV for sweeps) with sorted keys and fixed
float formatting, so repeating an invocation reproduces its files byte for
byte.  Timings go to stderr only.
"""
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from .container import save_code
from .channel import Bc2, Dmc, load_channel, marginal, marginal_y, marginal_z
from .harness import ConfigError, ExperimentConfig, code_seed, make_params, prepare, run_lemmas, \
    run_sweep, summarize
from .id_bc import build_bc_code
from .id_dmc import BudgetError, ParamError, build_dmc_code
from .id_ext import build_bc3_code, build_cm_code, build_fb_code
from .info import KINDS, RegionQuery, bits, capacity, region_membership


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if not np.isfinite(v) else float(format(v, ".15g"))
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    return v


def _emit(doc, out):
    text = json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    click.echo(text, nl=False)


def _fail(msg, code=2):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _load(path):
    try:
        return load_channel(path)
    except (OSError, ValueError) as e:
        _fail(str(e))


@click.group()
def main():
    """Identification codes over DMCs and broadcast channels."""


@main.command("capacity")
@click.argument("channel", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def capacity_cmd(channel, out):
    """Capacity of a DMC, or of every marginal of a broadcast channel."""
    ch = _load(channel)
    if isinstance(ch, Dmc):
        parts = {"W": ch}
    elif isinstance(ch, Bc2):
        parts = {"W_Y": marginal_y(ch), "W_Z": marginal_z(ch)}
    else:
        parts = {f"W_{k + 1}": marginal(ch, k) for k in range(3)}
    doc = {}
    for name, w in parts.items():
        p, c = capacity(w)
        doc[name] = {"capacity_nats": c, "capacity_bits": bits(c), "input_pmf": p.probs}
    _emit(doc, out)


@main.command("region")
@click.argument("channel", type=click.Path(exists=True, dir_okay=False))
@click.option("--kind", required=True, type=click.Choice(KINDS))
@click.option("--query", required=True, help="comma separated rates in nats")
@click.option("--u-size", type=int, default=None, help="auxiliary alphabet size (kind cr)")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def region_cmd(channel, kind, query, u_size, out):
    """Is a rate tuple inside a capacity region?"""
    ch = _load(channel)
    try:
        rates = tuple(float(v) for v in query.split(","))
        ans = region_membership(RegionQuery(rates=rates, kind=kind), ch, u_size=u_size)
    except ValueError as e:
        _fail(str(e))
    _emit({"kind": kind, "rates": rates, **ans.to_dict()}, out)


def _config(path, seed, budget_states, out):
    try:
        cfg = ExperimentConfig.load(path)
    except (OSError, ValueError, TypeError) as e:
        _fail(f"bad config: {e}")
    if seed is not None:
        cfg.root_seed = seed
    if budget_states is not None:
        cfg.budget_states = budget_states
    if out is not None:
        cfg.output = str(Path(out).resolve())
    return cfg


_BUILDERS = {"dmc": build_dmc_code, "bc": build_bc_code, "bc3": build_bc3_code,
             "cm": build_cm_code, "fb": build_fb_code}


def _bin_sizes(code):
    for name in ("index_sets",):
        if hasattr(code, name):
            return {"bins": [int(b.size) for b in getattr(code, name)]}
    if hasattr(code, "bins_y") and isinstance(code.bins_y, list):
        return {"bins_y": [[int(b.size) for b in f.bins] for f in code.bins_y],
                "bins_z": [[int(b.size) for b in f.bins] for f in code.bins_z]}
    if hasattr(code, "bins_y"):
        return {"bins_y": code.bins_y.sizes, "bins_z": code.bins_z.sizes}
    if hasattr(code, "bins") and isinstance(code.bins, tuple):
        return {f"bins_{k + 1}": f.sizes for k, f in enumerate(code.bins)}
    return {"bins_z": code.bins_z.sizes}


@main.command("build-code")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="root seed override")
@click.option("--budget-states", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--container", type=click.Path(file_okay=False), default=None,
              help="directory for code containers (dmc and bc schemes)")
def build_code_cmd(config, seed, budget_states, out, container):
    """Build the code of every grid point (first listed seed) and describe it."""
    cfg = _config(config, seed, budget_states, None)
    try:
        channel, chash, grid = prepare(cfg)
    except (ConfigError, OSError, ValueError) as e:
        _fail(str(e))
    codes = []
    ok = True
    for i, point in enumerate(grid):
        s = code_seed(cfg.root_seed, cfg.scheme, i, cfg.seeds[0]) if cfg.seeds else 0
        entry = {"point": i, "grid_point": point, "code_seed": s}
        try:
            code = _BUILDERS[cfg.scheme](make_params(cfg, channel, point, s), channel)
            entry.update(status="ok", pool_size=int(code.pool.shape[0]), eps=code.eps,
                         **_bin_sizes(code))
            if cfg.scheme == "fb":
                entry.update(k=code.tcode.k, transmission_messages=code.tcode.size,
                             eps_k=code.tcode.eps_k)
            if container and cfg.scheme in ("dmc", "bc"):
                Path(container).mkdir(parents=True, exist_ok=True)
                path = Path(container) / f"code_{i}.json"
                save_code(code, path)
                entry["container"] = path.name
        except (BudgetError, ParamError, MemoryError) as e:
            ok = False
            entry.update(status="failed", message=str(e))
        codes.append(entry)
    _emit({"config_hash": chash, "scheme": cfg.scheme, "codes": codes}, out)
    sys.exit(0 if ok else 1)


@main.command("simulate")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="root seed override")
@click.option("--budget-states", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV output path")
@click.option("--dmc", "scheme", flag_value="dmc", help="require scheme dmc")
@click.option("--bc", "scheme", flag_value="bc", help="require scheme bc")
@click.option("--bc3", "scheme", flag_value="bc3", help="require scheme bc3")
@click.option("--cm", "scheme", flag_value="cm", help="require scheme cm")
@click.option("--fb", "scheme", flag_value="fb", help="require scheme fb")
def simulate_cmd(config, seed, budget_states, out, scheme):
    """Run a sweep; writes CSV + JSON sidecar and prints a summary."""
    cfg = _config(config, seed, budget_states, out)
    if scheme is not None and scheme != cfg.scheme:
        _fail(f"config scheme is {cfg.scheme!r}, not {scheme!r}")
    t0 = time.perf_counter()
    try:
        records = run_sweep(cfg)
    except (ConfigError, OSError) as e:
        _fail(str(e))
    summary = summarize(records)
    summary_path = cfg.output_path().with_name(cfg.output_path().name + ".summary.json")
    _emit(summary, summary_path)
    click.echo(f"{len(records)} records in {time.perf_counter() - t0:.1f}s", err=True)
    sys.exit(0 if all(r.status == "ok" for r in records) else 1)


@main.command("verify-lemmas")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="root seed override")
@click.option("--budget-states", type=int, default=None, help="accepted for symmetry; unused")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def verify_lemmas_cmd(config, seed, budget_states, out):
    """Statistical checks of the G_mu, L-type and feedback type lemmas."""
    path = Path(config)
    try:
        doc = json.loads(path.read_text())
        results = run_lemmas(doc, base_dir=path.parent, root_seed=seed)
    except (OSError, ValueError, TypeError) as e:
        _fail(str(e))
    if out is None and "output" in doc:
        out = str(path.parent / doc["output"])
    _emit({"checks": results}, out)
    passed = all(all(v for k, v in r.items() if k.startswith("passed")) for r in results)
    sys.exit(0 if passed else 1)


if __name__ == "__main__":
    main()
