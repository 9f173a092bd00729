"""Versioned JSON container for built codes.

Pools are stored one string per codeword (one character per symbol for
alphabets up to 36, otherwise space-separated integers); index sets are
delta-encoded.  Single-user and two-receiver codes share the format, the
latter with side-tagged index sets.
"""
import json
from dataclasses import asdict

import numpy as np

from .id_bc import BcIdCode, BcIdParams, BinFamily
from .id_dmc import IdCodeDmc, IdParams
from .typeskit import joint_pmf

FORMAT = "idbc-code"
VERSION = 1
_DIGITS = "0123456789abcdefghijklmnopqrstuvwxyz"


def _pool_rows(pool):
    if pool.size == 0 or int(pool.max()) < len(_DIGITS):
        return ["".join(_DIGITS[s] for s in row) for row in pool]
    return [" ".join(str(int(s)) for s in row) for row in pool]


def _pool_from_rows(rows, n):
    if not rows:
        return np.zeros((0, n), dtype=np.uint8)
    if " " in rows[0] or len(rows[0]) != n:
        return np.array([[int(t) for t in r.split()] for r in rows], dtype=np.uint8)
    return np.array([[_DIGITS.index(c) for c in r] for r in rows], dtype=np.uint8)


def _delta(b):
    b = np.asarray(b, dtype=np.int64)
    return np.diff(b, prepend=0).tolist() if b.size else []


def _undelta(d):
    return np.cumsum(np.asarray(d, dtype=np.int64)) if d else np.zeros(0, np.int64)


def code_to_dict(code):
    if isinstance(code, IdCodeDmc):
        return {"format": FORMAT, "version": VERSION, "scheme": "dmc", "params": asdict(code.params),
                "eps": code.eps, "v_star": code.v_star, "joint": code.joint.tolist(),
                "pool": _pool_rows(code.pool), "index_sets": [_delta(b) for b in code.index_sets]}
    if isinstance(code, BcIdCode):
        return {"format": FORMAT, "version": VERSION, "scheme": "bc", "params": asdict(code.params),
                "eps": code.eps, "joint_y": code.joint_y.tolist(), "joint_z": code.joint_z.tolist(),
                "pool": _pool_rows(code.pool),
                "index_sets": {"Y": [_delta(b) for b in code.bins_y.bins],
                               "Z": [_delta(b) for b in code.bins_z.bins]}}
    raise TypeError(f"no container format for {type(code).__name__}")


def code_from_dict(doc):
    if doc.get("format") != FORMAT:
        raise ValueError("not an idbc code container")
    if doc.get("version") != VERSION:
        raise ValueError(f"unsupported container version {doc.get('version')}")
    params = dict(doc["params"])
    params["input_pmf"] = tuple(params["input_pmf"])
    n = params["n"]
    pool = _pool_from_rows(doc["pool"], n)
    if doc["scheme"] == "dmc":
        return IdCodeDmc(params=IdParams(**params), pool=pool,
                         index_sets=[_undelta(d) for d in doc["index_sets"]],
                         joint=np.array(doc["joint"]), eps=doc["eps"], v_star=doc["v_star"])
    if doc["scheme"] == "bc":
        return BcIdCode(params=BcIdParams(**params), pool=pool,
                        bins_y=BinFamily([_undelta(d) for d in doc["index_sets"]["Y"]]),
                        bins_z=BinFamily([_undelta(d) for d in doc["index_sets"]["Z"]]),
                        joint_y=np.array(doc["joint_y"]), joint_z=np.array(doc["joint_z"]),
                        eps=doc["eps"])
    raise ValueError(f"unknown scheme {doc['scheme']!r}")


def save_code(code, path):
    with open(path, "w") as fh:
        json.dump(code_to_dict(code), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_code(path):
    with open(path) as fh:
        return code_from_dict(json.load(fh))


__all__ = ["code_to_dict", "code_from_dict", "save_code", "load_code", "joint_pmf"]
