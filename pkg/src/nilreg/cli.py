"""Command-line front end: one subcommand per module, exit status 0 iff every check passes."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import distortion_search as ds
from . import interval_model as im
from . import markov_walk as mw
from . import orbit_graph as og
from . import path_decomposition as pd
from . import smoothing as sm

FORMAT_VERSION = "nilreg-run v1"


class ConfigError(ValueError):
    pass


# parameter name -> (type, default) per subcommand
SCHEMA: dict[str, dict[str, tuple[Callable, Any]]] = {
    "orbit-growth": {"d": (int, 3), "n": (int, 40), "fit": (str, None)},
    "markov-check": {"kmax": (int, 30), "control": (int, 4)},
    "decompose": {"N": (int, 5), "M": (int, 17), "layout": (str, "binary"), "windows": (int, 50)},
    "select-path": {
        "d": (int, 3),
        "alpha": (float, 0.45),
        "eps": (float, 0.1),
        "levels": (int, 3),
        "alpha_b": (float, None),
        "pick": (str, "lowest"),
    },
    "lalpha": {"certificate": (str, None), "alphas": (str, "0.25,0.45")},
    "build-maps": {"d": (int, 3), "alpha": (float, 0.2), "scheme": (str, "b"), "radius": (int, 4), "family_out": (str, None)},
    "holder": {
        "d": (int, 3),
        "alpha": (float, 0.2),
        "scheme": (str, "b"),
        "radius": (int, 8),
        "pairs": (int, 10**5),
        "maps": (str, None),
        "double": (bool, False),
        "limit": (float, 1.5),
    },
    "relations": {"d": (int, 2), "alpha": (float, 0.5), "radius": (int, 12), "samples": (int, 1000), "tol": (float, 1e-7)},
    "verify-certificate": {"certificate": (str, None), "skip_normaliser": (bool, False)},
}
GLOBAL_KEYS = {"seed": (int, 0), "out": (str, "-"), "mem_cap": (int, ds.DEFAULT_MEM_CAP)}


@dataclass
class RunConfig:
    subcommand: str
    params: dict[str, Any]
    seed: int = 0
    out: str = "-"
    mem_cap: int = ds.DEFAULT_MEM_CAP
    version: str = FORMAT_VERSION

    @classmethod
    def from_dict(cls, subcommand: str, values: dict[str, Any]) -> "RunConfig":
        if subcommand not in SCHEMA:
            raise ConfigError(f"subcommand: unknown value {subcommand!r}")
        schema = SCHEMA[subcommand]
        errors = []
        params: dict[str, Any] = {}
        glob: dict[str, Any] = {}
        for key, value in values.items():
            key = key.replace("-", "_")
            if key == "version":
                if value != FORMAT_VERSION:
                    errors.append(f"version: expected {FORMAT_VERSION!r}, got {value!r}")
                continue
            target = schema.get(key) or GLOBAL_KEYS.get(key)
            if target is None:
                errors.append(f"{key}: unknown key for {subcommand}")
                continue
            typ, _ = target
            try:
                conv = value if value is None else typ(value)
            except (TypeError, ValueError):
                errors.append(f"{key}: expected {typ.__name__}, got {value!r}")
                continue
            (params if key in schema else glob)[key] = conv
        for key, (_, default) in schema.items():
            params.setdefault(key, default)
        if errors:
            raise ConfigError("; ".join(errors))
        cfg = cls(subcommand, params, **{k: glob.get(k, d) for k, (_, d) in GLOBAL_KEYS.items()})
        cfg.validate()
        return cfg

    def validate(self) -> None:
        p = self.params
        errors = []

        def need(cond, msg):
            if not cond:
                errors.append(msg)

        if "d" in p:
            lo = 2 if self.subcommand in ("relations",) else 3
            need(p["d"] >= lo, f"d: must be >= {lo}")
        if "alpha" in p:
            need(0 < p["alpha"] < 1, "alpha: must lie in (0, 1)")
        if "eps" in p:
            need(p["eps"] > 0, "eps: must be positive")
        for key in ("n", "kmax", "levels", "radius", "pairs", "samples", "windows"):
            if key in p:
                need(p[key] >= 1, f"{key}: must be positive")
        if "scheme" in p:
            need(p["scheme"] in ("b", "c"), "scheme: must be 'b' or 'c'")
        if "layout" in p:
            need(p["layout"] in ("binary", "simple"), "layout: must be 'binary' or 'simple'")
        if "pick" in p:
            need(p["pick"] in ("lowest", "highest"), "pick: must be 'lowest' or 'highest'")
        if self.subcommand in ("lalpha", "verify-certificate"):
            need(p["certificate"], "certificate: path required")
        need(self.mem_cap > 0, "mem_cap: must be positive")
        if errors:
            raise ConfigError("; ".join(errors))


@dataclass
class RunResult:
    ok: bool
    text: str = ""
    summary: list[str] = field(default_factory=list)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# --- subcommands -----------------------------------------------------------------------


def _orbit_growth(cfg: RunConfig) -> RunResult:
    p = cfg.params
    c = og.ball_census(p["d"], p["n"], mem_cap=cfg.mem_cap)
    ok = c.complete
    summary = [] if c.complete else [f"census stopped at radius {c.last_radius} (memory cap)"]
    rows = []
    for n, b, s in c.rows():
        if p["d"] == 3:
            cf = og.closed_form_d3(n)
            ok &= b == cf
            rows.append((n, b, s, cf))
        else:
            rows.append((n, b, s))
    header = ["radius", "ball", "sphere"] + (["closed_form"] if p["d"] == 3 else [])
    if p["d"] == 3:
        summary.append("closed form " + ("matches" if ok else "MISMATCH"))
    if p["fit"]:
        lo, hi = (int(t) for t in p["fit"].split(","))
        summary.append(f"growth exponent over [{lo}, {hi}]: {og.growth_exponent_estimate(c, (lo, hi)):.4f}")
    return RunResult(ok, _csv(header, rows), summary)


def _markov_check(cfg: RunConfig) -> RunResult:
    p = cfg.params
    rep = mw.verify_equidistribution(p["kmax"])
    ctrl = mw.verify_equidistribution(p["kmax"], mw.perturbed_rule())
    control_ok = ctrl.first_failure is not None and ctrl.first_failure <= p["control"]
    rec = {
        "kmax": p["kmax"],
        "uniform": rep.success,
        "first_failure": rep.first_failure,
        "control_first_failure": ctrl.first_failure,
        "control_detected": control_ok,
    }
    return RunResult(rep.success and control_ok, sm.dumps_jsonl([rec]))


def _decompose(cfg: RunConfig) -> RunResult:
    p = cfg.params
    N, M = p["N"], p["M"]
    fam = pd.build_paths(N, M, p["layout"])
    rng = np.random.default_rng(cfg.seed)
    span = 3 * fam.period
    v = np.arange(span + 1)
    labels = fam.path_of(v)
    jumps_ok = all(set(np.diff(v[labels == i]).tolist()) <= {1, M} for i in range(1, N + 1))
    windows = []
    for _ in range(p["windows"]):
        a, b = sorted(rng.integers(0, span, 2).tolist())
        r = pd.deviation(fam, a, b)
        windows.append({"K1": a, "K2": b, "spread": r.spread, "bound": r.bound, "within": r.within})
    pre = pd.prefix_deviation(fam, span)
    report = {
        "N": N,
        "M": M,
        "layout": fam.partition.layout,
        "degenerate": fam.degenerate,
        "jumps_ok": jumps_ok,
        "partition_ok": bool(np.all((labels >= 1) & (labels <= N))),
        "windows_within": all(w["within"] for w in windows),
        "prefix_spread": pre.spread,
        "prefix_bound": pre.bound,
        "prefix_within": pre.within,
    }
    if fam.partition.layout == "binary":
        report["s_sum_equals_q"] = sum(fam.partition.s) == fam.partition.q
    ok = all(v for k, v in report.items() if k.endswith(("_ok", "_within", "_equals_q")))
    text = sm.dumps_jsonl([{"family": fam.serialize()}, {"report": report}] + [{"window": w} for w in windows])
    return RunResult(bool(ok), text)


def _select_path(cfg: RunConfig) -> RunResult:
    p = cfg.params
    if p["d"] == 3:
        alpha_b = ds.DEFAULT_WEIGHT_ALPHA if p["alpha_b"] is None else p["alpha_b"]
        st = ds.select_paths_d3(p["alpha"], p["eps"], p["levels"], alpha_b, cfg.mem_cap, p["pick"])
        real = ds.realize_word(st)
        total = math.fsum(st.level_sums)
        bound = st.closed_form_bound()
        ok = total <= bound and all(r.ledger_bound >= 0.5 and r.density >= 0.5 for r in st.records)
        summary = [f"level total {total:.6g} <= closed form {bound:.6g}", f"word length {len(real.word)}"]
        return RunResult(ok, ds.write_certificate(st, real), summary)
    st = ds.select_paths_general(p["d"], p["alpha"], p["levels"], p["alpha_b"], cfg.mem_cap)
    real = ds.realize_word(st)
    recs = [
        {"level": r.level, "path": r.path, "sum": r.path_sum, "threshold": r.threshold, "density": r.density, "bound": r.ledger_bound}
        for r in st.records
    ]
    recs.append({"word": ds.encode_word(real.word), "length": len(real.trajectory)})
    ok = all(r.density >= 0.5 for r in st.records)
    return RunResult(ok, sm.dumps_jsonl(recs))


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path) as fh:
        return fh.read()


def _lalpha(cfg: RunConfig) -> RunResult:
    p = cfg.params
    text = _read(p["certificate"])
    rep = ds.verify_certificate(text, recompute_normaliser=False)
    if not rep.ok:
        return RunResult(False, "", rep.failures())
    cert = ds.parse_certificate(text)
    w = cert["weights"]
    cols, rows = (int(t) for t in w["box"].split(","))
    scheme = im.choose_exponents_b(3, float(w["alpha_b"]))
    spec = ds.WeightSpec(scheme, float.fromhex(w["Z"]), ((0, cols), (0, rows)))
    word = ds.decode_word(cert["word"])
    traj = [(0, 0)]
    for let in word.letters:
        traj.append(ds.evaluate_word(ds.GeneratorWord((let,)), traj[-1]))
    alphas = [float(a) for a in p["alphas"].split(",")]
    weights = [ds.canonical_weight(spec, pt) for pt in traj]
    sums = {a: ds.lalpha_sum(traj, lambda q, _w=dict(zip(traj, weights)): _w[q], a) for a in alphas}
    ok = all(np.all(np.diff(s) >= 0) for s in sums.values())
    out = [(k, x, y, *(repr(float(sums[a][k + 1])) for a in alphas)) for k, (x, y) in enumerate(traj)]
    return RunResult(ok, _csv(["step", "x", "y"] + [f"alpha={a}" for a in alphas], out))


def _scheme(p):
    if p["scheme"] == "b":
        s = im.choose_exponents_b(p["d"], p["alpha"])
        return s, im.validate_b(s)
    s = im.choose_exponents_c(p["d"], p["alpha"])
    return s, im.validate_c(s)


def _maps_for(scheme, fam):
    if isinstance(scheme, im.LengthSchemeB):
        return sm.nilpotent_maps(scheme, fam)
    return sm.metabelian_maps(scheme, fam)


def _build_maps(cfg: RunConfig) -> RunResult:
    p = cfg.params
    scheme, failures = _scheme(p)
    fam = sm.family_for(scheme, p["radius"])
    if isinstance(scheme, im.LengthSchemeB):
        exps = {"p": [str(im.exact(x)) for x in scheme.p]}
    else:
        exps = {"q": str(im.exact(scheme.q)), "p": str(im.exact(scheme.p))}
    recs = [{"scheme": p["scheme"], **exps, "failures": failures, "intervals": len(fam)}]
    for name, m in sorted(_maps_for(scheme, fam).items()):
        dom = m.mask
        recs.append(
            {
                "map": name,
                "domain": int(dom.sum()),
                "max_abs_t": float(np.abs(m.t[dom]).max()) if dom.any() else 0.0,
                "max_abs_log_scale": float(np.abs(m.log_scale[dom]).max()) if dom.any() else 0.0,
            }
        )
    if p["family_out"]:
        with open(p["family_out"], "w") as fh:
            fh.write(_csv([f"i{k + 1}" for k in range(fam.dim)] + ["length", "left", "right"], [(*r[:-3], repr(r[-3]), repr(r[-2]), repr(r[-1])) for r in fam.to_rows()]))
    return RunResult(not failures, sm.dumps_jsonl(recs))


def _holder(cfg: RunConfig) -> RunResult:
    p = cfg.params
    scheme, failures = _scheme(p)
    names = p["maps"].split(",") if p["maps"] else None
    radii = [p["radius"], 2 * p["radius"]] if p["double"] else [p["radius"]]
    recs, seminorms = [], {}
    for r in radii:
        maps = _maps_for(scheme, sm.family_for(scheme, r))
        for name in names or sorted(k for k in maps if not k.endswith("^-1")):
            est = sm.holder_seminorm(maps[name], p["alpha"], p["pairs"], cfg.seed)
            seminorms.setdefault(name, []).append(est.seminorm)
            for rec in est.records(name):
                rec["radius"] = r
                recs.append(rec)
            recs.append({"map": name, "radius": r, "alpha": p["alpha"], "seminorm": est.seminorm, "envelope_constant": est.envelope_constant()})
    ok = not failures and all(math.isfinite(v) for s in seminorms.values() for v in s)
    summary = []
    if p["double"]:
        for name, (a, b) in seminorms.items():
            ratio = b / a if a else (1.0 if b == 0 else math.inf)
            ok &= ratio <= p["limit"]
            summary.append(f"{name}: {a:.4g} -> {b:.4g} (ratio {ratio:.3f})")
    return RunResult(ok, sm.dumps_jsonl(recs), summary)


def _relations(cfg: RunConfig) -> RunResult:
    p = cfg.params
    scheme = im.choose_exponents_c(p["d"], p["alpha"])
    failures = im.validate_c(scheme)
    fam = sm.family_for(scheme, p["radius"])
    res = sm.verify_relations(sm.metabelian_maps(scheme, fam), sm.metabelian_relations(p["d"]), p["samples"], cfg.seed)
    recs = [r.record() for r in res]
    ok = not failures and all(r.index_ok and r.pointwise_sup <= p["tol"] for r in res)
    return RunResult(ok, sm.dumps_jsonl(recs))


def _verify(cfg: RunConfig) -> RunResult:
    p = cfg.params
    rep = ds.verify_certificate(_read(p["certificate"]), recompute_normaliser=not p["skip_normaliser"])
    recs = [{"check": name, "ok": ok, "detail": detail} for name, ok, detail in rep.checks]
    summary = [f"{sum(ok for _, ok, _ in rep.checks)}/{len(rep.checks)} checks passed"] + rep.failures()
    return RunResult(rep.ok, sm.dumps_jsonl(recs), summary)


HANDLERS = {
    "orbit-growth": _orbit_growth,
    "markov-check": _markov_check,
    "decompose": _decompose,
    "select-path": _select_path,
    "lalpha": _lalpha,
    "build-maps": _build_maps,
    "holder": _holder,
    "relations": _relations,
    "verify-certificate": _verify,
}

MODULE_ERRORS = (
    ValueError,
    ArithmeticError,
    MemoryError,
    RuntimeError,
    OSError,
)


def run(subcommand: str, config: RunConfig | dict) -> tuple[int, RunResult]:
    cfg = config if isinstance(config, RunConfig) else RunConfig.from_dict(subcommand, config)
    res = HANDLERS[subcommand](cfg)
    if cfg.out == "-":
        sys.stdout.write(res.text)
    else:
        with open(cfg.out, "w") as fh:
            fh.write(res.text)
    for line in res.summary:
        print(line, file=sys.stderr)
    return (0 if res.ok else 1), res


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nilreg", description=__doc__)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None, help="output file ('-' for stdout)")
    parser.add_argument("--mem-cap", type=int, default=None, help="largest number of lattice points held at once")
    parser.add_argument("--config", default=None, help="JSON file with parameters for the subcommand")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, schema in SCHEMA.items():
        sp = sub.add_parser(name)
        if name in ("lalpha", "verify-certificate"):
            sp.add_argument("certificate", nargs="?" if name == "lalpha" else None)
        for key, (typ, _) in schema.items():
            if key == "certificate":
                continue
            flag = "--" + key.replace("_", "-")
            if typ is bool:
                sp.add_argument(flag, action="store_true", default=None)
            else:
                sp.add_argument(flag, type=typ, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    values: dict[str, Any] = {}
    if args.config:
        with open(args.config) as fh:
            values.update(json.load(fh))
    for key, val in vars(args).items():
        if key in ("subcommand", "config") or val is None:
            continue
        values[key] = val
    try:
        cfg = RunConfig.from_dict(args.subcommand, values)
        code, _ = run(args.subcommand, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MODULE_ERRORS as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())
