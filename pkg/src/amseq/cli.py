"""amseq command line: classify | verify | member | construct."""
from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Tuple

import mpmath

from . import __version__
from . import classify as C
from . import constructions as K
from . import ideals
from . import suites
from .classify import FAILS, HOLDS, INCONCLUSIVE
from .report import Report, verdict_of
from .sequence import SummabilityError, TailUnavailable, compile_expr, to_mpq
from .spec_lang import ParseError, PrefixFileError, parse_with_notes, to_string

ENV_PREFIX = "AMSEQ_"

# name -> (default, converter); window None means the per-sequence default
DEFAULTS = {
    "window": None,
    "mmax": ideals.M_MAX,
    "tol": 1e-12,
    "jobs": os.cpu_count() or 1,
    "horizon": 10 ** 4,
    "monotonize": False,
    "format": "json",
}

CONSTRUCTIONS = ("ex45iii", "ex422", "lemma47", "thm78xi", "thm78family", "remark42")


class ConfigError(ValueError):
    pass


def _int(text) -> int:
    s = str(text).strip().replace("_", "")
    if "^" in s:
        b, e = s.split("^", 1)
        v = int(b) ** int(e)
    elif "e" in s.lower():
        v = int(float(s))
    else:
        v = int(s)
    if v < 1:
        raise ValueError(f"{text!r} must be a positive integer")
    return v


def _float(text) -> float:
    v = float(text)
    if not v > 0:
        raise ValueError(f"{text!r} must be positive")
    return v


def _bool(text) -> bool:
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _fmt(text) -> str:
    s = str(text).strip().lower()
    if s not in ("json", "pretty"):
        raise ValueError(f"format must be json or pretty, not {text!r}")
    return s


CONVERT = {"window": _int, "mmax": _int, "tol": _float, "jobs": _int, "horizon": _int, "monotonize": _bool, "format": _fmt}


def resolve_config(args: argparse.Namespace, environ=None) -> Tuple[dict, dict]:
    """flags > AMSEQ_* environment > defaults; returns (values, sources)."""
    environ = os.environ if environ is None else environ
    values, sources = {}, {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        env = environ.get(ENV_PREFIX + key.upper())
        if flag is not None:
            raw, src = flag, "flag"
        elif env is not None:
            raw, src = env, "env"
        else:
            values[key], sources[key] = default, "default"
            continue
        try:
            values[key] = CONVERT[key](raw)
        except ValueError as exc:
            where = f"--{key}" if src == "flag" else ENV_PREFIX + key.upper()
            raise ConfigError(f"{where}: {exc}") from None
        sources[key] = src
    return values, sources


def _config_block(values: dict, sources: dict) -> dict:
    shown = dict(values)
    if shown["window"] is None:
        shown["window"] = "auto"
    return {
        "values": shown,
        "sources": sources,
        "defaults": {k: ("auto" if v is None else v) for k, v in DEFAULTS.items()},
        "version": __version__,
    }


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--window", help="probe window (integer or 2^k); default depends on the sequence")
    common.add_argument("--mmax", help="largest ampliation factor tried in membership searches")
    common.add_argument("--tol", help="relative slack for bracketed comparisons")
    common.add_argument("--jobs", help="worker processes for verify suites")
    common.add_argument("--horizon", help="index horizon for suites and the lemma47 construction")
    common.add_argument("--monotonize", action="store_const", const=True, default=None, help="monotonize prefix files")
    fmt = common.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="format", action="store_const", const="json", help="JSON report (default)")
    fmt.add_argument("--pretty", dest="format", action="store_const", const="pretty", help="human readable report")

    p = argparse.ArgumentParser(prog="amseq", description="Arithmetic-mean sequence calculus for principal ideals.")
    p.add_argument("--version", action="version", version=f"amseq {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("classify", parents=[common], help="classify a sequence spec")
    c.add_argument("spec")
    v = sub.add_parser("verify", parents=[common], help="run a property suite")
    v.add_argument("suite", help=", ".join(suites.SUITES + ("all",)))
    m = sub.add_parser("member", parents=[common], help="is eta in the principal ideal generated by xi")
    m.add_argument("eta")
    m.add_argument("xi")
    k = sub.add_parser("construct", parents=[common], help="run a certified construction")
    k.add_argument("name", help=", ".join(CONSTRUCTIONS))
    k.add_argument("params", nargs="*", help="key=value parameters")
    k.add_argument("--dump", metavar="PATH", help="write a prefix of the constructed sequence")
    k.add_argument("--dump-len", type=int, default=1000, metavar="N")
    return p


# --------------------------------------------------------------------------
# commands


def _parse_spec(text: str, cfg: dict, rep: Report, key: str):
    expr, notes = parse_with_notes(text, base_dir=os.getcwd(), monotonize=cfg["monotonize"])
    rep.notes.extend(notes)
    rep.inputs[key + "_normalized"] = to_string(expr)
    return expr


def _run(rep: Report, op: str, fn, verdict=None):
    """Run one operation, downgrading applicability errors to 'skipped'."""
    t0 = time.perf_counter()
    try:
        out = fn()
    except (SummabilityError, TailUnavailable, ValueError) as exc:
        rep.add(op, "skipped", reason=str(exc))
        return None
    finally:
        rep.wall_time[op] = time.perf_counter() - t0
    result = out.to_dict() if hasattr(out, "to_dict") else out
    rep.add(op, "ran", verdict(out) if verdict else getattr(out, "verdict", None), result)
    return out


def cmd_classify(args, cfg: dict, rep: Report):
    expr = _parse_spec(args.spec, cfg, rep, "spec")
    seq = compile_expr(expr)
    W = cfg["window"]
    summ = C.symbolic_summability(seq)
    rep.add("symbolic_summability", "ran", verdict_of(summ), {"value": summ})
    _run(rep, "delta_half", lambda: C.check_delta_half(seq, W))
    _run(rep, "regular", lambda: C.check_regular(seq, W))
    if summ == "yes":
        _run(rep, "infty_regular", lambda: C.check_infty_regular(seq, W))
    else:
        rep.add("infty_regular", "skipped", reason=f"summability {summ}")
    _run(rep, "matuszewska_indices", lambda: C.matuszewska_indices(seq, W))
    _run(rep, "analytic_bounds", lambda: dict(zip(("alpha_upper", "beta_lower"), C.analytic_bounds(seq, W))))
    if summ == "yes":
        _run(rep, "cross_check_412", lambda: C.cross_check_412(seq, W))
    else:
        rep.add("cross_check_412", "skipped", reason=f"summability {summ}")
    ideal = ideals.PrincipalIdeal(seq, cfg["mmax"], W)
    _run(
        rep,
        "trace_dimension",
        lambda: ideals.trace_dimension(ideal, W, cfg["mmax"]),
        verdict=lambda tv: INCONCLUSIVE if tv.value == "unknown" else HOLDS,
    )


def _run_one_suite(name: str, cfg: dict):
    res = suites.run_suite(name, cfg)
    return name, res.to_dict(), res.seconds


def cmd_verify(args, cfg: dict, rep: Report):
    names = suites.expand(args.suite)
    scfg = {"window": cfg["window"], "tol": cfg["tol"], "horizon": cfg["horizon"]}
    jobs = min(cfg["jobs"], len(names))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_run_one_suite, names, [scfg] * len(names)))
    else:
        done = [_run_one_suite(n, scfg) for n in names]
    # report order follows the suite list, not completion order
    for name, body, secs in sorted(done, key=lambda t: names.index(t[0])):
        rep.wall_time[name] = secs
        body["failed"] = [c["name"] for c in body["checks"] if c["verdict"] == FAILS]
        rep.add(name, "ran", body["verdict"], body)
        if body["verdict"] == FAILS:
            rep.hard_failure = True


def cmd_member(args, cfg: dict, rep: Report):
    eta = compile_expr(_parse_spec(args.eta, cfg, rep, "eta"))
    xi = compile_expr(_parse_spec(args.xi, cfg, rep, "xi"))
    ideal = ideals.PrincipalIdeal(xi, cfg["mmax"], cfg["window"])
    r = _run(rep, "member", lambda: ideals.member(eta, ideal, cfg["mmax"], cfg["window"]))
    if r is not None and r.verdict == HOLDS:
        rep.operations[-1]["result"]["m"] = r.stats.get("m")
    _run(rep, "se_member", lambda: ideals.se_member(eta, ideal, cfg["mmax"], cfg["window"]))


def _params(pairs: List[str]) -> Dict[str, str]:
    out = {}
    for p in pairs:
        if "=" not in p:
            raise ConfigError(f"construction parameter {p!r} is not key=value")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _take(params: dict, allowed: dict) -> dict:
    extra = sorted(set(params) - set(allowed))
    if extra:
        raise ConfigError(f"unknown parameter(s) {', '.join(extra)}; allowed: {', '.join(sorted(allowed))}")
    out = {}
    for k, (conv, default) in allowed.items():
        out[k] = conv(params[k]) if k in params else default
    return out


def _construct(name: str, params: dict, cfg: dict):
    """Returns (primary sequence, certificate, resolved params)."""
    if name == "ex45iii":
        p = _take(params, {"K": (int, 12), "rule": (str, "ex45iii")})
        expr, cert = K.example_45_iii(p["rule"], K=p["K"])
        return compile_expr(expr), cert, p
    if name == "ex422":
        p = _take(params, {"K": (int, 6), "probes": (int, 1000)})
        expr, cert = K.example_422(p["K"], p["probes"])
        return compile_expr(expr), cert, p
    if name == "lemma47":
        p = _take(
            params,
            {"xi": (str, "omega^0.9"), "alpha": (str, "omega^0.1"), "blocks": (int, 20), "horizon": (int, cfg["horizon"])},
        )
        eta, cert = K.lemma_47_block_eta(p["xi"], p["alpha"], horizon=p["horizon"], blocks=p["blocks"])
        return eta, cert, p
    if name == "thm78xi":
        p = _take(params, {"mu": (str, "omega^0.5"), "L": (int, K.LEVELS)})
        xi, _, cert = K.theorem_78_xi(p["mu"], p["L"])
        return xi, cert, p
    if name == "thm78family":
        p = _take(
            params,
            {"mu": (str, "omega^0.5"), "L": (int, K.LEVELS), "N": (int, 3), "K": (int, 8), "which": (int, 0)},
        )
        xi, plist, _ = K.theorem_78_xi(p["mu"], p["L"])
        etas, cert = K.theorem_78_family(xi, plist, N=p["N"], K=p["K"])
        j = p["which"] or p["N"]
        if not 1 <= j <= p["N"]:
            raise ConfigError(f"which={j} must lie in 1..{p['N']}")
        return etas[j - 1], cert, p
    if name == "remark42":
        p = _take(params, {"j": (int, 5)})
        xi, cert = K.remark_42_witness(p["j"])
        return xi, cert, p
    raise ConfigError(f"unknown construction {name!r}; choose from {', '.join(CONSTRUCTIONS)}")


def write_prefix(seq, path: str, n: int):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {seq.label}: first {n} values\n")
        for i in range(1, n + 1):
            v = seq.value(i)
            if seq.exact_values:
                q = to_mpq(v)
                fh.write(f"{q.numerator}/{q.denominator}\n" if q.denominator != 1 else f"{q.numerator}\n")
            else:
                with mpmath.workdps(40):
                    fh.write(mpmath.nstr(mpmath.mpf(v), 30, min_fixed=-mpmath.inf, max_fixed=mpmath.inf) + "\n")


def cmd_construct(args, cfg: dict, rep: Report):
    params = _params(args.params)
    t0 = time.perf_counter()
    try:
        seq, cert, resolved = _construct(args.name, params, cfg)
    except K.ConstructionError as exc:
        rep.wall_time[args.name] = time.perf_counter() - t0
        rep.add(args.name, "error", FAILS, exc.certificate.to_dict() if exc.certificate else None, reason=str(exc))
        return
    rep.wall_time[args.name] = time.perf_counter() - t0
    rep.inputs["params"] = resolved
    body = cert.to_dict()
    body["failed"] = cert.failures
    rep.add(args.name, "ran", HOLDS if cert.ok else FAILS, body)
    if not cert.ok:
        rep.hard_failure = True
    if args.dump:
        write_prefix(seq, args.dump, args.dump_len)
        rep.notes.append(f"wrote {args.dump_len} values of {seq.label} to {args.dump}")


COMMANDS = {"classify": cmd_classify, "verify": cmd_verify, "member": cmd_member, "construct": cmd_construct}


def run(argv: Optional[List[str]] = None, environ=None) -> Report:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    inputs = {k: getattr(args, k) for k in ("spec", "suite", "eta", "xi", "name", "params") if hasattr(args, k)}
    try:
        values, sources = resolve_config(args, environ)
    except ConfigError as exc:
        rep = Report(args.command, inputs, {})
        rep.fail("config", str(exc))
        rep.wall_time["total"] = time.perf_counter() - t0
        return rep
    rep = Report(args.command, inputs, _config_block(values, sources))
    rep.format = values["format"]
    try:
        COMMANDS[args.command](args, values, rep)
    except ParseError as exc:
        rep.fail("parse", str(exc), position=exc.pos)
    except PrefixFileError as exc:
        rep.fail("prefix_file", str(exc))
    except (ConfigError, ValueError, TypeError, OSError) as exc:
        rep.fail(type(exc).__name__, str(exc))
    rep.wall_time["total"] = time.perf_counter() - t0
    return rep


def main(argv: Optional[List[str]] = None) -> int:
    rep = run(argv)
    print(rep.to_text() if rep.format == "pretty" else rep.to_json())
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
