"""Command line interface: simulate -> learn -> evaluate / predict, plus benchmark.

Every command writes a run manifest (JSON) next to its primary output that
records the argument vector, resolved parameters, input/output digests and
timing. ``fmpl replay MANIFEST --check`` re-executes a run and verifies that
the outputs are bit-identical.

Exit codes: 0 ok, 2 input error, 3 numerical failure, 4 non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .core import load_dataset, read_graph, scatter, write_graph, write_table
from .errors import FMPLError, InputError
from .evaluate import prediction_experiment, recovery_report
from .scoring import ScoreParams
from .search import METHODS, SearchConfig, assemble, learn_graph, search_all_blankets
from .synthgen import DEFAULT_BLOCKS, GeneratorSpec, composite_spec, simulate

log = logging.getLogger("fmpl")

MANIFEST_VERSION = 1
BENCHMARK_COLUMNS = ("p", "n", "method", "hamming", "tp", "fp", "seconds", "seeds_ok", "status")


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(path, obj):
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _write_manifest(path, command, argv, params, inputs, outputs, seed, started):
    manifest = {
        "argv": list(argv),
        "command": command,
        "cwd": os.getcwd(),
        "duration_seconds": round(time.perf_counter() - started, 6),
        "input_digests": {str(p): _digest(p) for p in inputs},
        "output_digests": {str(p): _digest(p) for p in outputs},
        "parameters": params,
        "seed": seed,
        "tool_version": __version__,
        "version": MANIFEST_VERSION,
    }
    _dump_json(path, manifest)
    return manifest


def _on_off(text: str) -> bool:
    t = text.strip().lower()
    if t in ("on", "true", "yes", "1"):
        return True
    if t in ("off", "false", "no", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {text!r}")


def _read_keyvalue(path) -> dict:
    """Line-oriented ``key = value`` config; '#' starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    for k, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{k}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _int_list(text: str) -> list[int]:
    """Parse ``"64,128"`` or ranges like ``"0-24"``."""
    vals = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                lo, hi = part.split("-", 1)
                vals.extend(range(int(lo), int(hi) + 1))
            else:
                vals.append(int(part))
        except ValueError:
            raise InputError(f"bad integer list {text!r}") from None
    if not vals:
        raise InputError(f"empty integer list {text!r}")
    return vals


def _score_params(args) -> ScoreParams:
    return ScoreParams(use_prior=args.prior, prior_a=args.prior_a, prior_b=args.prior_b)


def _default_sidecar(output, suffix):
    if output is None or str(output) == "-":
        return None
    base = str(output)
    if base.endswith(".json"):
        base = base[: -len(".json")]
    return base + suffix


# ---------------------------------------------------------------- commands


def cmd_learn(args, argv) -> int:
    started = time.perf_counter()
    data = load_dataset(Path(args.input), standardize=args.standardize)
    if data.n < 3:
        raise InputError(f"learning needs n >= 3, got {data.n}")
    config = SearchConfig(
        method=args.method,
        max_mb_size=args.max_mb,
        score_params=_score_params(args),
        parallelism=args.threads,
    )
    sc = scatter(data)
    graph, family, card = learn_graph(sc, config)

    params = {
        "input": str(args.input),
        "max_mb": config.max_mb_size,
        "max_mb_resolved": config.resolved_cap(sc),
        "method": config.method,
        "prior": config.score_params.use_prior,
        "prior_a": config.score_params.prior_a,
        "prior_b": config.score_params.prior_b,
        "standardize": args.standardize,
        "threads": args.threads,
    }
    graph_obj = graph.to_dict()
    graph_obj["version"] = MANIFEST_VERSION
    _dump_json(args.output, graph_obj)
    outputs = [] if args.output in (None, "-") else [args.output]
    scores_path = args.scores or _default_sidecar(args.output, ".scores.json")
    if scores_path:
        card_obj = card.to_dict()
        card_obj["blankets"] = [sorted(b) for b in family]
        card_obj["version"] = MANIFEST_VERSION
        _dump_json(scores_path, card_obj)
        outputs.append(scores_path)
    manifest = args.manifest or _default_sidecar(args.output, ".manifest.json")
    if manifest:
        _write_manifest(manifest, "learn", argv, params, [args.input], outputs, None, started)
    return 0


def _generator_spec(args) -> tuple[GeneratorSpec, int]:
    cfg = _read_keyvalue(args.config) if args.config else {}

    def pick(name, default, conv):
        val = getattr(args, name)
        if val is not None:
            return val
        if name in cfg:
            try:
                return conv(cfg[name])
            except ValueError:
                raise InputError(f"bad value for {name}: {cfg[name]!r}") from None
        return default

    blocks = pick("blocks", ",".join(DEFAULT_BLOCKS), str)
    kinds = tuple(k.strip() for k in blocks.split(",") if k.strip())
    block_size = pick("block_size", 8, int)
    seed = pick("seed", 0, int)
    p = pick("p", None, int)
    replication = pick("replication", None, int)
    if p is not None:
        if replication is not None and replication * block_size * len(kinds) != p:
            raise InputError("p conflicts with replication x block_size x blocks")
        unit = block_size * len(kinds)
        if p % unit:
            raise InputError(f"p={p} is not a multiple of block_size x blocks = {unit}")
        replication = p // unit
    return GeneratorSpec(
        block_kinds=kinds,
        block_size=block_size,
        replication=replication or 1,
        seed=seed,
        offdiag_range=(pick("offdiag_lo", 0.1, float), pick("offdiag_hi", 0.9, float)),
        negative_fraction=pick("negative_fraction", 0.5, float),
        pd_margin=pick("pd_margin", 0.1, float),
    ), pick("n", 1000, int)


def cmd_simulate(args, argv) -> int:
    started = time.perf_counter()
    spec, n = _generator_spec(args)
    sim = simulate(spec, n)
    prefix = args.output
    data_path = f"{prefix}.csv"
    truth_path = f"{prefix}.truth.json"
    prec_path = f"{prefix}.precision.csv"
    Path(data_path).parent.mkdir(parents=True, exist_ok=True)
    write_table(data_path, sim.data.values, header=[f"x{j}" for j in range(spec.p)])
    write_graph(truth_path, sim.graph)
    write_table(prec_path, sim.model.omega)
    params = {
        "block_kinds": list(spec.block_kinds),
        "block_size": spec.block_size,
        "n": n,
        "negative_fraction": spec.negative_fraction,
        "offdiag_range": list(spec.offdiag_range),
        "p": spec.p,
        "pd_margin": spec.pd_margin,
        "replication": spec.replication,
        "rng": "numpy PCG64",
    }
    inputs = [args.config] if args.config else []
    _write_manifest(f"{prefix}.manifest.json", "simulate", argv, params, inputs,
                    [data_path, truth_path, prec_path], spec.seed, started)
    return 0


def cmd_evaluate(args, argv) -> int:
    started = time.perf_counter()
    report = recovery_report(read_graph(args.truth), read_graph(args.learned))
    obj = report.to_dict()
    obj["version"] = MANIFEST_VERSION
    _dump_json(args.output, obj)
    manifest = args.manifest or _default_sidecar(args.output, ".manifest.json")
    if manifest:
        _write_manifest(manifest, "evaluate", argv, {}, [args.truth, args.learned],
                        [args.output], None, started)
    return 0


def cmd_predict(args, argv) -> int:
    started = time.perf_counter()
    train = load_dataset(Path(args.train), standardize=args.standardize)
    test = load_dataset(Path(args.test))
    graph = read_graph(args.graph)
    if graph.p != train.p or test.p != train.p:
        raise InputError("train, test and graph must have the same number of variables")
    result = prediction_experiment(train, test, graph, tol=args.tol, max_iter=args.max_iter,
                                   standardize=args.standardize)
    result["n_test"] = test.n
    result["n_train"] = train.n
    result["version"] = MANIFEST_VERSION
    _dump_json(args.output, result)
    manifest = args.manifest or _default_sidecar(args.output, ".manifest.json")
    if manifest:
        params = {"max_iter": args.max_iter, "standardize": args.standardize, "tol": args.tol}
        _write_manifest(manifest, "predict", argv, params,
                        [args.train, args.test, args.graph], [args.output], None, started)
    return 0


def run_benchmark(cfg: dict, threads: int = 1, timing: bool = True) -> list[dict]:
    """Run the (p, n, method) grid, averaging metrics over seeds.

    For each (p, seed) one dataset of max(n) rows is simulated; smaller
    sample sizes use its leading rows. The blanket search is shared by all
    methods of a cell; each method's time includes the search.
    """
    ps = _int_list(cfg.get("p", "64"))
    ns = _int_list(cfg.get("n", "4000"))
    seeds = _int_list(cfg.get("seeds", "0-4"))
    methods = [m.strip().lower() for m in cfg.get("methods", "or,and,hc").split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise InputError(f"unknown method {m!r} in benchmark config")
    block_size = int(cfg.get("block_size", 8))
    kinds = tuple(k.strip() for k in cfg.get("blocks", ",".join(DEFAULT_BLOCKS)).split(","))
    params = ScoreParams(
        use_prior=_on_off(cfg.get("prior", "on")),
        prior_a=float(cfg.get("prior_a", 0.5)),
        prior_b=float(cfg.get("prior_b", 0.5)),
    )
    standardize = _on_off(cfg.get("standardize", "on"))
    max_mb = int(cfg["max_mb"]) if "max_mb" in cfg else None

    acc = {(p, n, m): [] for p in ps for n in ns for m in methods}
    for p in ps:
        for seed in seeds:
            sim = simulate(composite_spec(p, seed, block_size, kinds), max(ns))
            for n in ns:
                data = sim.data.head(n)
                try:
                    if standardize:
                        data = data.standardize()
                    sc = scatter(data)
                    t0 = time.perf_counter()
                    family = search_all_blankets(
                        sc, SearchConfig("and", max_mb, params, threads)
                    )
                    t_search = time.perf_counter() - t0
                except FMPLError as exc:
                    log.warning("p=%d n=%d seed=%d failed: %s", p, n, seed, exc)
                    for m in methods:
                        acc[(p, n, m)].append(None)
                    continue
                for m in methods:
                    t1 = time.perf_counter()
                    try:
                        g = assemble(sc, family, SearchConfig(m, max_mb, params))
                    except FMPLError as exc:
                        log.warning("p=%d n=%d seed=%d %s failed: %s", p, n, seed, m, exc)
                        acc[(p, n, m)].append(None)
                        continue
                    secs = t_search + time.perf_counter() - t1
                    rep = recovery_report(sim.graph, g)
                    acc[(p, n, m)].append((rep.hamming, rep.tp_rate, rep.fp_rate, secs))
            log.info("p=%d seed=%d done", p, seed)

    rows = []
    for (p, n, m), results in acc.items():
        ok = [r for r in results if r is not None]
        row = {"p": p, "n": n, "method": m, "seeds_ok": len(ok)}
        if ok:
            arr = np.array(ok)
            row.update(hamming=float(arr[:, 0].mean()), tp=float(arr[:, 1].mean()),
                       fp=float(arr[:, 2].mean()),
                       seconds=float(arr[:, 3].mean()) if timing else 0.0)
        else:
            row.update(hamming=float("nan"), tp=float("nan"), fp=float("nan"),
                       seconds=float("nan"))
        failed = len(results) - len(ok)
        row["status"] = "ok" if failed == 0 else ("failed" if not ok else f"partial:{failed}_failed")
        rows.append(row)
    return rows


def cmd_benchmark(args, argv) -> int:
    started = time.perf_counter()
    cfg = _read_keyvalue(args.config)
    rows = run_benchmark(cfg, threads=args.threads, timing=args.timing)
    out = args.output
    fh = sys.stdout if out in (None, "-") else open(out, "w", newline="")
    try:
        w = csv.DictWriter(fh, fieldnames=BENCHMARK_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    finally:
        if fh is not sys.stdout:
            fh.close()
    manifest = args.manifest or (None if out in (None, "-") else f"{out}.manifest.json")
    if manifest:
        _write_manifest(manifest, "benchmark", argv, cfg, [args.config],
                        [] if out in (None, "-") else [out], None, started)
    return 0


def cmd_replay(args, argv) -> int:
    """Re-run a manifest's command; with --check, compare output digests."""
    try:
        manifest = json.loads(Path(args.manifest).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read manifest {args.manifest}: {exc}") from None
    if manifest.get("command") == "replay":
        raise InputError("refusing to replay a replay")
    here = os.getcwd()
    os.chdir(manifest.get("cwd", here))
    try:
        code = main(manifest["argv"])
        if code or not args.check:
            return code
        mismatched = [p for p, d in manifest.get("output_digests", {}).items() if _digest(p) != d]
    finally:
        os.chdir(here)
    for p in mismatched:
        log.error("output differs from manifest: %s", p)
    return 1 if mismatched else 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fmpl",
        description="Gaussian graphical model structure learning with "
        "fractional marginal pseudo-likelihood.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="learn a graph from a CSV dataset")
    p.add_argument("input")
    p.add_argument("--method", choices=METHODS, default="and")
    p.add_argument("--prior", type=_on_off, default=True, metavar="on|off")
    p.add_argument("--prior-a", type=float, default=0.5)
    p.add_argument("--prior-b", type=float, default=0.5)
    p.add_argument("--max-mb", type=int, default=None)
    p.add_argument("--standardize", type=_on_off, default=True, metavar="on|off")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-o", "--output", default="-", help="graph JSON path ('-' for stdout)")
    p.add_argument("--scores", default=None, help="score card JSON path")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("simulate", help="generate synthetic data and its true graph")
    p.add_argument("-o", "--output", required=True, help="output prefix")
    p.add_argument("--config", default=None, help="key=value generator config")
    p.add_argument("--blocks", default=None, help="comma list of block kinds")
    p.add_argument("--block-size", type=int, default=None)
    p.add_argument("--replication", type=int, default=None)
    p.add_argument("--p", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--offdiag-lo", type=float, default=None)
    p.add_argument("--offdiag-hi", type=float, default=None)
    p.add_argument("--negative-fraction", type=float, default=None)
    p.add_argument("--pd-margin", type=float, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="compare a learned graph to the truth")
    p.add_argument("truth")
    p.add_argument("learned")
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="MSE of graph-constrained MLE predictions")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--standardize", type=_on_off, default=True, metavar="on|off")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("benchmark", help="run a simulation grid from a config file")
    p.add_argument("config")
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--timing", type=_on_off, default=True, metavar="on|off",
                   help="off writes 0.0 seconds so the table is reproducible")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--check", action="store_true", help="verify output digests")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args, argv)
    except FMPLError as exc:
        err = {"error": exc.kind, "message": str(exc)}
        err.update(exc.details())
        sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": "input_error", "message": str(exc)}) + "\n")
        return InputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
