"""Command-line entry point: ``aicon bw|drawer|gradcheck|report``.

Exit codes: 0 success, 1 domain failure (unsolved instance, failed episode,
Jacobian mismatch), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .blocksworld import BwError, load_instance, solve
from .blocksworld import bench as bwb
from .blocksworld.network import build_bw_graph
from .drawer import bench as db
from .drawer.episode import MODES, phases, run_episode
from .drawer.network import build_drawer_network, drawer_sampler
from .drawer.scenario import (
    PRESETS,
    ablation_conditions,
    load_conditions,
    load_scenario,
    scenario_from_mapping,
    tomllib,
)
from .drawer.sim import ScenarioError
from .estimation import EstimationError
from .gradcheck import bw_sampler, check_graph
from .graph import GraphError

log = logging.getLogger("aicon")

OUT_ENV = "AICON_OUT_DIR"
DEFAULT_OUT = "aicon-out"
CONFIG_ERRORS = (ScenarioError, BwError, GraphError, EstimationError, FileNotFoundError, NotADirectoryError)


class UsageError(Exception):
    pass


# --- helpers -------------------------------------------------------------------


def out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


def _output(path: str | None, default_name: str) -> Path:
    p = Path(path) if path else out_dir() / default_name
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: Path, writer) -> None:
    import io

    buf = io.StringIO()
    writer(buf)
    _atomic_write(path, buf.getvalue())


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(outputs: list[Path], argv: list[str], config: object, seeds, started: str,
                   overrides: list[str] | None = None, outputs_list=None) -> Path:
    """``<first output>.manifest.json``, written atomically after the results."""
    blob = json.dumps(config, sort_keys=True, default=str)
    manifest = {
        "command": ["aicon", *argv],
        "config_hash": hashlib.sha256(blob.encode()).hexdigest(),
        "config": json.loads(blob),
        "overrides": list(overrides or []),
        "seeds": list(seeds),
        "engine_version": __version__,
        "started": started,
        "finished": _now(),
        "outputs": [str(p) for p in (outputs_list or outputs)],
    }
    path = outputs[0].with_name(outputs[0].name + ".manifest.json")
    _atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _parse_overrides(items: list[str]) -> dict:
    """``key=value`` pairs in TOML syntax, dotted keys allowed (``network.sigma_grip=0.004``)."""
    out: dict = {}
    for item in items:
        if "=" not in item:
            raise UsageError(f"override {item!r} is not key=value")
        try:
            data = tomllib.loads(item)
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"override {item!r}: {exc}") from None
        for k, v in data.items():
            if isinstance(v, dict) and isinstance(out.get(k), dict):
                out[k].update(v)
            else:
                out[k] = v
    return out


def _scenario(spec: str, overrides: dict):
    """A preset name or a TOML scenario file, with CLI overrides on top."""
    if spec in PRESETS:
        base = {"preset": spec}
    else:
        base_sc = load_scenario(spec)
        base = base_sc.to_dict()
    return scenario_from_mapping({**base, **overrides})


def _conditions(spec: str, overrides: dict):
    if spec == "ablation":
        conds = ablation_conditions()
    elif spec in PRESETS:
        conds = [PRESETS[spec]()]
    elif "," in spec and all(s in PRESETS for s in _names(spec)):
        conds = [PRESETS[s]() for s in _names(spec)]
    else:
        conds = load_conditions(spec)
    if overrides:
        conds = [scenario_from_mapping({**c.to_dict(), **overrides}) for c in conds]
    return conds


# --- bw ------------------------------------------------------------------------


def cmd_bw_generate(args, argv) -> int:
    started = _now()
    insts = bwb.generate_instances(args.count, tuple(args.blocks), tuple(args.towers), args.seed)
    target = Path(args.out) if args.out else out_dir() / "corpus"
    paths = bwb.write_corpus(insts, target)
    write_manifest([target / "corpus"], argv, vars_of(args), [args.seed], started, outputs_list=paths)
    print(f"wrote {len(paths)} instances to {target}")
    return 0


def vars_of(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def cmd_bw_solve(args, argv) -> int:
    prob = load_instance(args.file)
    sol = solve(prob.initial, prob.goal.with_mode(args.variant), seed=args.seed)
    print(f"{prob.id}: {sol.status} in {sol.steps} steps")
    for a in sol.actions:
        print(f"  {a}")
    if args.trace:
        started = _now()
        path = _output(args.trace, "solve.csv")
        _write_csv(path, sol.write_csv)
        write_manifest([path], argv, vars_of(args), [args.seed], started)
    return 0 if sol.status == "solved" else 1


def _corpus_digest(corpus) -> str:
    h = hashlib.sha256()
    for inst in sorted(corpus, key=lambda i: i.id):
        h.update(repr((inst.id, inst.initial, inst.goal)).encode())
    return h.hexdigest()


def cmd_bw_bench(args, argv) -> int:
    started = _now()
    corpus = bwb.read_corpus(args.corpus)
    seeds = list(range(args.seed, args.seed + args.repeats))
    variants = _names(args.variants)
    for v in variants:
        if v not in ("naive", "interconnected"):
            raise UsageError(f"unknown variant {v!r}")
    records, summary = bwb.run_benchmark(corpus, variants, seeds, workers=args.workers)
    path = _output(args.out, "bw_results.csv")
    _write_csv(path, lambda fh: bwb.write_results(fh, records))
    config = {**vars_of(args), "corpus_digest": _corpus_digest(corpus)}
    write_manifest([path], argv, config, seeds, started)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0 if all(r.solved for r in records) else 1


# --- drawer --------------------------------------------------------------------


def cmd_drawer_run(args, argv) -> int:
    started = _now()
    overrides = _parse_overrides(args.set)
    sc = _scenario(args.scenario, overrides)
    if args.mode not in MODES:
        raise UsageError(f"unknown mode {args.mode!r}")
    res = run_episode(sc, args.mode, args.seed)
    print(f"{sc.name} {args.mode} seed={args.seed}: {res.status} after {res.ticks} ticks, "
          f"|q - goal| = {res.final_q_error:.4f} m, jerk = {res.jerk:.3f}")
    runs = phases(res.behavior_trace)
    print("phases: " + " > ".join(f"{lab}[{a}-{b}]" for lab, a, b in runs))
    if args.trace:
        path = _output(args.trace, "trace.csv")
        _write_csv(path, res.write_trace)
        write_manifest([path], argv, sc.to_dict(), [args.seed], started, args.set)
    return 0 if res.success else 1


def cmd_drawer_bench(args, argv) -> int:
    started = _now()
    overrides = _parse_overrides(args.set)
    conds = _conditions(args.conditions, overrides)
    modes = _names(args.modes)
    for m in modes:
        if m not in MODES:
            raise UsageError(f"unknown mode {m!r}; expected a subset of {', '.join(MODES)}")
    t0 = time.time()
    records, summary = db.run_drawer_bench(conds, modes, args.trials, args.seed, workers=args.workers)
    path = _output(args.out, "drawer_results.csv")
    _write_csv(path, lambda fh: db.write_results(fh, records))
    config = {"conditions": [c.to_dict() for c in conds], "modes": modes, "trials": args.trials}
    write_manifest([path], argv, config, [args.seed + k for k in range(args.trials)], started, args.set)
    print(json.dumps(summary, indent=2, sort_keys=True))
    log.info("bench finished in %.1f s", time.time() - t0)
    return 0 if all(r.success for r in records) else 1


def cmd_drawer_field(args, argv) -> int:
    started = _now()
    overrides = _parse_overrides(args.set)
    sc = _scenario(args.scenario, overrides)
    plane = db.Plane(args.plane, tuple(args.lo), tuple(args.hi), tuple(args.n))
    rows = db.field_from_episode(sc, args.seed, args.tick, plane, args.mode)
    path = _output(args.out, "field.csv")
    _write_csv(path, lambda fh: db.write_field(fh, rows))
    write_manifest([path], argv, {"scenario": sc.to_dict(), "plane": vars(plane), "tick": args.tick},
                   [args.seed], started, args.set)
    counts: dict = {}
    for r in rows:
        counts[r[2]] = counts.get(r[2], 0) + 1
    print(f"wrote {len(rows)} grid points to {path}: " + ", ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    return 0


# --- gradcheck / report ------------------------------------------------------------


def gradcheck_results(seed: int, points: int = 100) -> dict:
    """Check every Jacobian of one Blocks World graph and one drawer graph."""
    inst = bwb.generate_instances(1, (6, 6), (2, 2), seed)[0]
    bw_graph = build_bw_graph(inst.initial)
    sc = PRESETS["nominal"]()
    cfg = sc.network_config()
    dr_graph = build_drawer_network(sc.prior(seed), cfg)
    return {
        "blocksworld": check_graph(bw_graph, bw_sampler(bw_graph), points=points, seed=seed),
        "drawer": check_graph(dr_graph, drawer_sampler(dr_graph, cfg), points=points, seed=seed),
    }


def cmd_gradcheck(args, argv) -> int:
    t0 = time.time()
    res = gradcheck_results(args.seed, args.points)
    failed = 0
    for domain, items in res.items():
        for r in items:
            ok = r.passed(args.rtol)
            failed += not ok
            if args.verbose or not ok:
                print(f"{'ok  ' if ok else 'FAIL'} {domain:12s} {r.item:40s} {r.worst:.2e}")
        worst = max(items, key=lambda r: r.worst)
        print(f"{domain}: {len(items)} Jacobians, worst {worst.item} at {worst.worst:.2e}")
    print(f"{'all pass' if not failed else f'{failed} failing'} (rtol {args.rtol:g}) in {time.time() - t0:.1f} s")
    return 0 if not failed else 1


def _schema(path: Path) -> str:
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), None)
    if header == bwb.RESULT_COLUMNS:
        return "bw"
    if header == db.BENCH_COLUMNS:
        return "drawer"
    raise UsageError(f"{path}: not a recognised results file (header {header})")


def aggregate_report(paths) -> dict:
    report: dict = {"blocksworld": {}, "drawer": {}}
    for p in sorted(Path(x) for x in paths):
        kind = _schema(p)
        if kind == "bw":
            report["blocksworld"][str(p)] = bwb.summarize(bwb.read_results(p))
        else:
            report["drawer"][str(p)] = db.summarize(db.read_results(p))
    return report


def render_report(report: dict) -> str:
    lines = []
    for path, summ in report["blocksworld"].items():
        lines.append(f"Blocks World  {path}")
        for v, s in summ.get("variants", {}).items():
            ex = "-" if s["mean_ratio_exact"] is None else f"{s['mean_ratio_exact']:.3f}"
            ub = "-" if s["mean_ratio_upper_bound"] is None else f"{s['mean_ratio_upper_bound']:.3f}"
            lines.append(f"  {v:15s} runs {s['runs']:4d}  solved {s['solve_rate']:6.1%}  "
                         f"ratio(exact) {ex}  ratio(bound) {ub}  max steps {s['max_steps']}")
    for path, summ in report["drawer"].items():
        lines.append(f"Drawer  {path}")
        for cond, modes in summ.items():
            for mode, s in modes.items():
                lines.append(f"  {cond:18s} {mode:24s} {s['successes']:3d}/{s['runs']:<3d} "
                             f"ticks {s['mean_ticks']:7.1f}  jerk {s['mean_jerk']:8.3f}  "
                             f"|dq| {s['mean_final_q_error']:.4f}")
    return "\n".join(lines) + "\n"


def cmd_report(args, argv) -> int:
    report = aggregate_report(args.files)
    text = render_report(report)
    sys.stdout.write(text)
    if args.json:
        _atomic_write(Path(args.json), json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aicon", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"aicon {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    bw = sub.add_parser("bw", help="Blocks World corpus, solver and benchmark").add_subparsers(
        dest="bw_command", required=True)
    g = bw.add_parser("generate", help="write a random instance corpus")
    g.add_argument("--count", type=int, default=130)
    g.add_argument("--blocks", type=int, nargs=2, default=[10, 30], metavar=("MIN", "MAX"))
    g.add_argument("--towers", type=int, nargs=2, default=[0, 15], metavar=("MIN", "MAX"))
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", help=f"corpus directory (default ${OUT_ENV}/corpus)")
    g.set_defaults(func=cmd_bw_generate)
    s = bw.add_parser("solve", help="solve one instance file")
    s.add_argument("file")
    s.add_argument("--variant", choices=["naive", "interconnected"], default="interconnected")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trace", help="write the action sequence as CSV")
    s.set_defaults(func=cmd_bw_solve)
    b = bw.add_parser("bench", help="solve a corpus with both variants")
    b.add_argument("corpus")
    b.add_argument("--variants", default="naive,interconnected")
    b.add_argument("--seed", type=int, required=True, help="first tie-break seed")
    b.add_argument("--repeats", type=int, default=1, help="number of consecutive seeds")
    b.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    b.add_argument("--out", help="results CSV")
    b.set_defaults(func=cmd_bw_bench)

    dr = sub.add_parser("drawer", help="drawer-opening episodes").add_subparsers(dest="drawer_command", required=True)
    r = dr.add_parser("run", help="run one episode")
    r.add_argument("scenario", help=f"preset ({', '.join(PRESETS)}) or TOML file")
    r.add_argument("--mode", default="full", choices=MODES)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--trace", help="per-tick trace CSV")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a scenario field")
    r.set_defaults(func=cmd_drawer_run)
    b = dr.add_parser("bench", help="conditions x modes x trials")
    b.add_argument("--conditions", required=True,
                   help="conditions TOML, a preset name, comma-separated presets, or 'ablation'")
    b.add_argument("--modes", default="full")
    b.add_argument("--trials", type=int, default=10)
    b.add_argument("--seed", type=int, required=True, help="trial k uses seed + k")
    b.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    b.add_argument("--out", help="results CSV")
    b.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    b.set_defaults(func=cmd_drawer_bench)
    f = dr.add_parser("sample-field", help="steepest-path labels over a plane at one episode tick")
    f.add_argument("scenario")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--tick", type=int, required=True)
    f.add_argument("--mode", default="full", choices=["full", "sum_gradients", "frozen_interconnections"])
    f.add_argument("--plane", default="xz")
    f.add_argument("--lo", type=float, nargs=2, default=[0.2, 0.1])
    f.add_argument("--hi", type=float, nargs=2, default=[0.8, 0.6])
    f.add_argument("--n", type=int, nargs=2, default=[13, 11])
    f.add_argument("--out", help="grid CSV")
    f.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    f.set_defaults(func=cmd_drawer_field)

    gc = sub.add_parser("gradcheck", help="finite-difference check of every Jacobian")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--points", type=int, default=100)
    gc.add_argument("--rtol", type=float, default=1e-5)
    gc.add_argument("--verbose", action="store_true")
    gc.set_defaults(func=cmd_gradcheck)

    rp = sub.add_parser("report", help="summarise result CSVs")
    rp.add_argument("files", nargs="+")
    rp.add_argument("--json", help="also write the summary as JSON")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help, 2 for usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"aicon: {exc}", file=sys.stderr)
        return 2
    except CONFIG_ERRORS as exc:
        print(f"aicon: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
