"""Command-line driver.

Every command writes into an output directory (``--out`` or $AVGDYN_OUT)
together with ``config.json``, the fully resolved arguments including the
seed. ``avgdyn --config DIR/config.json`` replays a run exactly.

Exit codes: 0 ok, 2 usage or parse error, 3 invalid/disconnected graph,
4 empty labeling window, 5 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from ._rng import derive_seed, fresh_seed
from .dynamics import (TransitionOperator, bipartite_alpha, bip_detection_round, canonical_variant,
                       check_sign_window, decompose_run, matches_partition_up_to_flip, run, verify_bounds)
from .errors import DisconnectedGraphError, EmptyWindowError, InvariantViolation
from .evaluation import (DEFAULT_ALPHA, DEFAULT_BETA, auto_round, estimate_epsilon_delta, evaluate,
                         hamming_matrix, build_signatures)
from .fileformat import GraphFormatError, atomic_write_text, read_graph, write_graph
from .generators import (BlockSpec, GeneratorError, generate_bipartite, generate_homogeneous_blocks,
                         generate_regular_clustered, generate_scaled_blocks)
from .graph import (GraphError, is_connected, is_ordinary_lumpable, is_volume_regular, lumped_matrix,
                    transition_matrix, two_coloring, volume_spread)
from .spectral import (check_hypotheses, cheeger_floor, chi_basis, decompose, stepwise_flags,
                       stepwise_structure)

EXIT_OK, EXIT_USAGE, EXIT_GRAPH, EXIT_WINDOW, EXIT_INVARIANT = 0, 2, 3, 4, 5
OUT_ENV = "AVGDYN_OUT"
DEFAULT_OUT = "avgdyn-out"


class UsageError(Exception):
    pass


# --- helpers ---------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write_json(out: Path, name: str, obj) -> None:
    atomic_write_text(out / name, dump_json(obj))


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _matrix(text: str) -> np.ndarray:
    rows = [_floats(r) for r in text.split(";")]
    if len({len(r) for r in rows}) != 1:
        raise UsageError("coupling rows have different lengths")
    return np.array(rows)


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _has_generator(args) -> bool:
    return any(getattr(args, a, None) is not None for a in ("blocks", "regular", "bipartite"))


def _generate(args):
    """GeneratorReport from the generator flags."""
    given = sum(getattr(args, a, None) is not None for a in ("blocks", "regular", "bipartite"))
    if given != 1:
        raise UsageError("give exactly one of --blocks, --regular, --bipartite")
    if args.blocks is not None:
        if args.sizes is None:
            raise UsageError("--blocks needs --sizes")
        if args.coupling is None:
            raise UsageError("--blocks needs --coupling")
        sizes = _ints(args.sizes)
        if len(sizes) != args.blocks:
            raise UsageError(f"--sizes lists {len(sizes)} blocks, --blocks says {args.blocks}")
        spec = BlockSpec(sizes, _matrix(args.coupling))
        if args.scales:
            return generate_scaled_blocks(spec, _floats(args.scales))
        return generate_homogeneous_blocks(spec)
    if args.regular is not None:
        vals = _ints(args.regular)
        if len(vals) != 4:
            raise UsageError("--regular takes K,SIZE,D_IN,D_OUT")
        method = "circulant" if args.circulant else "random"
        return generate_regular_clustered(*vals, seed=args.seed, method=method)
    vals = _ints(args.bipartite)
    if len(vals) != 2:
        raise UsageError("--bipartite takes N1,N2")
    return generate_bipartite(vals[0], vals[1], args.density, weighted=args.weighted, seed=args.seed)


def _load(args, need_partition=False):
    """(graph, partition, generator report or None) from --graph or generator flags."""
    if getattr(args, "graph", None) and _has_generator(args):
        raise UsageError("give either --graph or generator flags, not both")
    if getattr(args, "graph", None):
        graph, partition = read_graph(args.graph)
        rep = None
    elif _has_generator(args):
        rep = _generate(args)
        graph, partition = rep.graph, rep.partition
    else:
        raise UsageError("no graph given (use --graph or generator flags)")
    if need_partition and partition is None:
        raise UsageError("this command needs a ground-truth partition in the graph file")
    if not is_connected(graph):
        raise DisconnectedGraphError("graph is disconnected")
    return graph, partition, rep


# --- commands --------------------------------------------------------------

def cmd_generate(args, out: Path) -> int:
    rep = _generate(args)
    write_graph(out / "graph.txt", rep.graph, rep.partition)
    _write_json(out, "generator.json", rep.to_dict())
    return EXIT_OK


def _spectrum_doc(graph, partition, summary):
    doc = {"n": graph.n, "method": summary.method,
           "eigenvalues": summary.eigenvalues,
           "max_residual": float(summary.residuals(graph).max()),
           "volume_spread": volume_spread(graph),
           "cheeger_floor": cheeger_floor(summary, graph)}
    if partition is not None:
        doc["k"] = partition.k
        doc["stepwise_flags"] = stepwise_flags(summary, partition)
        if partition.k >= 2 and partition.k < graph.n:
            doc["hypotheses"] = check_hypotheses(graph, partition, summary).to_dict()
    return doc


def cmd_spectrum(args, out: Path) -> int:
    graph, partition, _ = _load(args)
    summary = decompose(graph, method=args.method)
    _write_json(out, "spectrum.json", _spectrum_doc(graph, partition, summary))
    return EXIT_OK


def cmd_run(args, out: Path) -> int:
    graph, partition, _ = _load(args, need_partition=args.round == "auto" or args.decompose)
    variant = canonical_variant(args.variant)
    summary = decompose(graph) if (args.decompose or args.round == "auto" or variant == "avg-bip") else None
    if args.round == "auto":
        rounds = auto_round(graph, partition, variant, summary)
    elif args.round is not None:
        rounds = int(args.round)
    else:
        rounds = args.rounds
    if rounds < 1:
        raise UsageError("rounds must be >= 1")
    traj = run(graph, rounds, args.seed, variant, history_cap=max(rounds, 512))
    atomic_write_text(out / "trajectory.csv", traj.to_csv())
    avg = traj.averages
    doc = {"variant": variant, "seed": args.seed, "rounds": rounds, "n": graph.n,
           "weighted_average": avg[0], "average_drift": float(np.abs(avg - avg[0]).max())}
    if summary is not None:
        lam_n = summary.lam(summary.n)
        doc["lambda_n"] = lam_n
        doc["oscillates"] = bool(lam_n <= -1 + 1e-9)
    if args.decompose:
        dec = decompose_run(graph, partition, summary, traj)
        hyp = check_hypotheses(graph, partition, summary)
        doc["decomposition"] = dec.to_dict()
        doc["bounds"] = verify_bounds(dec, hyp, rounds - 1).to_dict()
    _write_json(out, "run.json", doc)
    return EXIT_OK


def cmd_evaluate(args, out: Path) -> int:
    graph, partition, _ = _load(args, need_partition=True)
    summary = decompose(graph) if args.round == "auto" else None
    rsel = args.round if args.round == "auto" else int(args.round)
    rep = evaluate(graph, partition, args.variant, rsel, args.ell, args.seed, args.alpha, args.beta,
                   summary, workers=args.workers)
    doc = rep.to_dict()
    if args.trials:
        est = estimate_epsilon_delta(graph, partition, args.variant, rsel, args.trials,
                                     derive_seed(args.seed, "estimate"), summary, workers=args.workers)
        doc["estimate"] = est.to_dict()
    _write_json(out, "eval.json", doc)
    if args.hamming_csv:
        sig = build_signatures(graph, args.variant, rsel, args.ell, args.seed, partition, summary,
                               workers=args.workers)
        h = hamming_matrix(sig)
        atomic_write_text(out / "hamming.csv", "\n".join(",".join(map(str, row)) for row in h) + "\n")
    return EXIT_OK


def cmd_bipartite(args, out: Path) -> int:
    graph, partition, _ = _load(args)
    coloring = two_coloring(graph)
    if coloring is None:
        raise GraphError("graph is not bipartite")
    summary = decompose(graph)
    lam = summary.eigenvalues
    symmetry = float(np.abs(np.sort(lam) + np.sort(lam)[::-1]).max())
    lam2, delta = summary.lam(2), volume_spread(graph)
    op = TransitionOperator(graph)
    results = []
    for j in range(args.trials):
        s = derive_seed(args.seed, "bipartite", j)
        x = run(graph, 1, s, history_cap=1, operator=op).x0
        _, an = bipartite_alpha(graph, coloring, x)
        if an == 0:
            results.append({"seed": s, "alpha_n": 0.0, "round": None, "match": False})
            continue
        t = bip_detection_round(lam2, delta, graph.n, an)
        tr = run(graph, t, s, "avg-bip", init=x, history_cap=0, operator=op)
        results.append({"seed": s, "alpha_n": an, "round": t,
                        "match": matches_partition_up_to_flip(tr.label(t), coloring)})
    rate = sum(r["match"] for r in results) / max(1, len(results))
    _write_json(out, "bipartite.json", {"n": graph.n, "lambda_2": lam2, "volume_spread": delta,
                                        "spectrum_symmetry_residual": symmetry, "trials": results,
                                        "success_rate": rate})
    return EXIT_OK


def _check(ok, value=None, asserted=True):
    return {"ok": bool(ok), "value": value, "asserted": asserted}


def cmd_verify(args, out: Path) -> int:
    graph, partition, _ = _load(args, need_partition=True)
    summary = decompose(graph, method=args.method)
    checks = {}
    res = summary.residuals(graph).max()
    checks["eigen_residual"] = _check(res <= 1e-8, res)
    pres = summary.p_residuals(graph).max()
    checks["p_eigen_residual"] = _check(pres <= 1e-7, pres)
    gram = summary.gram_residual()
    checks["orthonormality"] = _check(gram <= 1e-8, gram)
    checks["lambda_1"] = _check(abs(summary.lam(1) - 1) <= 1e-9, summary.lam(1))
    try:
        checks["cheeger"] = _check(True, cheeger_floor(summary, graph))
    except InvariantViolation as exc:
        checks["cheeger"] = _check(False, str(exc))
    vr = is_volume_regular(graph, partition, args.tol)
    checks["volume_regular"] = _check(vr.ok, None if vr.ok else vr.witness.__dict__)
    lump = is_ordinary_lumpable(transition_matrix(graph), partition, args.tol)
    checks["lumpable"] = _check(lump.ok, None)
    step = stepwise_structure(summary, partition)
    checks["stepwise_span"] = _check(step.ok, float(step.residuals.max()))
    if vr.ok:
        pred = np.sort(np.linalg.eigvals(lumped_matrix(graph, partition)).real)
        got = np.sort(step.stepwise_eigenvalues)
        gap = float(np.abs(pred - got).max()) if pred.size == got.size else math.inf
        checks["lumped_spectrum"] = _check(gap <= 1e-8, gap)

    hyp = check_hypotheses(graph, partition, summary)
    checks["hypotheses"] = _check(hyp.all_hold, None, asserted=args.assert_hypotheses)
    bounds_asserted = hyp.all_hold
    if args.rounds:
        rounds = args.rounds
    else:
        rounds = 50
        if hyp.window_nonempty and math.isfinite(hyp.t2):
            rounds = max(rounds, math.floor(hyp.t2) + 2)
    op = TransitionOperator(graph)
    chi = chi_basis(graph, partition)
    drift = recon = 0.0
    err_v = core_v = sign_v = window_fail = degenerate = 0
    for j in range(args.trials):
        s = derive_seed(args.seed, "verify", j)
        tr = run(graph, rounds, s, history_cap=rounds, operator=op, check_connected=False)
        drift = max(drift, float(np.abs(tr.averages - tr.averages[0]).max()))
        dec = decompose_run(graph, partition, summary, tr, chi=chi, tol=math.inf)
        recon = max(recon, dec.reconstruction_error)
        b = verify_bounds(dec, hyp, rounds - 1)
        err_v += b.error_violations
        core_v += b.core_violations
        sign_v += b.sign_violations
        if hyp.window_nonempty:
            w = check_sign_window(tr, dec, hyp)
            degenerate += w.degenerate
            window_fail += not w.ok
    checks["conservation"] = _check(drift <= 1e-9 * max(1.0, abs(tr.averages[0])), drift)
    checks["reconstruction"] = _check(recon <= 1e-8, recon)
    checks["error_bound"] = _check(err_v == 0, err_v, bounds_asserted)
    checks["core_bound"] = _check(core_v == 0, {"violations": core_v, "sign_violations": sign_v},
                                  bounds_asserted)
    checks["sign_window"] = _check(window_fail == 0, {"failures": window_fail, "degenerate": degenerate},
                                   bounds_asserted and hyp.window_nonempty)
    failed = sorted(name for name, c in checks.items() if c["asserted"] and not c["ok"])
    _write_json(out, "verify.json", {"checks": checks, "hypotheses": hyp.to_dict(), "rounds": rounds,
                                     "trials": args.trials, "failed": failed, "ok": not failed})
    for name, c in sorted(checks.items()):
        tag = "PASS" if c["ok"] else ("FAIL" if c["asserted"] else "INFO")
        print(f"{tag:4s} {name}")
    return EXIT_INVARIANT if failed else EXIT_OK


# --- parser ----------------------------------------------------------------

def _add_generator_flags(p):
    g = p.add_argument_group("generator")
    g.add_argument("--blocks", type=int, help="number of blocks for block generators")
    g.add_argument("--sizes", help="comma-separated block sizes")
    g.add_argument("--coupling", help="k x k coupling matrix, rows separated by ';'")
    g.add_argument("--scales", help="comma-separated positive node scales (scaled-blocks generator)")
    g.add_argument("--regular", help="K,SIZE,D_IN,D_OUT for the regular clustered generator")
    g.add_argument("--circulant", action="store_true", help="deterministic circulant layout")
    g.add_argument("--bipartite", help="N1,N2 for a random connected bipartite graph")
    g.add_argument("--density", type=float, default=0.3)
    g.add_argument("--weighted", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="avgdyn", description="Averaging dynamics toolkit")
    parser.add_argument("--config", help="replay a config.json written by an earlier invocation")
    parser.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--out", help=argparse.SUPPRESS, default=argparse.SUPPRESS)
        p.add_argument("--seed", type=int, help="master seed (drawn and recorded if omitted)")
        return p

    p = common(sub.add_parser("generate", help="generate an instance with known ground truth"))
    _add_generator_flags(p)

    p = common(sub.add_parser("spectrum", help="eigen-decomposition, stepwise flags, window"))
    p.add_argument("--graph")
    p.add_argument("--method", choices=("auto", "jacobi", "lapack"), default="auto")
    _add_generator_flags(p)

    p = common(sub.add_parser("run", help="run one dynamics trajectory"))
    p.add_argument("--graph")
    p.add_argument("--variant", default="standard", choices=("standard", "even", "avg-bip"))
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--round", help="'auto' (window midpoint) or an integer; overrides --rounds")
    p.add_argument("--decompose", action="store_true", help="spectral decomposition and bound report")
    _add_generator_flags(p)

    p = common(sub.add_parser("evaluate", help="signatures, Hamming clustering, (eps, delta)"))
    p.add_argument("--graph")
    p.add_argument("--variant", default="standard", choices=("standard", "even", "avg-bip"))
    p.add_argument("--round", default="auto")
    p.add_argument("--ell", type=int, help="number of runs (default ceil(4 log2 n))")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--trials", type=int, default=0, help="also estimate (eps, delta) with this many runs")
    p.add_argument("--hamming-csv", action="store_true")
    p.add_argument("--workers", type=int, default=None)
    _add_generator_flags(p)

    p = common(sub.add_parser("bipartite", help="Avg-Bip bipartition detection"))
    p.add_argument("--graph")
    p.add_argument("--trials", type=int, default=100)
    _add_generator_flags(p)

    p = common(sub.add_parser("verify", help="hypotheses and invariant suite"))
    p.add_argument("--graph")
    p.add_argument("--method", choices=("auto", "jacobi", "lapack"), default="auto")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--no-assert-hypotheses", dest="assert_hypotheses", action="store_false")
    _add_generator_flags(p)
    return parser


COMMANDS = {"generate": cmd_generate, "spectrum": cmd_spectrum, "run": cmd_run,
            "evaluate": cmd_evaluate, "bipartite": cmd_bipartite, "verify": cmd_verify}


def _resolve(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            stored = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config: {exc}")
        out = args.out
        args = argparse.Namespace(**stored)
        args.out = out
        args.config = None
    if not args.command:
        parser.error("a command is required")
    if args.seed is None:
        args.seed = fresh_seed()
    return args


def main(argv=None) -> int:
    args = _resolve(sys.argv[1:] if argv is None else argv)
    out = _out_dir(args)
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "config")}
    try:
        atomic_write_text(out / "config.json", dump_json(config))
        return COMMANDS[args.command](args, out)
    except (UsageError, GraphFormatError, GeneratorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DisconnectedGraphError, GraphError) as exc:
        print(f"graph error: {exc}", file=sys.stderr)
        return EXIT_GRAPH
    except EmptyWindowError as exc:
        print(f"empty window: {exc}", file=sys.stderr)
        return EXIT_WINDOW
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
