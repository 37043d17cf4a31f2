"""Command line interface: ``oaflow phantom|train|segment|evaluate``.

Exit codes: 0 success, 2 configuration or input error, 3 convergence failure.
"""
import argparse
import json
import sys
import time

from . import io
from .errors import ConvergenceError, OAFlowError
from .features import ingest_scores
from .flow import FlowConfig
from .pipeline import PhantomConfig, distance_matrix, evaluate, generate_phantom, segment_distances, train

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _triple(text):
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N,NA,NB, got {text!r}")
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated integers, got {text!r}")
    return vals


def build_parser():
    p = _Parser(prog="oaflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ph = sub.add_parser("phantom", help="write a synthetic layered volume and its labels")
    ph.add_argument("--out", required=True, help="output name; writes <out>.vol.* and <out>.lbl.*")
    ph.add_argument("--dims", type=_triple, default=(64, 64, 8))
    ph.add_argument("--layers", type=int, default=6)
    ph.add_argument("--seed", type=int, default=0)
    ph.add_argument("--noise", type=float, default=PhantomConfig.noise)
    ph.add_argument("--speckle", type=float, default=PhantomConfig.speckle)
    ph.add_argument("--amplitude", type=float, default=PhantomConfig.amplitude)

    tr = sub.add_parser("train", help="learn per-layer prototype dictionaries")
    tr.add_argument("--volume", required=True)
    tr.add_argument("--labels", required=True)
    tr.add_argument("--out", required=True, help="dictionary manifest (JSON)")
    tr.add_argument("--k", type=int, default=8)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--mean", choices=("stein", "riemannian", "logeuclid"), default="stein")
    tr.add_argument("--method", choices=("kmeans", "em"), default="kmeans")
    tr.add_argument("--max-samples", type=int, default=1000)

    sg = sub.add_parser("segment", help="label a volume with the (ordered) assignment flow")
    sg.add_argument("--volume", required=True)
    sg.add_argument("--dict", dest="dictionary")
    sg.add_argument("--out", required=True, help="output name; writes <out>.lbl.* and <out>.trace.json")
    sg.add_argument("--ordered", dest="ordered", action="store_true", default=True)
    sg.add_argument("--no-ordered", dest="ordered", action="store_false")
    sg.add_argument("--rho", type=float, default=FlowConfig.rho)
    sg.add_argument("--gamma", type=float, default=FlowConfig.gamma)
    sg.add_argument("--step", type=float, default=FlowConfig.step)
    sg.add_argument("--window", type=int, default=None)
    sg.add_argument("--ordering-weight", type=float, default=FlowConfig.ordering_weight)
    sg.add_argument("--entropy-threshold", type=float, default=None)
    sg.add_argument("--max-steps", type=int, default=FlowConfig.max_steps)
    src = sg.add_mutually_exclusive_group()
    src.add_argument("--distances", help="precomputed (n, c) distance matrix; skips feature extraction")
    src.add_argument("--scores", help="(n, c) class scores, converted to distances by sign flip")

    ev = sub.add_parser("evaluate", help="compare a labelling with ground truth")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--report", required=True)
    ev.add_argument("--trace", help="trace JSON from segment (default: <pred>.trace.json if present)")
    return p


def _phantom(a):
    cfg = PhantomConfig(dims=a.dims, layers=a.layers, seed=a.seed, noise=a.noise, speckle=a.speckle,
                        amplitude=a.amplitude)
    vol, lab = generate_phantom(cfg)
    io.write_volume(a.out, vol)
    io.write_labels(a.out, lab)
    return EXIT_OK


def _train(a):
    vol, lab = io.read_volume(a.volume), io.read_labels(a.labels)
    d = train(vol, lab, K=a.k, seed=a.seed, mean=a.mean, method=a.method, max_samples=a.max_samples)
    io.write_dictionary(a.out, d)
    return EXIT_OK


def _segment(a):
    t0 = time.perf_counter()
    vol = io.read_volume(a.volume)
    if a.distances or a.scores:
        D = io.read_matrix(a.distances or a.scores)
        if a.scores:
            D = ingest_scores(D)
    elif a.dictionary:
        D = distance_matrix(vol, io.read_dictionary(a.dictionary))
    else:
        raise OAFlowError("segment needs --dict, --distances or --scores")
    cfg = FlowConfig(rho=a.rho, step=a.step, gamma=a.gamma, window=a.window,
                     entropy_threshold=a.entropy_threshold, max_steps=a.max_steps,
                     ordering_weight=a.ordering_weight)
    lab, _, trace = segment_distances(D, vol.dims, cfg, a.ordered)
    stem = io.write_labels(a.out, lab)
    runtime = time.perf_counter() - t0
    with open(stem + ".trace.json", "w") as fh:
        json.dump({"runtime_s": runtime, "converged": trace.converged, "steps": trace.steps,
                   "ordered": a.ordered,
                   "mean_entropy": [r.mean_entropy for r in trace.records]}, fh)
    if not trace.converged:
        print(f"oaflow: flow stopped after {trace.steps} steps without reaching the entropy threshold",
              file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def _evaluate(a):
    pred, truth = io.read_labels(a.pred), io.read_labels(a.truth)
    if pred.dims != truth.dims:
        raise OAFlowError(f"prediction dims {pred.dims} differ from truth dims {truth.dims}")
    trace_path = a.trace or io._stem(a.pred, "lbl") + ".trace.json"
    runtime, converged = 0.0, None
    try:
        with open(trace_path) as fh:
            t = json.load(fh)
        runtime, converged = float(t["runtime_s"]), bool(t["converged"])
    except FileNotFoundError:
        if a.trace:
            raise OAFlowError(f"missing trace file {a.trace}")
    report = evaluate(pred, truth, c=truth.c, runtime_s=runtime, converged=converged)
    io.write_report(a.report, report)
    return EXIT_OK


_COMMANDS = {"phantom": _phantom, "train": _train, "segment": _segment, "evaluate": _evaluate}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ConvergenceError as exc:
        print(f"oaflow: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (OAFlowError, OSError) as exc:
        print(f"oaflow: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
