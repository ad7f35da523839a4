"""Command-line driver: gen, train, sample, solve, eval, reproduce-table1, rerun.

Exit codes: 0 success, 1 usage, 2 data or model error, 3 capacity,
4 numerical non-convergence. Every output file is written atomically and
gets a ``<output>.manifest.json`` next to it; ``depnet rerun`` replays one.
Set ``DEPNET_N_JOBS`` to learn nodes (and Table-1 protocols) in parallel.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, datagen, exact, geometry, learning, network, sampler, table1
from .errors import DepNetError, DomainError
from .state_space import (
    DenseDistribution,
    Dataset,
    empirical_distribution,
    format_dataset,
    read_dataset,
)

log = logging.getLogger("depnet")

NAT_TO_BIT = 1.0 / math.log(2.0)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _n_jobs() -> int | None:
    value = os.environ.get("DEPNET_N_JOBS")
    return int(value) if value else None


def _write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _manifest(args, argv, outputs, inputs, started, wall):
    params = {k: v for k, v in vars(args).items() if k != "func"}
    doc = {
        "command": args.command,
        "argv": list(argv),
        "cwd": os.getcwd(),
        "params": params,
        "seeds": {k: v for k, v in params.items() if "seed" in k},
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "started_at": started,
        "wall_clock_seconds": wall,
    }
    text = json.dumps(doc, indent=2, default=str) + "\n"
    for out in outputs:
        _write_atomic(f"{out}.manifest.json", text)


def _parse_clamp(text: str, space) -> dict[int, int]:
    clamp = {}
    if not text:
        return clamp
    for item in text.split(","):
        name, _, value = item.partition("=")
        if not _:
            raise DomainError(f"clamp entry {item!r} is not NAME=VALUE")
        i = space.index(name.strip())
        try:
            clamp[i] = int(value)
        except ValueError:
            raise DomainError(f"clamp value {value!r} is not an integer") from None
        if not 0 <= clamp[i] < space.cardinalities[i]:
            raise DomainError(f"clamp value {clamp[i]} out of range for {name.strip()}")
    if len(clamp) >= space.n:
        raise DomainError("cannot clamp every variable")
    return clamp


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.4e}"


# ---------------------------------------------------------------- commands


def cmd_gen(args):
    if args.kind == "ising":
        spec = datagen.IsingSpec(args.rows, args.cols, args.coupling, args.field)
        p = datagen.ising_distribution(spec)
        description = spec.describe()
    else:
        spec = datagen.BayesNetSpec(args.nodes, args.edges, args.bn_seed if args.bn_seed is not None else args.seed)
        p, description = datagen.random_bayesnet(spec)
    data = datagen.sample_exact(p, args.n, args.seed)
    description.update(n_samples=args.n, seed=args.seed, joint=[float(v) for v in p.probs])
    _write_atomic(args.out, format_dataset(data, [f"generator={args.kind} seed={args.seed}"]))
    sidecar = f"{args.out}.json"
    _write_atomic(sidecar, json.dumps(description, indent=1) + "\n")
    print(f"wrote {data.N} samples of {data.space.n} variables to {args.out}")
    return [args.out, sidecar], []


def _trace_csv(trace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iteration", "op", "delta", "cost", "leaf_count"])
    for e in trace:
        op = (
            f"split({e.op.y};{e.op.j})"
            if isinstance(e.op, network.Split)
            else f"merge({e.op.y0};{e.op.y1})"
        )
        writer.writerow([e.iteration, op, repr(e.delta), repr(e.cost), e.leaf_count])
    return buf.getvalue()


def cmd_train(args):
    data = read_dataset(args.data)
    for i, name in enumerate(data.space.names):
        if data.N and np.all(data.samples[:, i] == data.samples[0, i]):
            log.warning("column %s is constant; its node will have a single leaf", name)
    config = learning.LearnConfig(
        penalty=args.penalty, sampling_smoothing=args.alpha_s, merge_candidate_cap=args.merge_cap
    )
    net = learning.learn_network(data, config, n_jobs=_n_jobs())
    _write_atomic(args.out, network.to_json(net))
    outputs = [args.out]
    trace_dir = Path(args.trace_dir or f"{args.out}.traces")
    for i, node_trace in enumerate(net.metadata["traces"]):
        path = trace_dir / f"node_{i}.csv"
        _write_atomic(path, _trace_csv(node_trace))
        outputs.append(path)
    leaves = [node.source.leaf_count for node in net.nodes]
    print(f"trained {net.n} nodes on {data.N} samples; leaves per node: {leaves}")
    return outputs, [args.data]


def cmd_sample(args):
    net = network.load(args.model)
    clamp = _parse_clamp(args.clamp, net.space)
    policy = sampler.RandomScan() if args.scan == "random" else sampler.SequentialScan()
    burn_in = args.burn_in
    if burn_in is None:
        largest = max(node.table.rows.size for node in net.nodes)
        burn_in = 10 * net.n * largest
    if args.thin < 1 or burn_in < 0:
        raise DomainError("--thin must be >= 1 and --burn-in >= 0")
    run = sampler.conditional_pseudo_gibbs(
        net, clamp, policy, burn_in + args.n * args.thin, args.seed
    )
    data = Dataset(net.space, run.states[burn_in :: args.thin])
    comments = [
        f"seed={args.seed} scan={args.scan} burn_in={burn_in} thin={args.thin} "
        f"clamp={args.clamp or ''}"
    ]
    _write_atomic(args.out, format_dataset(data, comments))
    print(f"wrote {data.N} samples to {args.out}")
    return [args.out], [args.model]


def cmd_solve(args):
    net = network.load(args.model)
    if args.scan == "sequential":
        pi = exact.stationary_sequential_scan(net, method=args.method).mean
    else:
        pi = exact.stationary_random_scan(net, method=args.method)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["index", "state", "probability"])
    for idx, (state, prob) in enumerate(zip(net.space.all_states(), pi.probs)):
        writer.writerow([idx, " ".join(map(str, state)), format(prob, ".16e")])
    _write_atomic(args.out, buf.getvalue())
    print(f"wrote stationary distribution over {net.space.total_states} states to {args.out}")
    return [args.out], [args.model]


def eval_report(net, data: Dataset, use_exact: bool, clamp_vars=()) -> dict:
    report = {"units": "nat", "nat_to_bit": NAT_TO_BIT, "n_samples": data.N}
    if use_exact:
        try:
            net.space.check_dense()
        except DepNetError as exc:
            raise type(exc)(f"{exc}; drop --exact to evaluate from samples") from None
        pD = empirical_distribution(data)
        rep = exact.verify_fc_limit(pD, net)
        report.update(rep.to_dict())
        if clamp_vars:
            checks = []
            for i, node in enumerate(net.nodes):
                if i in clamp_vars:
                    continue
                terms = geometry.clamped_decomposition(pD, i, node.table, node.source, clamp_vars)
                weighted = sum(w * kl for _, w, kl in terms)
                checks.append(
                    {"node": i, "kl": rep.per_node[i], "weighted_clamped_kl": weighted,
                     "difference": abs(weighted - rep.per_node[i])}
                )
            report["clamp_decomposition"] = {"clamped": list(clamp_vars), "nodes": checks}
    else:
        per_node = [
            geometry.manifold_kl_from_data(data, i, node.table, node.source)
            for i, node in enumerate(net.nodes)
        ]
        report.update(
            fc=None, kl=None, slack=None, per_node_kl=per_node,
            fc_limit=float(np.dot(net.weights, per_node)),
        )
    return report


def _human_report(report: dict) -> str:
    lines = [f"{'quantity':<22}{'nats':>14}{'bits':>14}"]
    for key, label in (("fc", "FC(pD||pi)"), ("fc_limit", "FC_lim(pD)"), ("slack", "slack"), ("kl", "KL(pD||pi)")):
        value = report.get(key)
        if value is None:
            lines.append(f"{label:<22}{'n/a':>14}{'n/a':>14}")
        else:
            lines.append(f"{label:<22}{_fmt(value):>14}{_fmt(value * NAT_TO_BIT):>14}")
    for i, kl in enumerate(report["per_node_kl"]):
        lines.append(f"{'KL(pD||E(theta_' + str(i) + '))':<22}{_fmt(kl):>14}{_fmt(kl * NAT_TO_BIT):>14}")
    if "clamp_decomposition" in report:
        worst = max((c["difference"] for c in report["clamp_decomposition"]["nodes"]), default=0.0)
        lines.append(f"clamped decomposition max |difference| = {worst:.3e}")
    lines.append(f"1 nat = {NAT_TO_BIT:.4f} bit")
    return "\n".join(lines)


def cmd_eval(args):
    net = network.load(args.model)
    data = read_dataset(args.data, net.space.cardinalities)
    if data.space.n != net.n:
        raise DomainError("data and model have different numbers of variables")
    clamp_vars = [net.space.index(v.strip()) for v in args.clamp_vars.split(",")] if args.clamp_vars else []
    report = eval_report(net, data, args.exact, clamp_vars)
    print(_human_report(report))
    outputs = []
    if args.json:
        _write_atomic(args.json, json.dumps(report, indent=2) + "\n")
        outputs.append(args.json)
    else:
        print(json.dumps(report))
    return outputs, [args.model, args.data]


def cmd_reproduce_table1(args):
    rows = table1.reproduce_table1(args.seed, n_jobs=_n_jobs())
    header = f"{'data':<11}{'N':>8}{'FC':>12}{'FC_lim':>12}{'ref FC':>11}{'ref lim':>11}{'rel.slack':>11}  bound"
    print(header)
    for r in rows:
        print(
            f"{r.name:<11}{r.n_samples:>8}{r.fc:>12.3e}{r.fc_limit:>12.3e}"
            f"{r.reference_fc:>11.1e}{r.reference_fc_limit:>11.1e}{r.relative_slack:>11.3f}  "
            f"{'ok' if r.bound_holds else 'VIOLATED'}"
        )
    print(f"Unit: nat (1 nat = {NAT_TO_BIT:.2f} bit)")
    doc = {"seed": args.seed, "rows": [r.to_dict() for r in rows]}
    if args.json:
        _write_atomic(args.json, json.dumps(doc, indent=2) + "\n")
        return [args.json], []
    print(json.dumps(doc))
    return [], []


def cmd_rerun(args):
    doc = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    here = os.getcwd()
    os.chdir(doc.get("cwd", here))
    try:
        return main(doc["argv"])
    finally:
        os.chdir(here)


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="depnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen", help="generate a synthetic dataset")
    gen_sub = gen.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    ising = gen_sub.add_parser("ising", help="free-boundary Ising lattice")
    ising.add_argument("--rows", type=int, default=4)
    ising.add_argument("--cols", type=int, default=3)
    ising.add_argument("--coupling", type=float, default=1.0)
    ising.add_argument("--field", type=float, default=0.0)
    bn = gen_sub.add_parser("randbn", help="random binary Bayesian network")
    bn.add_argument("--nodes", type=int, default=12)
    bn.add_argument("--edges", type=int, default=21)
    bn.add_argument("--bn-seed", type=int, default=None, help="structure/CPT seed (default: --seed)")
    for p in (ising, bn):
        p.add_argument("--n", type=int, required=True, help="number of samples")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True)
        p.set_defaults(func=cmd_gen)

    train = sub.add_parser("train", help="learn a dependency network")
    train.add_argument("--data", required=True)
    train.add_argument("--penalty", choices=["mdl", "none"], default="mdl")
    train.add_argument("--alpha-s", type=float, default=None, help="sampling-table smoothing (default 1/N)")
    train.add_argument("--merge-cap", type=int, default=None, help="merge candidates per iteration (0: splits only)")
    train.add_argument("--out", required=True)
    train.add_argument("--trace-dir", default=None, help="cost traces (default <out>.traces/)")
    train.set_defaults(func=cmd_train)

    smp = sub.add_parser("sample", help="pseudo-Gibbs sampling from a model")
    smp.add_argument("--model", required=True)
    smp.add_argument("--n", type=int, required=True)
    smp.add_argument("--seed", type=int, default=0)
    smp.add_argument("--scan", choices=["random", "sequential"], default="random")
    smp.add_argument("--clamp", default="", help='clamped values, e.g. "X0=1,X3=0"')
    smp.add_argument(
        "--burn-in", type=int, default=None,
        help="steps discarded first (default 10 * n * largest table size)",
    )
    smp.add_argument("--thin", type=int, default=1, help="keep every k-th state (default 1)")
    smp.add_argument("--out", required=True)
    smp.set_defaults(func=cmd_sample)

    slv = sub.add_parser("solve", help="exact stationary distribution to CSV")
    slv.add_argument("--model", required=True)
    slv.add_argument("--scan", choices=["random", "sequential"], default="random")
    slv.add_argument("--method", choices=["auto", "direct", "power"], default="auto")
    slv.add_argument("--out", required=True)
    slv.set_defaults(func=cmd_solve)

    ev = sub.add_parser("eval", help="FC versus FC-limit report")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--exact", action="store_true", help="solve for the stationary distribution")
    ev.add_argument("--clamp-vars", default="", help="check the clamped decomposition, e.g. X0,X1")
    ev.add_argument("--json", default=None, help="write the structured report here")
    ev.set_defaults(func=cmd_eval)

    t1 = sub.add_parser("reproduce-table1", help="run the four reference protocols")
    t1.add_argument("--seed", type=int, default=7)
    t1.add_argument("--json", default=None)
    t1.set_defaults(func=cmd_reproduce_table1)

    rr = sub.add_parser("rerun", help="replay the command recorded in a manifest")
    rr.add_argument("manifest")
    rr.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    if args.command == "rerun":
        return cmd_rerun(args)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    try:
        outputs, inputs = args.func(args)
    except DepNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if outputs:
        _manifest(args, argv, outputs, inputs, started, time.perf_counter() - t0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
