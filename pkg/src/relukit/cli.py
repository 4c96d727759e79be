"""Command-line entry point ``relukit``.

Exit codes: 0 when every check passes, 1 when a violation is found,
2 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from contextlib import contextmanager

from . import experiments as ex
from .logapprox import build_log_net
from .network import serialize, sparsity, validate

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from exc


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def cmd_build(args) -> int:
    net, _, params = build_log_net(args.beta, args.m, return_parts=True)
    with open(args.out, "w") as fh:
        fh.write(serialize(net))
    meta = {
        "beta": args.beta,
        "M": args.m,
        "depth": net.depth,
        "hidden_width": net.hidden_width(),
        "sparsity": sparsity(net),
        "depth_budget": params.depth_budget,
        "width_budget": params.width_budget,
        "sparsity_budget": params.sparsity_budget,
        "eta": params.eta,
        "norm": params.norm,
        "issues": validate(net),
    }
    with open(args.out + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2)
    within = (net.depth <= params.depth_budget and net.hidden_width() <= params.width_budget
              and meta["sparsity"] <= params.sparsity_budget and not meta["issues"])
    print(json.dumps(meta))
    return EXIT_OK if within else EXIT_VIOLATION


def cmd_verify(args) -> int:
    rows = ex.SUITES[args.suite](seed=args.seed, beta=args.beta, M=args.m)
    with _output(args.out) as fh:
        w = csv.writer(fh)
        w.writerow(ex.CSV_HEADER)
        for r in rows:
            w.writerow(r.as_csv())
    return EXIT_OK if all(r.passed for r in rows) else EXIT_VIOLATION


def cmd_rate_study(args) -> int:
    cfg = ex.RateStudyConfig(alpha=args.alpha, beta=args.beta, K=args.k, M_grid=tuple(args.m_grid),
                             grid_points=ex.grid_points(10 ** 5), seed=args.seed, out=args.out)
    res = ex.rate_study(cfg)
    with _output(args.out) as fh:
        w = csv.writer(fh)
        w.writerow(["M", "risk", "risk_bound", "hypothesis_holds"])
        for r in res.rows:
            w.writerow([r["M"], repr(r["risk"]), repr(r["bound"]), r["hypothesis"]])
    print(f"slope={res.slope:.4f} limit={res.slope_limit:.4f} {'pass' if res.passed else 'FAIL'}", file=sys.stderr)
    return EXIT_OK if res.passed else EXIT_VIOLATION


def cmd_infinite_risk(args) -> int:
    res = ex.infinite_risk(tuple(args.b_grid), n=args.n, d=args.d, seed=args.seed)
    with _output(args.out) as fh:
        w = csv.writer(fh)
        w.writerow(["B", "risk", "std_error", "closed_form", "control_risk"])
        for r, c in zip(res.rows, res.control):
            w.writerow([r["B"], repr(r["risk"]), repr(r["std_error"]), repr(r["closed_form"]), repr(c)])
    print(f"slope={res.slope:.4f} expected={res.expected_slope:.4f} train_ce={res.train_ce} "
          f"{'pass' if res.passed else 'FAIL'}", file=sys.stderr)
    return EXIT_OK if res.passed else EXIT_VIOLATION


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relukit", description="ReLU network constructions and checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="build and serialize the log network G")
    b.add_argument("--beta", type=float, required=True)
    b.add_argument("--m", type=float, required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build)

    v = sub.add_parser("verify", help="run a property suite and print CSV")
    v.add_argument("suite", choices=sorted(ex.SUITES))
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--beta", type=float, default=1.0)
    v.add_argument("--m", type=float, default=10.0)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("rate-study", help="KL risk of the softmax network against M")
    r.add_argument("--alpha", type=float, required=True)
    r.add_argument("--beta", type=float, default=1.0)
    r.add_argument("--k", type=int, default=3)
    r.add_argument("--m-grid", type=_float_list, default=[50, 100, 200, 400, 800])
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out")
    r.set_defaults(func=cmd_rate_study)

    i = sub.add_parser("infinite-risk", help="truncated KL risk of the corner estimator against B")
    i.add_argument("--b-grid", type=_float_list, default=[2, 4, 8, 16, 32, 64])
    i.add_argument("--n", type=int, default=5)
    i.add_argument("--d", type=int, default=1)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--out")
    i.set_defaults(func=cmd_infinite_risk)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, ex.RejectionBudgetExceeded, NotImplementedError) as exc:
        print(f"relukit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
