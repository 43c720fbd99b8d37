"""Command-line front end: ``gen``, ``fit``, ``bench`` and ``hellinger``.

Exit codes: 0 on success, 2 for unusable input, 3 when an estimator fails.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .combined import recover_1d
from .errors import MixtureError, RecoveryFailure
from .lowerbound import hellinger_scaling_experiment, matching_mixture
from .mixture import (
    Gaussian1D,
    Mixture1D,
    mixture_from_json,
    mixture_to_json,
    param_distance,
    sample,
    tv_gaussians_upper_bound,
)
from .reduction import ReductionReport, recover_d
from .tv import TVConfig, TVReport, recover_tv

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RECOVERY = 3
SMALL_EPS = 0.1
BENCH_COLUMNS = ("n", "median_param_distance", "q25", "q75")


class InputError(Exception):
    """Raised for anything wrong with the files or flags a user passed."""


# ------------------------------------------------------------------ helpers

def load_mixture(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read mixture file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"mixture file {path} is not valid JSON: {exc}") from None
    try:
        return mixture_from_json(obj)
    except MixtureError as exc:
        raise InputError(f"mixture file {path}: {exc}") from None


def mixture_digest(m) -> str:
    text = json.dumps(mixture_to_json(m), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def format_samples(x, seed, digest) -> str:
    buf = io.StringIO()
    buf.write(f"# seed={seed} sha256={digest}\n")
    rows = np.atleast_2d(x.reshape(len(x), -1)) if len(x) else ()
    for row in rows:
        buf.write(" ".join(repr(float(v)) for v in row))
        buf.write("\n")
    return buf.getvalue()


def load_samples(path):
    try:
        x = np.loadtxt(path, comments="#", ndmin=2)
    except OSError as exc:
        raise InputError(f"cannot read sample file {path}: {exc}") from None
    except ValueError as exc:
        raise InputError(f"sample file {path} has a malformed row: {exc}") from None
    return x


def _emit(text, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def fit_samples(x, mode, eps, delta, seed=None, isotropic=False):
    """Dispatch to an estimator; returns ``(mixture, report_dict)``."""
    if mode == "1d":
        if x.shape[1] != 1:
            raise InputError(f"mode 1d needs one column, the sample file has {x.shape[1]}")
        m, rep = recover_1d(x[:, 0], delta)
        return m, rep.to_dict()
    if mode == "nd":
        rep = ReductionReport()
        m = recover_d(x, eps, delta, seed=seed, report=rep)
        return m, {"mean_anchor": rep.mean_anchor,
                   "cov_anchor": None if rep.cov_anchor is None else list(rep.cov_anchor),
                   "subsets_run": rep.subsets_run, "notes": rep.notes}
    if mode == "tv":
        rep = TVReport()
        m = recover_tv(x, TVConfig(eps, delta, isotropic), seed=seed, report=rep)
        return m, rep.to_dict()
    raise InputError(f"unknown mode {mode!r}")


def _as_d(m):
    return m.to_d() if isinstance(m, Mixture1D) else m


def tv_surrogates(truth, est):
    """Per-component TV bound against ``truth`` under the better labelling."""
    t, e = _as_d(truth), _as_d(est)
    options = []
    for g in (e, e.swapped()):
        options.append([tv_gaussians_upper_bound(t.mu1, t.Sigma1, g.mu1, g.Sigma1),
                        tv_gaussians_upper_bound(t.mu2, t.Sigma2, g.mu2, g.Sigma2)])
    return min(options, key=max)


def mean_error(truth, est) -> float:
    """Largest entrywise mean error over the better labelling."""
    t, e = _as_d(truth), _as_d(est)
    return min(max(float(np.max(np.abs(t.mu1 - g.mu1))), float(np.max(np.abs(t.mu2 - g.mu2))))
               for g in (e, e.swapped()))


# ------------------------------------------------------------------ bench

def _bench_trial(args):
    truth, n, seed, mode, eps, delta = args
    x = sample(truth, n, seed)
    x = x.reshape(n, -1)
    try:
        est, _ = fit_samples(x, mode, eps, delta, seed=seed)
    except RecoveryFailure:
        return math.inf, math.inf
    return param_distance(truth, est), mean_error(truth, est)


def run_bench(truth, grid, trials, seed, mode="1d", eps=0.3, delta=0.05, jobs=1):
    """Per-trial ``(n, trial, param_distance, mean_error)`` records, sorted.

    Trial seeds come from one ``SeedSequence`` spawned per ``(n, trial)``,
    so the records do not depend on ``jobs``.
    """
    grid = [int(n) for n in grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InputError("the n grid must be strictly ascending")
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(grid) * trials)
    tasks, keys = [], []
    for i, n in enumerate(grid):
        for t in range(trials):
            child = children[i * trials + t]
            tasks.append((truth, n, int(child.generate_state(1, np.uint64)[0]), mode, eps, delta))
            keys.append((n, t))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_bench_trial, tasks))
    else:
        results = [_bench_trial(t) for t in tasks]
    return sorted((k[0], k[1], r[0], r[1]) for k, r in zip(keys, results))


def bench_rows(records):
    rows = []
    for n in sorted({r[0] for r in records}):
        vals = np.array([r[2] for r in records if r[0] == n])
        q25, med, q75 = np.quantile(vals, [0.25, 0.5, 0.75])
        rows.append((n, float(med), float(q25), float(q75)))
    return rows


def format_bench(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for n, med, q25, q75 in rows:
        w.writerow([n, repr(med), repr(q25), repr(q75)])
    return buf.getvalue()


# ------------------------------------------------------------------ commands

def cmd_gen(args):
    if args.n < 0:
        raise InputError("--n must be nonnegative")
    m = load_mixture(args.mixture)
    x = sample(m, args.n, args.seed) if args.n else np.empty((0,))
    _emit(format_samples(x, args.seed, mixture_digest(m)), args.out)


def cmd_fit(args):
    if args.mode in ("nd", "tv") and args.eps < SMALL_EPS and not args.allow_small_eps:
        raise InputError(f"--eps {args.eps} is below {SMALL_EPS}; the candidate nets grow "
                         "like (1/eps)^10. Pass --allow-small-eps to run anyway")
    x = load_samples(args.samples)
    m, report = fit_samples(x, args.mode, args.eps, args.delta, seed=args.seed,
                            isotropic=args.isotropic)
    out = {"mixture": mixture_to_json(m), "report": report}
    if args.truth:
        truth = load_mixture(args.truth)
        out["param_distance"] = param_distance(truth, m)
        out["tv_surrogate"] = tv_surrogates(truth, m)
    _emit(json.dumps(out, indent=2) + "\n", args.out)


def cmd_bench(args):
    truth = load_mixture(args.mixture)
    records = run_bench(truth, args.n_grid, args.trials, args.seed, args.mode,
                        args.eps, args.delta, args.jobs)
    _emit(format_bench(bench_rows(records)), args.out)


def cmd_hellinger(args):
    f = load_mixture(args.mixture) if args.mixture else Mixture1D(
        0.5, 0.5, Gaussian1D(-1.0, 1.0), Gaussian1D(1.0, 2.0))
    if not isinstance(f, Mixture1D):
        raise InputError("hellinger works on one-dimensional mixtures")
    g = load_mixture(args.against) if args.against else matching_mixture(f)
    rows = hellinger_scaling_experiment(f, g, args.sigmas)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("sigma", "h2", "slope"))
    for s, h2, slope in rows:
        w.writerow([repr(s), repr(h2), repr(slope)])
    _emit(buf.getvalue(), args.out)


# ------------------------------------------------------------------ parser

def _number_list(kind):
    def parse(text):
        try:
            return [kind(float(v)) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    return parse


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output file (default: standard output)")

    fitting = argparse.ArgumentParser(add_help=False)
    fitting.add_argument("--eps", type=float, default=0.3)
    fitting.add_argument("--delta", type=float, default=0.05)
    fitting.add_argument("--mode", choices=("1d", "nd", "tv"), default="1d")

    p = argparse.ArgumentParser(prog="twomix", description="Two-Gaussian mixtures by the method of moments.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="draw samples from a mixture JSON file")
    g.add_argument("mixture")
    g.add_argument("--n", type=int, required=True)
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fit", parents=[common, fitting], help="fit a mixture to a sample file")
    f.add_argument("samples")
    f.add_argument("--isotropic", action="store_true", help="use the isotropic accuracy schedule in tv mode")
    f.add_argument("--allow-small-eps", action="store_true")
    f.add_argument("--truth", help="mixture JSON to score the fit against")
    f.set_defaults(func=cmd_fit)

    b = sub.add_parser("bench", parents=[common, fitting], help="error quantiles over a grid of sample sizes")
    b.add_argument("mixture")
    b.add_argument("--n-grid", type=_number_list(int), default=[10 ** 4, 10 ** 5, 10 ** 6])
    b.add_argument("--trials", type=int, default=20)
    b.add_argument("--jobs", type=int, default=1)
    b.set_defaults(func=cmd_bench)

    h = sub.add_parser("hellinger", parents=[common], help="squared Hellinger distance under added noise")
    h.add_argument("mixture", nargs="?", help="1-D mixture JSON (default: 0.5 N(-1,1) + 0.5 N(1,2))")
    h.add_argument("--against", help="second mixture (default: the five-moment match)")
    h.add_argument("--sigmas", type=_number_list(float), default=[4.0, 8.0, 16.0, 32.0])
    h.set_defaults(func=cmd_hellinger)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RecoveryFailure as exc:
        print(f"recovery failed ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_RECOVERY
    except MixtureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
