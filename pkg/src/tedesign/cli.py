"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 degenerate design.
"""

import argparse
import json
import logging
import sys

import numpy as np

from . import ate, data, experiments, ite
from .errors import DesignError, EmptySample
from .gsw import GswParams
from .linalg import leverage_scores, smoothed_matrix
from .oracle import OutcomeOracle

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DEGENERATE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fractions(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _key_values(tokens):
    out = {}
    for tok in tokens or ():
        key, sep, value = tok.partition("=")
        if not sep:
            raise UsageError(f"expected key=value, got {tok!r}")
        out[key.strip()] = value.strip()
    return out


def _synthetic_spec(tokens, seed):
    kv = _key_values(tokens)
    allowed = {"n", "d", "sigma", "seed"}
    unknown = set(kv) - allowed
    if unknown:
        raise UsageError(f"unknown synthetic keys {sorted(unknown)}; allowed: {sorted(allowed)}")
    try:
        return data.SyntheticSpec(
            n=int(kv.get("n", 2000)),
            d=int(kv.get("d", 25)),
            sigma=float(kv["sigma"]) if "sigma" in kv else None,
            seed=int(kv.get("seed", seed)),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _add_common(p, *, x=False, y=False, seed=True, header=True):
    if x:
        p.add_argument("--x", required=False, help="covariates CSV (default: %(default)s)")
    if y:
        p.add_argument("--y", help="outcomes CSV with header y1,y0 (default: %(default)s)")
        p.add_argument("--shift", type=float, default=None,
                       help="constant treatment effect: y1 := y0 + SHIFT (default: %(default)s)")
    if header:
        p.add_argument("--header", action="store_true", help="covariate CSV has a header line (default: %(default)s)")
    if seed:
        p.add_argument("--seed", type=int, default=None, help="random seed; drawn fresh if omitted (default: %(default)s)")
    p.add_argument("--config", default=None, help="flat key=value file of option defaults (default: %(default)s)")


def build_parser():
    parser = _Parser(prog="tedesign", description="Sample-constrained treatment effect designs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a synthetic dataset",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--synthetic", nargs="*", default=[], metavar="KEY=VALUE",
                   help="n=, d=, sigma= (noise sd, default 1/sqrt(d)), seed=")
    p.add_argument("--out-x", required=False, default="x.csv", help="covariates output path")
    p.add_argument("--out-y", required=False, default="y.csv", help="outcomes output path")
    _add_common(p)

    p = sub.add_parser("leverage", help="print leverage scores of a covariate file",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--gamma", type=float, default=None, help="score the smoothed matrix for this threshold")
    p.add_argument("--out", default=None, help="write scores here instead of standard output")
    _add_common(p, x=True, seed=False)

    p = sub.add_parser("design-ite", help="run the leverage sampling design once",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--fraction", type=float, default=0.2, help="target sample size as a fraction of n")
    p.add_argument("--mode", choices=("budget", "theory"), default="budget", help="probability rule")
    p.add_argument("--c0", type=float, default=1.0, help="oversampling constant")
    p.add_argument("--out", default=None, help="write per-unit ITE estimates here")
    _add_common(p, x=True, y=True)

    p = sub.add_parser("design-ate", help="run the recursive balancing design once",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--fraction", type=float, default=0.3, help="budget as a fraction of n")
    p.add_argument("--phi", type=float, default=0.5, help="walk robustness parameter in (0, 1]")
    p.add_argument("--out", default=None, help="write the final partition (unit,arm) here")
    _add_common(p, x=True, y=True)

    p = sub.add_parser("experiment", help="Monte Carlo comparison against the baselines",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("task", choices=("ite", "ate"))
    p.add_argument("--synthetic", nargs="*", default=None, metavar="KEY=VALUE",
                   help="use a synthetic dataset instead of --x/--y")
    p.add_argument("--methods", default=None, help="comma-separated subset of method labels")
    p.add_argument("--fractions", type=_fractions, default=experiments.DEFAULT_FRACTIONS,
                   help="comma-separated sample fractions")
    p.add_argument("--trials", type=int, default=1000, help="trials per method and fraction")
    p.add_argument("--phi", type=float, default=0.5, help="walk robustness parameter")
    p.add_argument("--c0", type=float, default=1.0, help="oversampling constant")
    p.add_argument("--mode", choices=("budget", "theory"), default="budget", help="ITE probability rule")
    p.add_argument("--literal-uniform", action="store_true", help="ITE Uniform baseline uses pi = s/n verbatim")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--out", default="records.csv", help="records CSV path")
    p.add_argument("--summary", default=None, help="also write the summary CSV here")
    _add_common(p, x=True, y=True)

    p = sub.add_parser("summarize", help="aggregate a records CSV",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--records", required=False, default="records.csv", help="records CSV")
    p.add_argument("--out", default=None, help="summary CSV path (standard output if omitted)")
    p.add_argument("--config", default=None, help="flat key=value file of option defaults")
    return parser


def _read_config(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def _apply_config(parser, argv, args):
    """Re-parse with config-file values as defaults so flags still win."""
    if not getattr(args, "config", None):
        return args
    values = _read_config(args.config)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in values.items():
        action = known.get(key)
        if action is None or key in ("help", "config"):
            raise UsageError(f"{args.config}: unknown option {key!r}")
        if action.nargs == 0:
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif action.nargs == "*":
            defaults[key] = raw.split()
        elif action.type is not None:
            try:
                defaults[key] = action.type(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"{args.config}: bad value for {key}: {exc}") from None
        else:
            defaults[key] = raw
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _effective(args):
    cfg = {k: v for k, v in vars(args).items() if k != "verbose"}
    return json.dumps(cfg, default=str, sort_keys=True)


def _need(args, *names):
    for name in names:
        if getattr(args, name, None) in (None, ""):
            raise UsageError(f"{args.command}: --{name.replace('_', '-')} is required")


def _load(args):
    if getattr(args, "synthetic", None) is not None:
        return data.make_synthetic(_synthetic_spec(args.synthetic, args.seed))
    _need(args, "x", "y")
    return data.load_dataset(args.x, args.y, header=args.header, shift=args.shift)


def cmd_gen(args):
    spec = _synthetic_spec(args.synthetic, args.seed)
    X, outcomes = data.make_synthetic(spec)
    data.save_dataset(args.out_x, args.out_y, X, outcomes, header=args.header)
    print(f"wrote {X.n}x{X.d} covariates to {args.out_x} and outcomes to {args.out_y}")


def cmd_leverage(args):
    _need(args, "x")
    X = data.load_covariates(args.x, header=args.header)
    if args.gamma is None:
        scores = leverage_scores(X).scores
    else:
        sm = smoothed_matrix(X, args.gamma)
        scores = leverage_scores(sm.matrix, sm.factors).scores
    lines = "\n".join(data.FLOAT_FMT.format(v) for v in scores) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(lines)
    else:
        sys.stdout.write(lines)


def cmd_design_ite(args):
    X, outcomes = _load(args)
    rng = np.random.default_rng(args.seed)
    s = args.fraction * X.n
    est = ite.sampling_ite(X, OutcomeOracle(outcomes.y1, outcomes.y0), rng, mode=args.mode, s=s, c0=args.c0)
    if est.degenerate:
        raise EmptySample(f"|S0|={len(est.sets.s0)}, |S1|={len(est.sets.s1)}; raise --fraction")
    err = ite.rmse(est.ite_hat, outcomes.y1, outcomes.y0)
    print(f"rmse={err!r} sample_size={est.realized_sample_size} "
          f"|S0|={len(est.sets.s0)} |S1|={len(est.sets.s1)} top_direction_only={est.gamma_clipped}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("ite_hat\n")
            for v in est.ite_hat:
                fh.write(data.FLOAT_FMT.format(v) + "\n")


def cmd_design_ate(args):
    X, outcomes = _load(args)
    rng = np.random.default_rng(args.seed)
    s = experiments.budget_size(args.fraction, X.n)
    design = ate.recursive_balance(X, s, GswParams(phi=args.phi), rng)
    est = ate.recursive_estimate(design, OutcomeOracle(outcomes.y1, outcomes.y0), X.n)
    print(f"tau_hat={est.tau_hat!r} tau={outcomes.ate!r} depth={design.depth_k} "
          f"sample_size={est.realized_sample_size} budget={s}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("unit,arm\n")
            for j in design.final_plus:
                fh.write(f"{j},1\n")
            for j in design.final_minus:
                fh.write(f"{j},0\n")


def cmd_experiment(args):
    X, outcomes = _load(args)
    methods = tuple(m.strip() for m in args.methods.split(",")) if args.methods else ()
    try:
        config = experiments.ExperimentConfig(
            task=args.task, methods=methods, fractions=args.fractions, trials=args.trials,
            master_seed=args.seed, phi=args.phi, c0=args.c0, mode=args.mode,
            literal_uniform=args.literal_uniform, jobs=args.jobs,
        )
        GswParams(phi=args.phi)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = experiments.run_experiment(X, outcomes, config)
    experiments.write_records(args.out, result.records)
    for (method, fraction), count in sorted(result.degenerate.items()):
        print(f"degenerate: {method} fraction={fraction} trials={count}", file=sys.stderr)
    if args.summary:
        experiments.write_summary(args.summary, experiments.summarize(result.records))
    print(f"wrote {len(result.records)} records to {args.out}")


def cmd_summarize(args):
    rows = experiments.summarize(experiments.read_records(args.records))
    if args.out:
        experiments.write_summary(args.out, rows)
    else:
        sys.stdout.write(",".join(experiments.SUMMARY_HEADER) + "\n")
        for r in rows:
            sys.stdout.write(f"{r.method},{r.fraction!r},{r.mean!r},{r.p30!r},{r.p70!r},"
                             f"{r.mean_sample_size!r},{r.trial_count}\n")


COMMANDS = {
    "gen": cmd_gen,
    "leverage": cmd_leverage,
    "design-ite": cmd_design_ite,
    "design-ate": cmd_design_ate,
    "experiment": cmd_experiment,
    "summarize": cmd_summarize,
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
        args = _apply_config(parser, argv, args)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if hasattr(args, "seed") and args.seed is None:
            args.seed = int(np.random.SeedSequence().entropy % 2**32)
        print(f"config: {_effective(args)}", file=sys.stderr)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DesignError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
