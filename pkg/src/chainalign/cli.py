"""Command-line surface: params, align, validate.

Exit codes: 0 = success / condition verdict pass, 1 = file, parse or
usage error, 2 = condition verdict fail (including nonnegative drift or
no positive cycle), 3 = verdict unresolved.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import formats
from .align import make_sequences, scan_counts, score_matrix_scan
from .conditions import condition_verdict
from .errors import (
    ChainAlignError,
    ConditionNotVerified,
    DriftNotNegative,
    ModelError,
    ModelFileError,
    NoPositiveCycle,
    SeedRequired,
)
from .ladder import GumbelParams, gumbel_params, normalize_score, simulate_ladder
from .model import check_positivity_condition, check_shift_condition, stationary
from .montecarlo import run_grid
from .spectral import solve_theta_star

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAIL = 2
EXIT_UNRESOLVED = 3

DEFAULT_NS = (500, 2000, 8000)
DEFAULT_XS = (-1.0, 0.0, 1.0, 2.0)
DEFAULT_REPLICATES = 2000
DEFAULT_CYCLES = 200_000
DEFAULT_TAIL_REPS = 50_000


def _f(v: float) -> str:
    return repr(float(v))


def _estimate_params(model, tilted, seed, n_cycles, tail_reps) -> tuple[GumbelParams, object]:
    ladder = simulate_ladder(model, tilted, n_cycles, seed, tail_reps=tail_reps)
    return gumbel_params(tilted, ladder), ladder


def _load_or_estimate_params(args, model, tilted, out):
    if args.params_cache_in:
        params, meta = formats.load_params(args.params_cache_in)
        if meta.get("model_sha256") not in (None, formats.model_sha256(model)):
            raise ModelFileError(
                f"{args.params_cache_in}: params cache was computed for a different model"
            )
        out.append(f"params cache: {args.params_cache_in} (seed={meta.get('seed')})")
        return params, None
    if args.seed is None:
        raise SeedRequired("K* estimation is stochastic: pass --seed (and optionally --replicates)")
    n_cycles = args.replicates if args.replicates else DEFAULT_CYCLES
    config = {
        "command": "estimate-params",
        "model_sha256": formats.model_sha256(model),
        "n_cycles": n_cycles,
        "tail_reps": args.tail_reps,
    }
    out.extend(formats.header_lines(args.seed, config))
    params, ladder = _estimate_params(model, tilted, args.seed, n_cycles, args.tail_reps)
    return params, ladder


def cmd_params(args) -> int:
    out: list[str] = []
    model = formats.load_model(args.model)
    stat = stationary(model)
    out.append(f"model: |E|={model.alphabet_size} "
               f"score={'transition' if model.is_transition else 'pair'} lattice={model.lattice}")
    if model.score_divisor != 1:
        out.append(f"score table rescaled by 1/{model.score_divisor} (gcd normalisation)")
    out.append(f"mu = {_f(stat.mu)}")
    try:
        witness = check_positivity_condition(model)
        if witness is None:
            raise NoPositiveCycle("no positive-score cycle pair exists (max mean cycle <= 0)")
        out.append(
            f"positive cycle: x={list(witness.x_cycle)} y={list(witness.y_cycle)} "
            f"score={_f(witness.total_score)} (max mean {_f(witness.max_mean)})"
        )
        tilted = solve_theta_star(model, stat)
    except (DriftNotNegative, NoPositiveCycle) as e:
        out.append(f"error: {type(e).__name__}: {e}")
        print("\n".join(out))
        return EXIT_FAIL

    out.append(f"theta* = {_f(tilted.theta_star)}")
    out.append(f"mu* = {_f(tilted.mu_star)}")
    E2 = model.alphabet_size**2
    dev = float(np.max(np.abs(tilted.R_star.sum(axis=1) - 1.0)))
    out.append(f"R*: {E2}x{E2} row-stochastic (max row-sum deviation {dev:.2e})")
    out.append("pi* = [" + ", ".join(_f(v) for v in tilted.pi_star) + "]")

    report = condition_verdict(tilted)
    out.append(
        f"sufficient test (g* = 3 theta* f/4): phi1={_f(report.phi1_gstar)} "
        f"phi2={_f(report.phi2_gstar)} -> {'pass' if report.sufficient_pass else 'fail'}"
    )
    if report.J1 is not None:
        out.append(f"J1 = {_f(report.J1)} ({report.J1_status}), J2 = {_f(report.J2)} ({report.J2_status})")
        out.append(f"2 min(J1,J2) vs 3 theta* mu*: {_f(2 * min(report.J1, report.J2))} vs {_f(report.threshold)}")
    if report.iid_closed_form is not None:
        c = report.iid_closed_form
        out.append(
            f"iid closed form: H(pi*|pi1xpi2)={_f(c.H_joint)} H1={_f(c.H1)} H2={_f(c.H2)} "
            f"-> condition21 {'pass' if c.condition21 else 'fail'}"
        )
    out.append(f"condition verdict: {report.condition12}")

    shift = check_shift_condition(model, T_max=args.t_max)
    if shift.additive_form:
        out.append("shift condition: score is additive f1(x)+f2(y); no witness can exist")
    else:
        status = " ".join(
            f"T={T}:{'witness' if shift.witness_found(T) else 'none'}"
            for T in sorted(shift.found)
        )
        out.append(f"shift condition (diagnostic): {status}")

    if args.replicates is not None or args.params_cache_out:
        try:
            params, ladder = _load_or_estimate_params(args, model, tilted, out)
        except SeedRequired as e:
            print("\n".join(out))
            print(f"error: {e}", file=sys.stderr)
            return EXIT_USAGE
        out.append(f"K* = {_f(params.K_star)} +- {_f(params.K_star_stderr)}")
        if ladder is not None:
            out.append(
                f"ladder: cycles={ladder.n_cycles} mu_minus={_f(ladder.mu_minus)}"
                f" +- {_f(ladder.mu_minus_stderr)} wald={_f(ladder.wald_mu_minus)}"
            )
        if args.params_cache_out:
            formats.save_params(
                args.params_cache_out,
                params,
                {
                    "seed": args.seed,
                    "n_cycles": args.replicates if args.replicates else DEFAULT_CYCLES,
                    "tail_reps": args.tail_reps,
                    "model_sha256": formats.model_sha256(model),
                },
            )
            out.append(f"params cache written: {args.params_cache_out}")

    print("\n".join(out))
    if report.condition12 == "pass":
        return EXIT_OK
    if report.condition12 == "fail":
        return EXIT_FAIL
    return EXIT_UNRESOLVED


def cmd_align(args) -> int:
    model = formats.load_model(args.model)
    xs = formats.load_sequences(args.seq_x, model)
    ys = formats.load_sequences(args.seq_y, model)
    if not xs or not ys:
        raise ModelFileError("each sequence file must contain at least one sequence line")
    seqs = make_sequences(xs[0], ys[0], model.alphabet_size)

    stat = stationary(model)
    tilted = solve_theta_star(model, stat)
    out: list[str] = []
    params, _ = _load_or_estimate_params(args, model, tilted, out)

    result = score_matrix_scan(model, seqs, min_peak=args.min_peak)
    out.append(f"n_x={seqs.n_x} n_y={seqs.n_y}")
    out.append(f"M_n = {_f(result.m_n)}")
    out.append(f"excursions: {result.n_excursions}")
    sp, pv = normalize_score(params, result.m_n, seqs.n_x, seqs.n_y)
    out.append(f"normalized max score s' = {_f(sp)}  p-value = {_f(pv)}")
    if args.t:
        th = np.array([float(t) for t in args.t])
        _, counts, _ = scan_counts(model, seqs, th)
        for t, c in zip(args.t, counts):
            out.append(f"C_n({_f(float(t))}) = {int(c)}")
    rows = sorted(result.excursions, key=lambda e: (-e.peak, e.i, e.j))
    out.append("i,j,delta,peak,s_prime,p_value,end_reason")
    for e in rows[: args.max_rows]:
        esp, epv = normalize_score(params, e.peak, seqs.n_x, seqs.n_y)
        out.append(
            f"{e.i},{e.j},{e.delta},{_f(e.peak)},{_f(esp)},{_f(epv)},{e.end_reason}"
        )
    if len(rows) > args.max_rows:
        out.append(f"... {len(rows) - args.max_rows} more rows (raise --max-rows)")
    print("\n".join(out))
    return EXIT_OK


def cmd_validate(args) -> int:
    model = formats.load_model(args.model)
    stat = stationary(model)
    tilted = solve_theta_star(model, stat)
    report = condition_verdict(tilted)
    if report.condition12 != "pass" and not args.override_conditions:
        raise ConditionNotVerified(
            f"condition verdict is {report.condition12!r}; rerun with --override-conditions "
            f"to validate anyway"
        )

    out: list[str] = []
    params, _ = _load_or_estimate_params(args, model, tilted, out)
    if args.nx is not None or args.ny is not None:
        if args.nx is None or args.ny is None or args.n:
            raise ModelFileError("--nx and --ny go together and replace --n")
        ns: list = [(int(args.nx), int(args.ny))]
    else:
        ns = [int(n) for n in (args.n if args.n else DEFAULT_NS)]
    xs = [float(x) for x in (args.x if args.x else DEFAULT_XS)]
    runs = run_grid(model, params, ns, xs, args.replicates, args.seed, threads=args.threads)

    config = {
        "command": "validate",
        "model_sha256": formats.model_sha256(model),
        "theta_star": params.theta_star,
        "K_star": params.K_star,
        "n": ns,
        "x": xs,
        "replicates": args.replicates,
        "threads_note": "results are thread-count independent",
    }
    if args.format == "csv":
        formats.write_csv(args.output, runs, args.seed, config)
    else:
        formats.write_json_lines(args.output, runs, args.seed, config)
    for line in out:
        print(line)
    for run in runs:
        print(
            f"n={run.n_x} x={_f(run.x)} lambda={_f(run.target_lambda)} "
            f"tv={_f(run.tv_distance)} p_hat={_f(run.p_hat)} target={_f(run.gumbel_target)}"
        )
    print(f"wrote {len(runs)} rows to {args.output}")
    return EXIT_OK


def _add_params_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="master seed for stochastic steps")
    p.add_argument("--replicates", type=int, default=None,
                   help="ladder cycles for K* estimation (params/align)")
    p.add_argument("--tail-reps", type=int, default=DEFAULT_TAIL_REPS,
                   help="importance-sampling trajectories per start state")
    p.add_argument("--params-cache", dest="params_cache_in", default=None,
                   help="read theta*/K* from a cache file instead of estimating")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chainalign",
                                 description="Gapless local alignment statistics of Markov chains")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("params", help="theta*, condition report and K* for a model")
    p.add_argument("--model", required=True)
    p.add_argument("--t-max", type=int, default=8, help="largest shift T to probe")
    _add_params_opts(p)
    p.add_argument("--params-cache-out", dest="params_cache_out", default=None,
                   help="write the estimated params to this cache file")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("align", help="score a pair of sequences")
    p.add_argument("--model", required=True)
    p.add_argument("--x", dest="seq_x", required=True, help="file with the first sequence")
    p.add_argument("--y", dest="seq_y", required=True, help="file with the second sequence")
    p.add_argument("--t", action="append", default=None, help="threshold for C_n(t); repeatable")
    p.add_argument("--min-peak", type=float, default=None,
                   help="only record excursions with peak above this")
    p.add_argument("--max-rows", type=int, default=50)
    _add_params_opts(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("validate", help="Monte Carlo check of the Poisson/Gumbel limits")
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--replicates", type=int, default=DEFAULT_REPLICATES)
    p.add_argument("--n", action="append", default=None, help="sequence length; repeatable")
    p.add_argument("--nx", type=int, default=None, help="first-sequence length (with --ny)")
    p.add_argument("--ny", type=int, default=None, help="second-sequence length (with --nx)")
    p.add_argument("--x", action="append", default=None, help="threshold parameter; repeatable")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--format", choices=("csv", "json-lines"), default="csv")
    p.add_argument("--output", required=True)
    p.add_argument("--override-conditions", action="store_true")
    p.add_argument("--tail-reps", type=int, default=DEFAULT_TAIL_REPS)
    p.add_argument("--params-cache", dest="params_cache_in", default=None)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ModelFileError, ModelError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SeedRequired as e:
        print(f"error: SeedRequired: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DriftNotNegative, NoPositiveCycle) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAIL
    except ConditionNotVerified as e:
        print(f"error: ConditionNotVerified: {e}", file=sys.stderr)
        return EXIT_FAIL
    except ChainAlignError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_UNRESOLVED


if __name__ == "__main__":
    sys.exit(main())
