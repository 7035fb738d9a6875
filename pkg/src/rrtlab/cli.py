"""Command-line surface: simulate, verify, converge, limits.

Exit codes are a stable contract: 0 success, 1 configuration error, 2 I/O
error, 3 verification failure.

Records stream in a long row format (replicate id, n, seed, observable
name, value) as CSV with a fixed column order or as JSON lines, each line
carrying a schema field. A config file of ``key = value`` lines (# comments allowed)
may pre-set any long flag; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict

from . import coalescent, experiments, limits, measures, oracle, trees

SCHEMA = "rrtlab/1"
CSV_COLUMNS = ("replicate", "n", "seed", "observable", "value")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # config errors exit 1, not argparse's 2
        raise CliError(1, f"{self.prog}: {message}")


# --------------------------------------------------------------------------- #
# Record emission
# --------------------------------------------------------------------------- #


class RecordWriter:
    def __init__(self, stream, fmt: str):
        if fmt not in ("csv", "jsonl"):
            raise CliError(1, f"unknown format {fmt!r}")
        self.stream = stream
        self.fmt = fmt
        if fmt == "csv":
            stream.write(",".join(CSV_COLUMNS) + "\n")

    def write(self, replicate: int, n: int, seed: int, observable: str, value) -> None:
        if self.fmt == "csv":
            self.stream.write(f"{replicate},{n},{seed},{observable},{value}\n")
        else:
            self.stream.write(
                json.dumps(
                    {
                        "schema": SCHEMA,
                        "replicate": replicate,
                        "n": n,
                        "seed": seed,
                        "observable": observable,
                        "value": value,
                    },
                    separators=(",", ":"),
                )
                + "\n"
            )


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    try:
        return open(path, "w"), True
    except OSError as exc:
        raise CliError(2, f"cannot open {path}: {exc}") from exc


# --------------------------------------------------------------------------- #
# Subcommands
# --------------------------------------------------------------------------- #


def _cmd_simulate(args) -> int:
    tracked = _parse_int_list(args.track) if args.track else []
    stream, close = _open_out(args.out)
    try:
        writer = RecordWriter(stream, args.format)
        for r in range(args.replicates):
            rng = experiments.replicate_rng(args.seed, r)
            if args.model == "rrt":
                tree = trees.grow_rrt(args.n, rng)
                deg = trees.degrees(tree)
                top, att = trees.max_degree_set(tree)
                writer.write(r, args.n, args.seed, "max_degree", top)
                writer.write(r, args.n, args.seed, "max_multiplicity", len(att))
                writer.write(r, args.n, args.seed, "degree_1", int(deg[1]))
                writer.write(r, args.n, args.seed, "depth_n", int(trees.depths(tree)[args.n]))
            else:
                _, tree, records = coalescent.run_kingman(args.n, rng, tracked=tracked)
                deg = trees.degrees(tree)
                dep = trees.depths(tree)
                writer.write(r, args.n, args.seed, "root", tree.root)
                for v in tracked:
                    rec = records[v]
                    writer.write(r, args.n, args.seed, f"selection_size_{v}", rec.size)
                    writer.write(r, args.n, args.seed, f"degree_{v}", int(deg[v]))
                    writer.write(r, args.n, args.seed, f"depth_{v}", int(dep[v]))
                # the co-selection time is defined for a prefix {1..k}
                if len(tracked) >= 2 and sorted(tracked) == list(range(1, len(tracked) + 1)):
                    writer.write(
                        r, args.n, args.seed, "tau", coalescent.tau_k(records, len(tracked))
                    )
    finally:
        if close:
            stream.close()
    return 0


def _cmd_verify(args) -> int:
    failures = []
    print(f"verification up to n = {args.max_n}")
    for n in range(2, args.max_n + 1):
        census = oracle.chain_census(n, tracked=(1, 2) if n >= 2 else (1,))
        report = oracle.verify_phi(n, census=census) if n <= oracle.MAX_VERIFY_N else None
        if report is not None:
            line = (
                f"n={n}: chains={report.chain_total} trees={report.tree_total} "
                f"fiber={report.expected_fiber}"
            )
            if report.ok:
                print(f"  {line}  ok")
            else:
                print(f"  {line}  FAILED")
                failures.extend(report.failures)
        for k in range(0, n):
            for l in range(0, n):
                lhs, rhs = oracle.degree_depth_identity_sides(census, 1, k, l)
                if lhs != rhs:
                    failures.append(f"n={n}: joint identity fails at (k={k}, l={l}): {lhs} != {rhs}")
        size_law = census.selection_law(1)
        deg_law = {}
        for (d, h), mass in census.vertex_law(1).items():
            deg_law[d] = deg_law.get(d, 0) + mass
        if deg_law != oracle.min_geometric_pmf(size_law):
            failures.append(f"n={n}: degree law != min(geometric, selection size)")
        tree_side = oracle.tree_census(n)
        if tree_side.multiset_law() != census.multiset_law():
            failures.append(f"n={n}: degree/depth multiset laws differ between routes")
        if tree_side.uniform_label_law() != census.vertex_law(1):
            failures.append(f"n={n}: uniform-label law differs from exchangeable vertex law")
        print(f"  n={n}: exact identities ok")
    if args.emit_golden:
        try:
            oracle.write_golden(args.emit_golden, max_n=min(args.max_n, oracle.MAX_VERIFY_N))
        except OSError as exc:
            raise CliError(2, f"cannot write golden file: {exc}") from exc
        print(f"golden laws written to {args.emit_golden}")
    if failures:
        for f in failures:
            print(f"FAIL: {f}", file=sys.stderr)
        raise CliError(3, f"{len(failures)} verification failures")
    print("all checks passed")
    return 0


def _schedule_n(args) -> int:
    if args.n is not None:
        return args.n
    if args.level is None:
        raise CliError(1, "give --n or --level")
    return measures.subsequence_schedule(args.eps, args.level, args.level)[0]


def _write_samples(args, n: int, columns: dict) -> None:
    """Emit per-sample rows (one observable per column entry) to --data."""
    if not args.data:
        return
    stream, close = _open_out(args.data)
    try:
        writer = RecordWriter(stream, args.format)
        for name, values in columns.items():
            for idx, value in enumerate(values):
                writer.write(idx, n, args.seed, name, float(value))
    finally:
        if close:
            stream.close()


def _cmd_converge(args) -> int:
    out_prefix = args.out
    reports: dict = {"schema": SCHEMA, "experiment": args.experiment}
    status = 0

    if args.experiment == "depth-clt":
        n = _schedule_n(args)
        rep = experiments.depth_clt_experiment(n, args.replicates, args.seed)
        reports.update(_cond_report_dict(rep))
        print(f"depth-clt n={n} replicates={rep.trials}: ks={rep.ks[0].value:.4f}")
        _write_samples(args, n, {"z_1": rep.z[:, 0]})
    elif args.experiment == "cond-depth":
        n = _schedule_n(args)
        a = _parse_float_list(args.a)
        b = _parse_int_list(args.b)
        rep = experiments.conditional_depth_experiment(
            n, len(a), a, b, args.replicates if not args.min_retained else None,
            args.seed, min_retained=args.min_retained or None,
        )
        reports.update(_cond_report_dict(rep))
        ks = ", ".join(f"{g.value:.4f}" for g in rep.ks)
        print(
            f"cond-depth n={n} m={rep.thresholds}: retained={rep.retained}/{rep.trials} "
            f"acceptance*2^m={rep.acceptance_scaled:.4f} ks=[{ks}] status={rep.status}"
        )
        if rep.status == "underpowered":
            print("warning: underpowered conditioning; results are partial", file=sys.stderr)
        _write_samples(args, n, {f"z_{i + 1}": rep.z[:, i] for i in range(rep.k)})
    elif args.experiment in ("ppp", "moments"):
        n = _schedule_n(args)
        if args.fdd:
            windows = limits.parse_fdd(args.fdd).entries
        else:
            levels = _parse_int_list(args.levels)
            windows = tuple(
                limits.FddEntry(j, limits.REAL_LINE, tail) for j in levels for tail in (True, False)
            )
        exponent_sets = []
        if args.exps:
            exponent_sets = [tuple(_parse_int_list(args.exps))]
            if len(exponent_sets[0]) != len(windows):
                raise CliError(1, "--exps length must match the window list")
        summary = experiments.run_degree_depth_survey(
            n, args.replicates, args.seed, windows, exponent_sets, workers=args.workers
        )
        rows = experiments.window_mean_report(summary, args.eps)
        reports["rows"] = [asdict(r) for r in rows]
        print(f"{args.experiment} n={n} replicates={summary.replicates}")
        for row in rows:
            print(
                f"  {row.entry:>24s}: mean={row.empirical:.5f} (se {row.standard_error:.5f})"
                f" predicted={row.predicted:.5f} rel_err={100 * row.relative_error:+.1f}%"
            )
        for s, exps in enumerate(summary.exponent_sets):
            est = summary.factorial_moment(s)
            print(f"  factorial moment {exps}: {est:.5f} (se {summary.factorial_moment_se(s):.5f})")
            reports.setdefault("factorial_moments", []).append(
                {"exponents": list(exps), "estimate": est, "se": summary.factorial_moment_se(s)}
            )
    elif args.experiment == "max-mult":
        n = _schedule_n(args)
        windows = (limits.FddEntry(0, limits.REAL_LINE, True),)
        summary = experiments.run_degree_depth_survey(
            n, args.replicates, args.seed, windows, workers=args.workers
        )
        rep = experiments.max_multiplicity_report(summary, args.eps, args.seed)
        reports["tv"] = rep.tv.value
        reports["depth_ks"] = rep.depth_ks.value
        reports["pmf"] = {str(k): v for k, v in rep.pmf_empirical.items()}
        print(
            f"max-mult n={n}: tv={rep.tv.value:.4f} depth_ks={rep.depth_ks.value:.4f} "
            f"(samples {rep.depth_ks.sample_size})"
        )
        _write_samples(args, n, {"argmax_depth": summary.argmax_depths})
    elif args.experiment == "h2":
        ns = _parse_int_list(args.n_list)
        rows = experiments.h2_negligibility_experiment(ns, args.replicates, args.seed)
        reports["rows"] = [asdict(r) for r in rows]
        for r in rows:
            flag = " (degenerate cutoff)" if r.degenerate else ""
            print(f"  n={r.n}: P(h2 >= {r.threshold:.3f}) = {r.probability:.4f}{flag}")
    elif args.experiment == "tau":
        n = _schedule_n(args)
        rep = experiments.tau_experiment(n, args.k, args.replicates, args.seed)
        reports.update(
            {"probability": rep.probability, "bound": rep.bound, "mc_sigma": rep.mc_sigma}
        )
        print(
            f"tau n={n} k={args.k}: P(tau > ln^2 n) = {rep.probability:.4f} "
            f"(bound {rep.bound:.4f}, mc sigma {rep.mc_sigma:.4f})"
        )
    else:  # pragma: no cover - argparse restricts choices
        raise CliError(1, f"unknown experiment {args.experiment}")

    if out_prefix:
        try:
            with open(out_prefix, "w") as fh:
                json.dump(reports, fh, indent=1, default=str)
                fh.write("\n")
        except OSError as exc:
            raise CliError(2, f"cannot write report: {exc}") from exc
    return status


def _cond_report_dict(rep) -> dict:
    return {
        "n": rep.n,
        "k": rep.k,
        "thresholds": list(rep.thresholds),
        "trials": rep.trials,
        "retained": rep.retained,
        "acceptance": rep.acceptance,
        "acceptance_scaled": rep.acceptance_scaled,
        "status": rep.status,
        "ks": [g.value for g in rep.ks],
        "correlations": {f"{i},{j}": v for (i, j), v in rep.correlations.items()},
    }


def _cmd_limits(args) -> int:
    did = False
    if args.mu_sigma is not None:
        p = limits.limit_params(args.mu_sigma)
        print(f"mu_{p.a:g} = {p.mu:.7f}   sigma2_{p.a:g} = {p.sigma2:.7f}")
        did = True
    if args.intensity is not None:
        print(f"intensity({args.intensity:g}) = {limits.ppp_intensity(args.intensity):.6f}")
        did = True
    if args.meps is not None:
        ks = _parse_range(args.k or "1..10")
        total = 0.0
        bound = 0.0
        for k in ks:
            val = limits.m_eps_pmf(k, args.meps, args.trunc)
            total += val.value
            bound = max(bound, val.truncation_error)
            print(f"P(multiplicity = {k}) = {val.value:.12f}   (truncation error <= {val.truncation_error:.2e})")
        print(f"partial sum over k in {ks.start}..{ks.stop - 1}: {total:.12f} (< 1; tail excluded)")
        did = True
    if args.poisson_means:
        fdd = _parse_fdd_arg(args.poisson_means)
        pred = limits.poisson_means(fdd, args.eps)
        for entry, mean in zip(fdd.entries, pred.means):
            print(f"mean[{entry}] = {mean:.8f}")
        did = True
    if args.moment_pred:
        fdd = _parse_fdd_arg(args.moment_pred)
        exps = _parse_int_list(args.exps or "")
        if len(exps) != len(fdd.entries):
            raise CliError(1, "--exps must align with the window family")
        value = limits.factorial_moment_prediction(fdd, exps, args.eps)
        print(f"factorial moment prediction = {value:.10f}")
        did = True
    if not did:
        raise CliError(1, "limits: nothing to do (see --help)")
    return 0


def _parse_fdd_arg(text: str) -> limits.CanonicalFDD:
    try:
        return limits.parse_fdd(text)
    except ValueError as exc:
        raise CliError(1, f"bad window family {text!r}: {exc}") from exc


# --------------------------------------------------------------------------- #
# Argument plumbing
# --------------------------------------------------------------------------- #


def _parse_int_list(text: str) -> list[int]:
    return [int(tok) for tok in str(text).split(",") if tok.strip() != ""]


def _parse_float_list(text: str) -> list[float]:
    return [float(tok) for tok in str(text).split(",") if tok.strip() != ""]


def _parse_range(text: str) -> range:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return range(int(lo), int(hi) + 1)
    v = int(text)
    return range(v, v + 1)


def _load_config(path: str) -> dict:
    conf = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise CliError(1, f"{path}:{lineno}: expected key = value")
                key, val = (part.strip() for part in line.split("=", 1))
                conf[key.replace("-", "_")] = val
    except OSError as exc:
        raise CliError(2, f"cannot read config {path}: {exc}") from exc
    return conf


def build_parser() -> _Parser:
    parser = _Parser(prog="rrtlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="stream per-replicate observables")
    sim.add_argument("--model", choices=("rrt", "kingman"), required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--replicates", type=int, default=1)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--track", default="", help="comma-separated labels (kingman)")
    sim.add_argument("--out", default=None)
    sim.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    sim.add_argument("--config", default=None)
    sim.set_defaults(func=_cmd_simulate)

    ver = sub.add_parser("verify", help="exact small-n verification suite")
    ver.add_argument("--max-n", type=int, default=4)
    ver.add_argument("--emit-golden", default=None, help="write exact laws to this JSON file")
    ver.add_argument("--config", default=None)
    ver.set_defaults(func=_cmd_verify)

    con = sub.add_parser("converge", help="run a named convergence experiment")
    con.add_argument(
        "experiment",
        choices=("depth-clt", "cond-depth", "ppp", "max-mult", "moments", "h2", "tau"),
    )
    con.add_argument("--n", type=int, default=None)
    con.add_argument("--level", "--l", dest="level", type=int, default=None)
    con.add_argument("--eps", type=float, default=0.0)
    con.add_argument("--replicates", type=int, default=10_000)
    con.add_argument("--seed", type=int, default=0)
    con.add_argument("--workers", type=int, default=1)
    con.add_argument("--a", default="0", help="degree fractions, comma separated")
    con.add_argument("--b", default="0", help="degree offsets, comma separated")
    con.add_argument("--min-retained", type=int, default=0)
    con.add_argument("--k", type=int, default=2)
    con.add_argument("--levels", default="0,1,2,3")
    con.add_argument("--fdd", default=None)
    con.add_argument("--exps", default=None)
    con.add_argument("--n-list", default="4096,65536")
    con.add_argument("--out", default=None, help="JSON report path")
    con.add_argument("--data", default=None, help="raw per-sample records path")
    con.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    con.add_argument("--config", default=None)
    con.set_defaults(func=_cmd_converge)

    lim = sub.add_parser("limits", help="print closed-form limiting quantities")
    lim.add_argument("--mu-sigma", type=float, default=None, metavar="A")
    lim.add_argument("--intensity", type=float, default=None, metavar="X")
    lim.add_argument("--meps", type=float, default=None, metavar="EPS")
    lim.add_argument("--k", default=None, help="range like 1..10")
    lim.add_argument("--trunc", type=int, default=60)
    lim.add_argument("--poisson-means", default=None, metavar="FDD")
    lim.add_argument("--moment-pred", default=None, metavar="FDD")
    lim.add_argument("--exps", default=None)
    lim.add_argument("--eps", type=float, default=0.0)
    lim.add_argument("--config", default=None)
    lim.set_defaults(func=_cmd_limits)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            conf = _load_config(args.config)
            known = {a.dest for a in parser._actions}
            for walk in parser._subparsers._group_actions:
                for p in walk.choices.values():
                    known |= {a.dest for a in p._actions}
            unknown = set(conf) - known
            if unknown:
                raise CliError(1, f"unknown config keys: {sorted(unknown)}")
            # config provides defaults; explicit flags already parsed win
            for key, val in conf.items():
                current = getattr(args, key, None)
                default = _default_of(parser, args.command, key)
                if current == default:
                    setattr(args, key, _coerce_like(default, val))
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


def _default_of(parser, command, key):
    for walk in parser._subparsers._group_actions:
        sub = walk.choices.get(command)
        if sub is not None:
            for action in sub._actions:
                if action.dest == key:
                    return action.default
    return None


def _coerce_like(default, val: str):
    if isinstance(default, bool):
        return val.lower() in ("1", "true", "yes")
    if isinstance(default, int) and default is not None:
        return int(val)
    if isinstance(default, float) and default is not None:
        return float(val)
    return val


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
