"""Command-line front end.

Four subcommands: ``tables`` (analytic ratio and bound tables), ``fit``
(posterior of k on a dataset, by pooled-sequence estimators over fixed-k
chains or by the variable-k sampler), ``hyper`` (data-driven choice of tau
and delta), and ``oracle`` (exact cross-checks on the builtin toy sets).

Every run writes into its own directory named by the command and a hash of
the resolved configuration, so re-running the same configuration reproduces
the same files byte for byte.  Flags can also be supplied through a flat
key=value config file; explicit flags win.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import ModelSpec
from .datasets import TOY_NAMES, galaxy_path, toy_data
from .estimators import (
    PriorOnK,
    bayes_factor_empty,
    fdagger_sequence,
    fstar_sequence,
    bf_chain,
    hypothetical_ratio_table,
    posterior_bounds,
    posterior_over_k,
    prior_poisson1,
    prior_uniform,
)
from .oracle import (
    enumerate_exact,
    exact_posterior_k,
    identity_checks,
    quadrature_checks,
)
from .samplers import (
    ChainConfig,
    HyperState,
    default_delta_upper,
    hyper_median_table,
    run_all_k_chains,
    run_vark_chain,
    run_vark_hyper_chain,
    suggest_hyper,
)

__all__ = ["main", "read_dataset", "cmd_tables", "cmd_fit", "cmd_hyper", "cmd_oracle"]

_COMMANDS = ("tables", "fit", "hyper", "oracle")


class DatasetError(ValueError):
    pass


def read_dataset(path) -> np.ndarray:
    """Observations from a text file, one numeric value per line.

    Blank lines and lines starting with '#' are skipped.  Errors carry the
    offending line number.  At least two observations are required.
    """
    vals = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            try:
                v = float(s)
            except ValueError:
                raise DatasetError(f"{path}: line {lineno}: not a number: {s!r}") from None
            if not math.isfinite(v):
                raise DatasetError(f"{path}: line {lineno}: non-finite value")
            vals.append(v)
    if len(vals) < 2:
        raise DatasetError(f"{path}: need at least 2 observations, found {len(vals)}")
    return np.asarray(vals, dtype=float)


def _resolve_data(name: str) -> tuple[np.ndarray, str]:
    if name == "galaxy":
        from importlib import resources

        with resources.as_file(galaxy_path()) as p:
            return read_dataset(p), "galaxy"
    if name in TOY_NAMES:
        return toy_data(name), name
    return read_dataset(name), name


def default_mu(data) -> float:
    """Sample mean rounded to one significant digit (a round value close to
    the mean; 20.83 becomes 20)."""
    m = float(np.mean(data))
    if m == 0.0:
        return 0.0
    return float(f"{m:.1g}")


def _make_prior(family: str, kmax: int) -> PriorOnK:
    if family == "uniform":
        return prior_uniform(kmax)
    if family == "poisson1":
        return prior_poisson1(kmax)
    raise ValueError(f"unknown prior family {family!r}")


# ---------------------------------------------------------------------------
# output plumbing

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.12g" % float(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def _csv_cell(v) -> str:
    s = _fmt(v)
    if any(ch in s for ch in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def _write_csv(path: Path, header, rows) -> None:
    lines = [",".join(_csv_cell(c) for c in header)]
    for row in rows:
        lines.append(",".join(_csv_cell(c) for c in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


_ECHO_SKIP = {"func", "out", "config"}


def _run_dir(args, command: str) -> Path:
    params = {k: v for k, v in vars(args).items() if k not in _ECHO_SKIP}
    lines = [f"command={command}"]
    for key in sorted(params):
        lines.append(f"{key}={_fmt(params[key])}")
    echo = "\n".join(lines) + "\n"
    out_root = args.out or os.environ.get("MIXPOST_OUTDIR") or "mixpost-runs"
    tag = hashlib.sha256(echo.encode()).hexdigest()[:12]
    d = Path(out_root) / f"{command}-{tag}"
    d.mkdir(parents=True, exist_ok=True)
    (d / "config.echo").write_text(echo, encoding="utf-8")
    return d


def _int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}")


# ---------------------------------------------------------------------------
# subcommands

def cmd_tables(args) -> int:
    if args.bounds == args.hypothetical:
        print("tables: pass exactly one of --bounds / --hypothetical", file=sys.stderr)
        return 2
    d = _run_dir(args, "tables")

    if args.hypothetical:
        if args.n is None or len(args.n) != 1:
            print("tables --hypothetical needs a single --n", file=sys.stderr)
            return 2
        n = args.n[0]
        ks = args.ks if args.ks else list(range(args.h0, args.h0 + 7))
        vals = hypothetical_ratio_table(n, args.h0, args.alpha, ks, args.mode)
        _write_csv(d / "hypothetical.csv", ["k", "ratio"], zip(ks, vals))
        print(f"hypothetical posterior ratios, n={n}, h0={args.h0}, mode={args.mode}")
        for k, v in zip(ks, vals):
            print(f"  k={k:<3d} {v:.5f}")
    else:
        if not args.n:
            print("tables --bounds needs --n (comma-separated sample sizes)", file=sys.stderr)
            return 2
        prior = _make_prior(args.prior, args.kmax)
        rows = []
        print(f"posterior bounds, prior={args.prior}, alpha={args.alpha:g}, kmax={args.kmax}")
        for n in args.n:
            b = posterior_bounds(n, prior, args.alpha)
            rows.extend((n, k, b[k - 1]) for k in range(1, args.kmax + 1))
            shown = " ".join(f"{v:.4f}" for v in b[:10])
            print(f"  n={n:<5d} k=1..10: {shown}")
        _write_csv(d / "bounds.csv", ["n", "k", "bound"], rows)

    print(f"wrote {d}")
    return 0


def _write_chain_summaries(d: Path, summaries) -> None:
    for s in summaries:
        rows = []
        for t in range(1, s.k + 1):
            rows.append(("star", t, s.visits_star[t - 1], s.se_star[t - 1]))
        for h in range(1, min(s.k, s.n) + 1):
            rows.append(("tilde", h, s.visits_tilde[h - 1], s.se_tilde[h - 1]))
        _write_csv(d / f"summary_k{s.k}.csv", ["kind", "index", "estimate", "se"], rows)


def _write_marlik(d: Path, marlik) -> None:
    rows = []
    for k in range(1, marlik.kmax + 1):
        se_f = marlik.se_f_norm[k - 1] if marlik.se_f_norm is not None else None
        lbf = marlik.log_bf[k - 2] if k >= 2 else None
        se_bf = (
            marlik.se_log_bf[k - 2]
            if (k >= 2 and marlik.se_log_bf is not None)
            else None
        )
        rows.append((k, marlik.log_f_norm[k - 1], se_f, lbf, se_bf))
    _write_csv(
        d / "marlik.csv",
        ["k", "log_f_norm", "se_f_norm", "log_bf", "se_log_bf"],
        rows,
    )


def _print_posterior(prior: PriorOnK, posterior: np.ndarray, top: int = 10) -> None:
    order = np.argsort(posterior)[::-1]
    keep = sorted(int(i) for i in order[:top] if posterior[i] > 5e-5)
    for i in keep:
        print(f"  k={i + 1:<3d} posterior={posterior[i]:.4f} prior={prior.pi[i]:.4f}")


def cmd_fit(args) -> int:
    data, label = _resolve_data(args.data)
    n = len(data)
    mean = float(np.mean(data))
    s2 = float(np.var(data, ddof=1))
    print(f"dataset {label}: n={n} mean={mean:.6g} s2={s2:.6g}")

    mu = args.mu if args.mu is not None else default_mu(data)
    spec = ModelSpec(k=1, alpha=args.alpha, mu=mu, tau=args.tau, gamma=args.gamma, delta=args.delta)
    prior = _make_prior(args.prior_k, args.kmax)
    if args.init == "warm" and args.parallel > 1:
        print("fit: warm-start chains run sequentially; use --init single with --parallel",
              file=sys.stderr)
        return 2
    try:
        config = ChainConfig(
            sweeps=args.sweeps, burnin=args.burnin, thin=args.thin, seed=args.seed,
            scan=args.scan, batches=args.batches, dim_moves=args.dim_moves,
        )
    except ValueError as e:
        print(f"fit: {e}", file=sys.stderr)
        return 2
    d = _run_dir(args, "fit")

    if args.estimator == "vark":
        res = run_vark_chain(data, spec, prior, config)
        _write_csv(
            d / "posterior_k.csv",
            ["k", "prior", "posterior", "se"],
            (
                (k, prior.pi[k - 1], res.posterior_k[k - 1], res.se_k[k - 1])
                for k in range(1, args.kmax + 1)
            ),
        )
        # implied normalized marginal likelihoods where k was visited
        with np.errstate(divide="ignore"):
            logf = np.where(
                res.posterior_k > 0, np.log(res.posterior_k) - prior.log_pi, -np.inf
            )
        visited = np.isfinite(logf)
        from scipy.special import logsumexp

        logf[visited] -= logsumexp(logf[visited])
        _write_csv(
            d / "marlik.csv",
            ["k", "log_f_norm"],
            ((k, logf[k - 1] if visited[k - 1] else None) for k in range(1, args.kmax + 1)),
        )
        bp, ba = res.accept["birth"]
        dp, da = res.accept["death"]
        print(f"variable-k run: {res.kept} kept sweeps, "
              f"birth acceptance {ba}/{bp}, death acceptance {da}/{dp}")
        print("posterior of k (variable-k sampler):")
        _print_posterior(prior, res.posterior_k)
        print(f"wrote {d}")
        return 0

    summaries = run_all_k_chains(
        data, spec, args.kmax, config,
        warm_start=args.init == "warm",
        parallel=args.parallel,
        progress=lambda k: print(f"  chain k={k} done", file=sys.stderr),
    )
    _write_chain_summaries(d, summaries)
    estimator = {"fstar": fstar_sequence, "fdagger": fdagger_sequence, "bf": bf_chain}[args.estimator]
    try:
        if args.estimator == "bf":
            marlik = estimator(summaries, args.alpha)
        else:
            marlik = estimator(summaries, args.alpha, weighting=args.weighting)
    except ValueError as e:
        print(f"fit: estimator degenerate: {e}", file=sys.stderr)
        return 3
    posterior = posterior_over_k(marlik.log_f_norm, prior)
    _write_marlik(d, marlik)
    _write_csv(
        d / "posterior_k.csv",
        ["k", "prior", "posterior"],
        ((k, prior.pi[k - 1], posterior[k - 1]) for k in range(1, args.kmax + 1)),
    )
    for note in marlik.diagnostics:
        print(f"  note: {note}")
    print(f"posterior of k ({args.estimator} estimator, {args.prior_k} prior):")
    _print_posterior(prior, posterior)
    if marlik.truncated_at is not None:
        print(
            f"fit: warning: no chain information beyond k={marlik.truncated_at};"
            " the posterior is reported as zero there",
            file=sys.stderr,
        )
    print(f"wrote {d}")
    return 0


def cmd_hyper(args) -> int:
    data, label = _resolve_data(args.data)
    n = len(data)
    mean = float(np.mean(data))
    s2 = float(np.var(data, ddof=1))
    print(f"dataset {label}: n={n} mean={mean:.6g} s2={s2:.6g}")

    mu = args.mu if args.mu is not None else default_mu(data)
    try:
        delta_upper = args.delta_upper if args.delta_upper is not None else default_delta_upper(data, args.gamma)
        delta0 = args.delta0 if args.delta0 is not None else 0.5 * delta_upper
        hyper = HyperState(tau=args.tau0, delta=delta0, delta_upper=delta_upper)
        config = ChainConfig(
            sweeps=args.sweeps, burnin=args.burnin, thin=args.thin, seed=args.seed,
            scan=args.scan, batches=args.batches, dim_moves=args.dim_moves,
        )
    except ValueError as e:
        print(f"hyper: {e}", file=sys.stderr)
        return 2
    spec = ModelSpec(k=1, alpha=args.alpha, mu=mu, tau=args.tau0, gamma=args.gamma, delta=delta0)
    prior = _make_prior(args.prior_k, args.kmax)
    d = _run_dir(args, "hyper")

    res = run_vark_hyper_chain(data, spec, prior, config, hyper)
    table = hyper_median_table(
        res.k_draws, res.tau_draws, res.delta_draws,
        min_draws=args.min_draws, quantiles=tuple(args.quantiles),
    )

    qlabels = [f"{q:g}" for q in table.quantiles]
    header = ["k", "count"] + [f"tau_q{q}" for q in qlabels] + [f"delta_q{q}" for q in qlabels]
    rows = [
        [int(table.ks[i]), int(table.counts[i])] + list(table.tau_q[i]) + list(table.delta_q[i])
        for i in range(len(table.ks))
    ]
    _write_csv(d / "hyper_medians.csv", header, rows)

    tp, ta = res.accept["tau"]
    dp, da = res.accept["delta"]
    print(f"mu={mu:g} delta_upper={delta_upper:.6g}; acceptance after burn-in: "
          f"tau {ta / max(tp, 1):.2f}, delta {da / max(dp, 1):.2f}")
    med = table.quantiles.index(0.5)
    print("per-k posterior quantiles (draws with at least "
          f"{args.min_draws} visits):")
    print("  k   count  tau[q25 med q75]              delta[q25 med q75]")
    lo = table.quantiles.index(0.25) if 0.25 in table.quantiles else med
    hi = table.quantiles.index(0.75) if 0.75 in table.quantiles else med
    for i, k in enumerate(table.ks):
        print(
            f"  {k:<3d} {table.counts[i]:<6d}"
            f" {table.tau_q[i, lo]:.4g} {table.tau_q[i, med]:.4g} {table.tau_q[i, hi]:.4g}"
            f"    {table.delta_q[i, lo]:.4g} {table.delta_q[i, med]:.4g} {table.delta_q[i, hi]:.4g}"
        )
    for k, cnt in table.excluded:
        print(f"  k={k}: only {cnt} draws, excluded")

    try:
        sug = suggest_hyper(table, rel_tol=args.rel_tol)
    except ValueError as e:
        print(f"hyper: {e}", file=sys.stderr)
        return 3
    if not sug.leveled:
        print("  warning: medians never leveled off; estimates use the last"
              " usable k and should be read with care")
    print(f"suggested tau={sug.tau:.6g} delta={sug.delta:.6g}"
          f" (draws pooled over k>={sug.k_cutoff}, leveled={str(sug.leveled).lower()})")
    print(f"wrote {d}")
    return 0


def cmd_oracle(args) -> int:
    d = _run_dir(args, "oracle")
    rows = []
    failed = 0

    if args.suite == "quadrature":
        tol = 1e-6
        for label, closed, quadval, rel in quadrature_checks():
            ok = rel < tol
            failed += not ok
            rows.append(("quadrature", label, rel, tol, "pass" if ok else "FAIL"))
            print(f"{'PASS' if ok else 'FAIL'} quadrature {label}: "
                  f"closed={closed:.10g} quad={quadval:.10g} rel={rel:.3g}")
    elif args.suite == "identities":
        tol = 1e-10
        data = toy_data(args.toy)
        enum = enumerate_exact(data, ModelSpec(k=1, alpha=args.alpha), kmax=args.kmax)
        for name, detail, rel in identity_checks(enum, args.alpha):
            ok = rel < tol
            failed += not ok
            rows.append((name, detail, rel, tol, "pass" if ok else "FAIL"))
            print(f"{'PASS' if ok else 'FAIL'} {name} {detail}: rel={rel:.3g}")
    else:
        data = toy_data(args.toy)
        spec = ModelSpec(k=1, alpha=args.alpha)
        enum = enumerate_exact(data, spec, kmax=args.kmax)
        exact_norm = np.exp(enum.log_f - np.logaddexp.reduce(enum.log_f))
        config = ChainConfig(sweeps=args.sweeps, burnin=1000, thin=1, seed=args.seed)
        summaries = run_all_k_chains(data, spec, args.kmax, config)
        for name, fn in (("fstar", fstar_sequence), ("fdagger", fdagger_sequence)):
            marlik = fn(summaries, args.alpha)
            est = np.exp(marlik.log_f_norm)
            for k in range(1, args.kmax + 1):
                se = marlik.se_f_norm[k - 1]
                z = abs(est[k - 1] - exact_norm[k - 1]) / se if se > 0 else np.inf
                ok = z <= 3.0
                failed += not ok
                rows.append((f"{name}-norm", f"k={k}", z, 3.0, "pass" if ok else "FAIL"))
                print(f"{'PASS' if ok else 'FAIL'} {name} k={k}: exact={exact_norm[k - 1]:.6f}"
                      f" est={est[k - 1]:.6f} se={se:.2g} z={z:.2f}")
        for k in range(2, args.kmax + 1):
            exact_bf = enum.log_f[k - 1] - enum.log_f[k - 2]
            try:
                bf = bayes_factor_empty(summaries[k - 1], args.alpha)
            except ValueError as e:
                failed += 1
                rows.append(("bf", f"k={k}", np.inf, 3.0, "FAIL"))
                print(f"FAIL bf k={k}: {e}")
                continue
            z = abs(bf.log_bf - exact_bf) / bf.se_log_bf if bf.se_log_bf > 0 else np.inf
            ok = z <= 3.0
            failed += not ok
            rows.append(("bf", f"k={k}", z, 3.0, "pass" if ok else "FAIL"))
            print(f"{'PASS' if ok else 'FAIL'} bf k={k}: exact={exact_bf:.5f}"
                  f" est={bf.log_bf:.5f} se={bf.se_log_bf:.2g} z={z:.2f}")

    _write_csv(d / "oracle_report.csv", ["check", "detail", "value", "tolerance", "status"], rows)
    print(f"wrote {d}")
    if failed:
        print(f"oracle: {failed} checks failed", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# argument wiring

def _add_common_run_flags(p, sweeps, burnin):
    p.add_argument("--sweeps", type=int, default=sweeps)
    p.add_argument("--burnin", type=int, default=burnin)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--scan", choices=["systematic", "random"], default="systematic")
    p.add_argument("--batches", type=int, default=20)
    p.add_argument("--dim-moves", type=int, default=5,
                   help="dimension-move proposals per sweep (variable-k chains)")
    p.add_argument("--out", default=None, help="output root (default $MIXPOST_OUTDIR or ./mixpost-runs)")
    p.add_argument("--config", default=None, help="flat key=value config file; flags win")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mixpost",
        description="Posterior on the number of components in a normal mixture.",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tables", help="analytic ratio and bound tables")
    p.add_argument("--bounds", action="store_true")
    p.add_argument("--hypothetical", action="store_true")
    p.add_argument("--n", type=_int_list, default=None,
                   help="sample size(s); comma-separated for --bounds")
    p.add_argument("--h0", type=int, default=1, help="occupied component count")
    p.add_argument("--ks", type=_int_list, default=None,
                   help="k values for --hypothetical (default h0..h0+6)")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--mode", choices=["with-binomial", "without-binomial", "poi1-posterior"],
                   default="with-binomial")
    p.add_argument("--kmax", type=int, default=50)
    p.add_argument("--prior", choices=["uniform", "poisson1"], default="uniform")
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_tables)

    p = sub.add_parser("fit", help="posterior of k on a dataset")
    p.add_argument("--data", default="galaxy",
                   help=f"file path, 'galaxy', or one of {'/'.join(TOY_NAMES)}")
    p.add_argument("--kmax", type=int, default=50)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=None,
                   help="prior location (default: sample mean to 1 significant digit)")
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--estimator", choices=["fdagger", "fstar", "bf", "vark"], default="fdagger")
    p.add_argument("--prior-k", choices=["uniform", "poisson1"], default="uniform")
    p.add_argument("--weighting", choices=["equal", "invvar"], default="equal")
    p.add_argument("--init", choices=["warm", "single"], default="warm",
                   help="warm: chain k starts from chain k-1's final allocation")
    p.add_argument("--parallel", type=int, default=1,
                   help="worker threads for fixed-k chains (needs --init single)")
    _add_common_run_flags(p, sweeps=20000, burnin=1000)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("hyper", help="data-driven choice of tau and delta")
    p.add_argument("--data", default="galaxy")
    p.add_argument("--kmax", type=int, default=50)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--tau0", type=float, default=1.0, help="initial tau")
    p.add_argument("--delta0", type=float, default=None, help="initial delta (default delta_upper/2)")
    p.add_argument("--delta-upper", type=float, default=None,
                   help="upper end of the uniform prior on delta (default (gamma-1)*s^2)")
    p.add_argument("--prior-k", choices=["uniform", "poisson1"], default="poisson1")
    p.add_argument("--min-draws", type=int, default=100)
    p.add_argument("--rel-tol", type=float, default=0.25,
                   help="relative median change that counts as leveled off")
    p.add_argument("--quantiles", type=_float_list, default=[0.005, 0.25, 0.5, 0.75, 0.995])
    _add_common_run_flags(p, sweeps=200000, burnin=5000)
    p.set_defaults(func=cmd_hyper)

    p = sub.add_parser("oracle", help="exact cross-checks on builtin toy data")
    p.add_argument("--suite", choices=["identities", "estimators", "quadrature"],
                   default="identities")
    p.add_argument("--toy", choices=list(TOY_NAMES), default="n5")
    p.add_argument("--kmax", type=int, default=3)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--sweeps", type=int, default=200000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_oracle)

    return ap


def _config_file_tokens(path: str) -> list[str]:
    tokens = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            key, sep, val = s.partition("=")
            if not sep:
                raise DatasetError(f"{path}: line {lineno}: expected key=value")
            key = key.strip().replace("_", "-")
            val = val.strip()
            if val.lower() == "true":
                tokens.append(f"--{key}")
            elif val.lower() == "false":
                pass  # booleans are only used for on/off switches
            else:
                tokens.extend([f"--{key}", val])
    return tokens


def _expand_config(argv: list[str]) -> list[str]:
    """Splice config-file tokens in ahead of explicit flags, so the command
    line wins on conflicts (argparse keeps the last occurrence)."""
    if not argv or argv[0] not in _COMMANDS:
        return argv
    rest = argv[1:]
    path = None
    cleaned = []
    i = 0
    while i < len(rest):
        tok = rest[i]
        if tok == "--config":
            if i + 1 >= len(rest):
                raise DatasetError("--config needs a file path")
            path = rest[i + 1]
            i += 2
            continue
        if tok.startswith("--config="):
            path = tok.split("=", 1)[1]
            i += 1
            continue
        cleaned.append(tok)
        i += 1
    if path is None:
        return argv
    return [argv[0]] + _config_file_tokens(path) + cleaned


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _expand_config(argv)
    except (OSError, DatasetError) as e:
        print(f"mixpost: {e}", file=sys.stderr)
        return 2
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DatasetError as e:
        print(f"mixpost: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"mixpost: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"mixpost: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
