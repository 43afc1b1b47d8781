"""Command-line interface: synth, unmix, eval, selftest.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. Diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import engine, io, metrics, priors, synth
from .core import partition_image
from .errors import ConfigError, DataError, NumericalError


def _apply_threads(threads) -> None:
    """Cap worker threads for the numerical backends (best effort)."""
    value = threads if threads is not None else os.environ.get("HELEN_THREADS")
    if value is None:
        return
    try:
        n = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid thread count: {value!r}")
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _cmd_synth(args) -> int:
    cfg = io.synth_config_from(io.load_config(args.config))
    truth = synth.generate(cfg)
    io.write_cube(truth.cube, args.out_prefix + ".cube")
    io.write_json(io.truth_to_dict(truth), args.out_prefix + ".truth.json")
    io.write_endmember_csv(truth.base_endmembers, args.out_prefix + ".endmembers.csv")
    return 0


def _cmd_unmix(args) -> int:
    cfg = io.engine_config_from(io.load_config(args.config))
    cube = io.read_cube(args.cube)
    rows = []

    def sink(rec):
        rows.append(rec)

    result = engine.run(cube, cfg, progress=sink)
    io.write_json(io.result_to_dict(result), args.out_prefix + ".result.json")
    with open(args.out_prefix + ".elbo.csv", "w", encoding="ascii",
              newline="\n") as fh:
        fh.write("sweep,elbo,sigma2,gamma,seconds\n")
        for rec in rows:
            fh.write("%d,%.17g,%.17g,%.17g,%.6f\n" % (
                rec["sweep"], rec["elbo"], rec["sigma2"], rec["gamma"],
                rec["seconds"]))
    return 0


def _cmd_eval(args) -> int:
    result = io.read_json(args.result)
    truth = io.read_json(args.truth)
    try:
        grid_doc = result["grid"]
        patch_endmembers = np.asarray(result["endmembers"], dtype=float)
        est_abund = np.asarray(result["abundances"], dtype=float)
        omega = np.asarray(result["outlier_scores"], dtype=float)
        truth_endmembers = np.asarray(truth["per_pixel_endmembers"], dtype=float)
        truth_abund = np.asarray(truth["abundances"], dtype=float)
        mask = np.asarray(truth["outlier_mask"], dtype=bool)
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed result/truth document: {exc}") from exc
    grid = partition_image(grid_doc["rows"], grid_doc["cols"],
                           grid_doc["patch_rows"], grid_doc["patch_cols"])
    est_endmembers = metrics.expand_patch_endmembers(patch_endmembers,
                                                     grid.assignment)
    if est_endmembers.shape != truth_endmembers.shape:
        raise DataError(
            f"endmember shape mismatch: estimate {est_endmembers.shape}"
            f" vs truth {truth_endmembers.shape}")
    report = metrics.evaluate(est_endmembers, est_abund, truth_endmembers,
                              truth_abund, outlier_mask=mask, omega=omega,
                              threshold=args.threshold)
    doc = report.as_dict()
    sys.stdout.write(io.dumps_canonical(doc))
    if args.out:
        io.write_json(doc, args.out)
    return 0


def _selftest_moments(rng) -> list:
    failures = []
    n_samples = 200_000
    for family in priors.FAMILIES:
        post_family = priors.posterior_family_for_prior(family)
        u = rng.uniform(0.5, 5.0, size=(2, 2))
        w = rng.uniform(0.5, 5.0, size=(2, 2))
        mu, var = priors.moments(post_family, u, w)
        if post_family == "beta":
            samples = rng.beta(u, w, size=(n_samples, 2, 2))
        elif post_family == "gaussian":
            samples = u + np.sqrt(w) * rng.standard_normal((n_samples, 2, 2))
        elif post_family == "lognormal":
            samples = np.exp(u + np.sqrt(w) * rng.standard_normal((n_samples, 2, 2)))
        else:  # gamma, shape/rate
            samples = rng.gamma(u, 1.0 / w, size=(n_samples, 2, 2))
        est = samples.mean(axis=0)
        se = samples.std(axis=0) / np.sqrt(n_samples)
        if np.any(np.abs(est - mu) > 5.0 * se + 1e-12):
            failures.append(f"moment mismatch for family {family}")
    return failures


def _selftest_gradients(rng) -> list:
    failures = []
    q = priors.PosteriorParams("beta", rng.uniform(1, 4, (2, 2)),
                               rng.uniform(1, 4, (2, 2)))
    p = priors.PriorParams("beta", rng.uniform(1, 4, (2, 2)),
                           rng.uniform(1, 4, (2, 2)))
    du, dv, dc, dd = priors.kl_gradients(q, p)
    eps = 1e-6
    for name, grad, get, make in (
        ("dU", du, lambda: q.first,
         lambda x: priors.PosteriorParams("beta", x, q.second)),
        ("dV", dv, lambda: q.second,
         lambda x: priors.PosteriorParams("beta", q.first, x)),
    ):
        base = get()
        fd = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            hi = base.copy(); hi[idx] += eps
            lo = base.copy(); lo[idx] -= eps
            fd[idx] = (priors.kl_to_prior(make(hi), p)
                       - priors.kl_to_prior(make(lo), p)) / (2 * eps)
        if np.max(np.abs(fd - grad)) > 1e-4 * max(1.0, float(np.max(np.abs(grad)))):
            failures.append(f"gradient mismatch: {name}")
    return failures


def _selftest_maximizers(rng) -> list:
    failures = []
    omega = rng.uniform(0, 1, size=32)
    gamma = engine.update_gamma(omega)
    grid = np.linspace(1e-4, 1 - 1e-4, 20001)
    logpout = rng.uniform(-3, 0, size=32)

    def obj(g):
        import math as _m
        return float(np.sum(omega * (np.log(g) + logpout - np.log(omega))
                            + (1 - omega) * (np.log1p(-g) - np.log1p(-omega))))

    vals = [obj(g) for g in grid]
    best = grid[int(np.argmax(vals))]
    if abs(best - gamma) > 1e-3:
        failures.append("gamma update is not the mixing-term maximizer")
    return failures


def _cmd_selftest(_args) -> int:
    rng = np.random.default_rng(12345)
    failures = (_selftest_moments(rng) + _selftest_gradients(rng)
                + _selftest_maximizers(rng))
    if failures:
        for f in failures:
            print(f"selftest FAILED: {f}", file=sys.stderr)
        raise NumericalError("selftest failed")
    print("selftest OK")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="helen",
        description="Variational hyperspectral unmixing with endmember"
                    " variability and outlier rejection.")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap worker threads (or set HELEN_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cube with ground truth")
    p.add_argument("--config", required=True)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("unmix", help="run the unmixing engine on a cube file")
    p.add_argument("--config", required=True)
    p.add_argument("--cube", required=True)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_unmix)

    p = sub.add_parser("eval", help="score a result against ground truth")
    p.add_argument("--result", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("selftest", help="run the built-in numerical checks")
    p.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_threads(args.threads)
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
