"""Command line entry point: ``blockspin <command> MODEL.json [options]``.

Exit codes: 0 success, 2 invalid input (the violated invariant is named on
stderr), 3 numerical failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import numpy as np


from . import __version__, io, limits, oracle, rate, stein
from .errors import NumericalError, ValidationError
from .model import BlockModelSpec, spectral, validate_spec
from .sampler import INITS, SamplerConfig, default_threads, sample_chain


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_sampler_args(p: argparse.ArgumentParser, n_samples: int = 1000) -> None:
    g = p.add_argument_group("sampler")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--burn-in", type=int, default=1000, help="burn-in sweeps (N steps each)")
    g.add_argument("--thinning", type=int, default=1, help="sweeps between retained samples")
    g.add_argument("--n-samples", type=int, default=n_samples, help="retained samples per chain")
    g.add_argument("--n-chains", type=int, default=1)
    g.add_argument("--init", choices=INITS[:2], default="all_plus")


def _sampler_config(args) -> SamplerConfig:
    return SamplerConfig(seed=args.seed, burn_in=args.burn_in, thinning=args.thinning,
                         n_samples=args.n_samples, n_chains=args.n_chains, init=args.init)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockspin", description="Block spin Ising model toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("model", help="model JSON file")
    common.add_argument("--gamma-inf", type=_float_list, default=None,
                        help="comma-separated asymptotic square-root block proportions")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: BLOCKSPIN_THREADS or logical cores)")
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", parents=[common], help="check a model and report its regime")

    p = sub.add_parser("oracle", parents=[common], help="exact law of the block sums as CSV")
    p.add_argument("--cap", type=int, default=oracle.ENUMERATION_CAP)

    p = sub.add_parser("sample", parents=[common], help="Glauber samples of the block sums as CSV")
    _add_sampler_args(p)

    p = sub.add_parser("analyze-rate", parents=[common], help="critical points of the rate function")
    p.add_argument("--n-starts", type=int, default=None)
    p.add_argument("--method", choices=("newton", "damped_fixed_point"), default="newton")

    p = sub.add_parser("verify-clt", parents=[common], help="compare E m_hat m_hat^T with the limit covariance")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--samples", help="sampler CSV")
    src.add_argument("--exact", action="store_true", help="use the exact law")
    src.add_argument("--sample", action="store_true", help="run the sampler inline")
    _add_sampler_args(p)

    p = sub.add_parser("critical", parents=[common], help="critical statistic against the quartic limit")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--samples", help="sampler CSV")
    src.add_argument("--sample", action="store_true", help="run the sampler inline")
    p.add_argument("--convolve", action="store_true", help="add the Gaussian smoothing noise")
    p.add_argument("--csv", default=None, help="write the statistic samples here")
    _add_sampler_args(p)

    p = sub.add_parser("stein-rate", parents=[common], help="Stein error terms along a size sweep")
    p.add_argument("--sizes", type=_int_list, required=True, help="comma-separated system sizes, ascending")
    p.add_argument("--csv", default=None, help="write the per-size table here")
    _add_sampler_args(p, n_samples=2000)
    return parser


def _load(args, require_pd: bool = True):
    spec = BlockModelSpec.load(args.model)
    scaling = validate_spec(spec, gamma_inf=args.gamma_inf, require_pd=require_pd)
    return spec, scaling


def _emit_report(args, report: dict, manifest: io.RunManifest, data_written: bool = False) -> None:
    report = {"manifest": manifest.to_dict(), **report}
    if data_written:
        # --out holds the CSV; the report goes next to it
        io.write_text(args.out + ".json", io.dumps(report))
    else:
        io.write_text(args.out, io.dumps(report))


def cmd_validate(args) -> dict:
    spec, scaling = _load(args)
    sd = spectral(spec, scaling, "asymptotic")
    sd_n = spectral(spec, scaling, "finite_n")
    return {
        "valid": True,
        "k": spec.k,
        "N": spec.N,
        "regime": sd.regime.value,
        "op_norm": sd.op_norm,
        "eigenvalues": sd.eigenvalues,
        "finite_n_op_norm": sd_n.op_norm,
        "gamma_n": scaling.gamma_n,
        "gamma_inf": scaling.gamma_inf,
        "uniform": scaling.is_uniform(),
    }


def cmd_oracle(args):
    spec, _ = _load(args, require_pd=False)
    pmf = oracle.exact_pmf(spec, cap=args.cap)
    header = [f"m_{i + 1}" for i in range(spec.k)] + ["prob"]
    rows = [header] + [list(map(int, s)) + [float(p)] for s, p in zip(pmf.support, pmf.probs)]
    io.write_text(args.out, io.csv_text(rows))
    return {"logZ": pmf.logZ, "states": len(pmf.probs),
            "second_moments_m_hat": oracle.exact_moments(pmf, spec, 2)}


def cmd_sample(args):
    spec, scaling = _load(args)
    cfg = _sampler_config(args)
    samples = sample_chain(spec, scaling, cfg, threads=args.threads)
    header = ["chain", "index"] + [f"m_{i + 1}" for i in range(spec.k)] + [f"m_hat_{i + 1}" for i in range(spec.k)]
    rows = [header]
    root = np.sqrt(spec.sizes)
    for c, chain in enumerate(samples.m):
        rows.extend([c, t, *map(int, row), *map(float, row / root)] for t, row in enumerate(chain))
    io.write_text(args.out, io.csv_text(rows))
    if samples.metastable:
        print("warning: metastable: chain may not mix", file=sys.stderr)
    return samples.metadata()


def cmd_analyze_rate(args) -> dict:
    spec, scaling = _load(args)
    points = rate.find_maximizers(spec, scaling, n_starts=args.n_starts, method=args.method)
    maxima = rate.global_maxima(points)
    identity = [abs(p.value - rate.critical_value_identity(spec, scaling, p)) for p in points]
    structured = rate.structured_solution(spec, scaling)
    return {
        "regime": spectral(spec, scaling, "asymptotic").regime.value,
        "critical_points": [p.to_dict() for p in points],
        "global_maxima": [p.to_dict() for p in maxima],
        "identity_max_abs_diff": max(identity) if identity else None,
        "structured_solution": structured.to_dict() if structured is not None else None,
        "search_note": "multi-start search; completeness is best effort",
    }


def _samples_from(args, spec, scaling):
    if args.samples:
        return io.read_m_csv(args.samples, spec.k)
    return sample_chain(spec, scaling, _sampler_config(args), threads=args.threads).m


def cmd_verify_clt(args) -> dict:
    spec, scaling = _load(args)
    if args.exact:
        rep = limits.clt_check(spec, scaling, pmf=oracle.exact_pmf(spec))
    else:
        rep = limits.clt_check(spec, scaling, samples=_samples_from(args, spec, scaling))
    return rep.to_dict()


def cmd_critical(args) -> dict:
    spec, scaling = _load(args)
    m = _samples_from(args, spec, scaling)
    rep = limits.critical_check(spec, scaling, m, convolve=args.convolve, seed=args.seed)
    if args.csv:
        header = [f"w_{i + 1}" for i in range(spec.k)]
        io.write_text(args.csv, io.csv_text([header] + [list(map(float, r)) for r in rep.w_prime_samples]))
    return rep.to_dict()


def cmd_stein_rate(args) -> dict:
    spec, scaling = _load(args)
    sweep = stein.rate_sweep(spec, scaling, args.sizes, _sampler_config(args), threads=args.threads)
    if args.csv:
        io.write_text(args.csv, io.csv_text(sweep.csv_rows()))
    return sweep.to_dict()


COMMANDS = {
    "validate": (cmd_validate, False),
    "oracle": (cmd_oracle, True),
    "sample": (cmd_sample, True),
    "analyze-rate": (cmd_analyze_rate, False),
    "verify-clt": (cmd_verify_clt, False),
    "critical": (cmd_critical, False),
    "stein-rate": (cmd_stein_rate, False),
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is None:
        args.threads = default_threads()
    fn, writes_data = COMMANDS[args.command]
    try:
        report = fn(args)
        spec_digest = BlockModelSpec.load(args.model).digest()
        manifest = io.make_manifest(args.command, spec_digest, getattr(args, "seed", None))
        if writes_data:
            # data goes to --out (or stdout); the report is a sidecar when there is a file
            if args.out not in (None, "-"):
                _emit_report(args, report, manifest, data_written=True)
        else:
            _emit_report(args, report, manifest)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
