"""Command-line entry point: ``primephase {sweep,image,noise-study,selftest}``.

Exit status: 0 on success, 1 for configuration or usage errors, 2 when a
run fails.
"""

import argparse
import sys

import numpy as np

from ._validation import ConfigError
from .harness import ExperimentKind, ExperimentSpec, default_jobs, run_and_write

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

_KINDS = {"sweep": ExperimentKind.SPARSE_SWEEP, "image": ExperimentKind.IMAGE_RECOVERY,
          "noise-study": ExperimentKind.NOISE_STUDY}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; we reserve 2 for run failures
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def build_parser():
    parser = _Parser(prog="primephase", description="Undersampled phase retrieval experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in _KINDS:
        p = sub.add_parser(name, help=f"run a {_KINDS[name].value} experiment")
        p.add_argument("--spec", help="JSON experiment spec (schema 1); defaults are used if omitted")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--trials", type=int, help="override the trial count")
        p.add_argument("--out", default="results", help="output directory (default: results)")
        p.add_argument("--jobs", type=int, default=None,
                       help="worker processes (default: $PRIMEPHASE_JOBS or 1)")
        if name == "sweep":
            p.add_argument("--fix-ensemble", action="store_true",
                           help="share one DFT row selection across the trials of each M")
        if name == "image":
            p.add_argument("--image", help="image path, 'texture' or 'synthetic:SIZE[:SEED]'")
    sub.add_parser("selftest", help="run a quick invariant check suite")
    return parser


def _load_spec(args):
    kind = _KINDS[args.command]
    if args.spec:
        spec = ExperimentSpec.load(args.spec)
        if spec.kind is not kind:
            raise ConfigError(f"spec kind {spec.kind.value!r} does not match command {args.command!r}")
        doc = spec.to_dict()
    else:
        doc = {"schema": 1, "kind": kind.value}
    if args.seed is not None:
        doc["master_seed"] = args.seed
    if args.trials is not None:
        doc["trials"] = args.trials
    if getattr(args, "fix_ensemble", False):
        doc["fix_ensemble"] = True
    if getattr(args, "image", None):
        doc["image"] = args.image
    return ExperimentSpec.from_dict(doc)


def selftest(out=None):
    """Small invariant checks; returns True when all pass."""
    out = out or sys.stdout
    from .ambiguity import conjugate_inversion, nse
    from .cprime import CprimeConfig, solve_cprime
    from .measurements import build_partial_dft, sparse_ground_truth, synthesize
    from .prox import dictionary_bound, power_iteration, soft_threshold
    from .scprime import ScprimeConfig, solve_scprime

    checks = []
    rng = np.random.default_rng(0)
    ens = build_partial_dft(32, 16, 1)
    A = ens.dense()
    checks.append(("partial DFT rows orthonormal",
                   np.max(np.abs(A @ A.conj().T - np.eye(16))) <= 1e-12))
    checks.append(("soft threshold scalar", abs(soft_threshold(np.array([3 + 4j]), 1.0)[0] - (2.4 + 3.2j)) < 1e-12))
    truth = sparse_ground_truth(32, 3, 2)
    st = solve_cprime(ens, synthesize(ens, truth), CprimeConfig(max_iter=100, rng_seed=3))
    tr = st.objective_trace
    checks.append(("C-PRIME monotone", bool(np.all(np.diff(tr) <= 1e-9 * (1 + tr[:-1])))))
    x = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    g = np.roll(conjugate_inversion(x), 5) * np.exp(0.3j)
    checks.append(("nse ambiguity invariance", nse(g, x) <= 1e-12))
    D = rng.standard_normal((8, 6)) + 1j * rng.standard_normal((8, 6))
    D /= np.linalg.norm(D, axis=0)
    lam, _ = power_iteration(lambda v: D.conj().T @ (D @ v), 6, random_state=0)
    checks.append(("atom-count bound", lam <= dictionary_bound(6).bound + 1e-9))
    from .measurements import build_complex_gaussian
    g_ens = build_complex_gaussian(16, 8, 4)
    X = rng.standard_normal((16, 12)) + 1j * rng.standard_normal((16, 12))
    sc = solve_scprime(g_ens, np.abs(g_ens.forward(X)), ScprimeConfig(n_atoms=4, max_iter=30, rng_seed=5),
                       record_blocks=True)
    seq = np.concatenate([[sc.objective_trace[0]], sc.block_trace.ravel()])
    checks.append(("SC-PRIME block descent", bool(np.all(np.diff(seq) <= 1e-9 * (1 + seq[:-1])))))
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}", file=out)
    return all(ok for _, ok in checks)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "selftest":
        try:
            return EXIT_OK if selftest() else EXIT_RUNTIME
        except Exception as exc:  # noqa: BLE001 - report any failure as a runtime error
            print(f"selftest failed: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
    try:
        spec = _load_spec(args)
        jobs = args.jobs if args.jobs is not None else default_jobs()
        if jobs < 1:
            raise ConfigError("--jobs must be >= 1")
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        run_and_write(spec, args.out, jobs)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {args.out}/results.csv and {args.out}/results.json")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
