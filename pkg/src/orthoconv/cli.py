"""Command-line interface: one subcommand per operation, one JSON report on stdout.

Exit codes: 0 success, 2 invalid input, 3 numeric contract violation.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .convmat import MAX_DENSE_ENTRIES
from .core import (
    Architecture,
    Case,
    KernelTensor,
    PaddingMode,
    case_of,
    construct_orthogonal,
    exists_orthogonal,
    glorot_uniform_init,
    validate_architecture,
)
from .errors import ContractViolation, OrthoConvError
from .lorth import gradient_check, lorth, lorth_raw
from .optim import (
    OptimizerConfig,
    count_eligible,
    minimize_lorth,
    repeat_square_case,
    stability_across_n,
    sweep_architectures,
    write_stability_csv,
)
from .residual import (
    FROBENIUS_GAP_TOL,
    aip_check,
    residual_report,
    same_padding_structure,
    valid_co_obstruction,
)
from .spectral import DEFAULT_MAX_ITER, DEFAULT_TOL, extremal_singular_values, singular_values_full

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_CONTRACT = 3

GRADCHECK_TOL = 1e-5
LORTH_FLOOR = -1e-12
AIP_TOL = 1e-10
OBSTRUCTION_GAP = 1.0 / 3.0 - 1e-12


class UsageError(OrthoConvError):
    pass


def _int_list(text: str) -> list:
    """Parse ``"1-6"``, ``"1,2,4"`` or a mix such as ``"1-3,8"``."""
    values = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else part[1:].split("-", 1)
            values.extend(range(int(lo), int(hi) + 1))
        else:
            values.append(int(part))
    return values


def _arch(ns) -> Architecture:
    arch = Architecture(ns.d, ns.M, ns.C, ns.k, ns.S)
    validate_architecture(arch)
    return arch


def _load_kernel(ns) -> KernelTensor:
    try:
        return KernelTensor.load(ns.kernel)
    except OSError as exc:
        raise UsageError(f"cannot read kernel file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"kernel file is not JSON: {exc}") from exc


def _save_kernel(kernel: KernelTensor, path) -> None:
    if path:
        kernel.save(path)


def _config(ns) -> OptimizerConfig:
    return OptimizerConfig(learning_rate=ns.lr, steps=ns.steps, seed=ns.seed,
                           reference_n=getattr(ns, "reference_n", None))


def cmd_exists(ns):
    arch = _arch(ns)
    case = case_of(arch)
    if case is Case.CO:
        condition = f"S={arch.S} <= k={arch.k}"
    else:
        condition = f"M={arch.M} <= C*k^d={arch.C * arch.k**arch.d}"
    return {"exists": exists_orthogonal(arch), "case": case.value, "condition_checked": condition}, []


def cmd_construct(ns):
    kernel = construct_orthogonal(_arch(ns))
    _save_kernel(kernel, ns.out)
    return {"kernel": kernel.to_dict(), "case": case_of(kernel.arch).value}, []


def cmd_init(ns):
    kernel = glorot_uniform_init(_arch(ns), ns.seed)
    _save_kernel(kernel, ns.out)
    return {"kernel": kernel.to_dict()}, []


def cmd_lorth(ns):
    kernel = _load_kernel(ns)
    raw = lorth_raw(kernel)
    violations = [f"raw L_orth {raw} below {LORTH_FLOOR}"] if raw < LORTH_FLOOR else []
    return {"lorth": lorth(kernel), "lorth_raw": raw, "case": case_of(kernel.arch).value}, violations


def cmd_gradcheck(ns):
    kernel = _load_kernel(ns)
    rel, abs_err = gradient_check(kernel, ns.step)
    passed = rel <= GRADCHECK_TOL
    out = {"max_rel_error": rel, "max_abs_error": abs_err, "step": ns.step,
           "tolerance": GRADCHECK_TOL, "coordinates": int(kernel.data.size), "passed": passed}
    return out, [] if passed else [f"gradient relative error {rel} exceeds {GRADCHECK_TOL}"]


def cmd_residual(ns):
    kernel = _load_kernel(ns)
    arch = kernel.arch
    if ns.check_theorems and arch.S * ns.N < 2 * arch.k - 1:
        raise UsageError(f"--check-theorems needs S*N >= 2k-1, got S*N={arch.S * ns.N}")
    report = residual_report(kernel, ns.N, max_entries=ns.max_dense_entries)
    out = report.to_dict()
    violations = []
    if ns.check_theorems:
        if report.frobenius_identity_gap > FROBENIUS_GAP_TOL:
            violations.append(f"Frobenius identity gap {report.frobenius_identity_gap} exceeds {FROBENIUS_GAP_TOL}")
        if not report.sandwich_satisfied:
            violations.append("spectral sandwich violated")
    if ns.aip_samples:
        _, worst = aip_check(kernel, ns.N, ns.aip_samples, ns.seed, epsilon=report.err_s)
        out["aip_worst_violation"] = worst
        if worst > AIP_TOL:
            violations.append(f"AIP deficit {worst} exceeds {AIP_TOL}")
    return out, violations


def cmd_singvals(ns):
    kernel = _load_kernel(ns)
    full = ns.mode == "full" if ns.mode else kernel.arch.S == 1
    if full:
        spectrum = singular_values_full(kernel, ns.N)
    else:
        spectrum = extremal_singular_values(kernel, ns.N, tol=ns.tol, max_iter=ns.max_iter, seed=ns.seed)
    return spectrum.to_dict(), []


def cmd_optimize(ns):
    arch = _arch(ns)
    trace = minimize_lorth(arch, _config(ns))
    _save_kernel(trace.kernel, ns.out)
    if ns.trace:
        Path(ns.trace).write_text(json.dumps(trace.lorth_values.tolist()))
    return trace.to_dict(), []


def cmd_sweep(ns):
    d, Ms, Cs, Ss, ks = ns.d, _int_list(ns.M_range), _int_list(ns.C_range), _int_list(ns.S_set), _int_list(ns.k_set)
    eligible, total = count_eligible(Cs, Ms, Ss, ks, d)
    if ns.count_only:
        return {"total": total, "eligible": eligible, "excluded": total - eligible}, []
    if not ns.out:
        raise UsageError("sweep needs --out for the CSV table (or --count-only)")
    config = OptimizerConfig(learning_rate=ns.lr, steps=ns.steps, seed=ns.seed)
    result = sweep_architectures(Cs, Ms, Ss, ks, d, config, spectrum_n=ns.spectrum_n, workers=ns.workers)
    result.write_csv(ns.out)
    return {
        "total": result.total,
        "eligible": len(result.rows),
        "excluded": result.excluded,
        "successes": sum(row.success for row in result.rows),
        "csv": str(ns.out),
    }, []


def cmd_square(ns):
    arch = _arch(ns)
    rate = repeat_square_case(arch, ns.runs, _config(ns))
    return {"success_rate": rate, "runs": ns.runs}, []


def cmd_stability(ns):
    kernel = _load_kernel(ns)
    rows = stability_across_n(kernel, _int_list(ns.Ns), tol=ns.tol, max_iter=ns.max_iter, seed=ns.seed)
    if ns.out:
        write_stability_csv(rows, ns.out)
    violations = [f"N={row.N}: |sigma^2-1|={row.deviation} above bound {row.bound}"
                  for row in rows if not row.within_bound]
    return {"lorth": lorth(kernel), "rows": [asdict(row) for row in rows], "csv": ns.out}, violations


def cmd_obstruction(ns):
    kernel = _load_kernel(ns)
    padding = PaddingMode(ns.padding)
    if padding is PaddingMode.VALID:
        gap = valid_co_obstruction(kernel, ns.N, padding)
        violations = [] if gap >= OBSTRUCTION_GAP else [f"obstruction gap {gap} below 1/3"]
        return {"padding": padding.value, "gap": gap}, violations
    energy = same_padding_structure(kernel, ns.N, tol=ns.tol, padding=padding)
    return {"padding": padding.value, "off_center_energy": energy}, []


def _add_arch(p):
    p.add_argument("-d", type=int, required=True, help="dimensionality (1 or 2)")
    p.add_argument("-M", type=int, required=True, help="output channels")
    p.add_argument("-C", type=int, required=True, help="input channels")
    p.add_argument("-k", type=int, required=True, help="odd kernel extent")
    p.add_argument("-S", type=int, required=True, help="stride")


def _add_kernel(p):
    p.add_argument("--kernel", required=True, metavar="PATH", help="kernel JSON file")


def _add_adam(p):
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=3000)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orthoconv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exists", help="decide whether an orthogonal layer exists")
    _add_arch(p)
    p.set_defaults(func=cmd_exists)

    p = sub.add_parser("construct", help="emit an explicit orthogonal kernel")
    _add_arch(p)
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("init", help="Glorot uniform kernel")
    _add_arch(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("lorth", help="evaluate L_orth")
    _add_kernel(p)
    p.set_defaults(func=cmd_lorth)

    p = sub.add_parser("gradcheck", help="analytic gradient vs central differences")
    _add_kernel(p)
    p.add_argument("--step", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("residual", help="orthogonality residuals of the dense layer matrix")
    _add_kernel(p)
    p.add_argument("-N", type=int, required=True)
    p.add_argument("--check-theorems", action="store_true",
                   help="exit 3 if the Frobenius identity or the spectral sandwich fails")
    p.add_argument("--aip-samples", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-dense-entries", type=int, default=MAX_DENSE_ENTRIES)
    p.set_defaults(func=cmd_residual)

    p = sub.add_parser("singvals", help="singular values of the circular layer")
    _add_kernel(p)
    p.add_argument("-N", type=int, required=True)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--full", dest="mode", action="store_const", const="full")
    mode.add_argument("--extremal", dest="mode", action="store_const", const="extremal")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_singvals, mode=None)

    p = sub.add_parser("optimize", help="minimize L_orth with Adam from a Glorot start")
    _add_arch(p)
    _add_adam(p)
    p.add_argument("--reference-n", type=int, default=None)
    p.add_argument("--out", metavar="PATH", help="write the final kernel JSON here")
    p.add_argument("--trace", metavar="PATH", help="write the per-step L_orth values here")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", help="optimize every eligible architecture of a grid")
    p.add_argument("-d", type=int, required=True)
    p.add_argument("--M-range", required=True, help='e.g. "1-6"')
    p.add_argument("--C-range", required=True)
    p.add_argument("--S-set", required=True, help='e.g. "1,2"')
    p.add_argument("--k-set", required=True)
    _add_adam(p)
    p.add_argument("--spectrum-n", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--count-only", action="store_true")
    p.add_argument("--out", metavar="PATH", help="CSV output")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("square-case", help="success rate over seeded runs in the M = C*S^d case")
    _add_arch(p)
    _add_adam(p)
    p.add_argument("--runs", type=int, default=100)
    p.set_defaults(func=cmd_square)

    p = sub.add_parser("stability", help="extremal singular values across channel sizes")
    _add_kernel(p)
    p.add_argument("--Ns", default="8,16,32,64")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="PATH", help="CSV output")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("obstruction", help="'valid' and zero-padded 'same' obstructions")
    _add_kernel(p)
    p.add_argument("-N", type=int, required=True)
    p.add_argument("--padding", choices=[PaddingMode.VALID.value, PaddingMode.SAME_ZERO.value],
                   default=PaddingMode.VALID.value)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_obstruction)
    return parser


def _inputs(ns) -> dict:
    return {key: value for key, value in vars(ns).items() if key not in ("func", "command")}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)  # argparse itself exits 2 on malformed flags
    start = time.perf_counter()
    try:
        outputs, violations = ns.func(ns)
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (OrthoConvError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    report = {
        "command": ns.command,
        "inputs": _inputs(ns),
        "outputs": outputs,
        "version": __version__,
        "elapsed_ms": int(round((time.perf_counter() - start) * 1000)),
    }
    json.dump(report, sys.stdout)
    sys.stdout.write("\n")
    for message in violations:
        print(f"contract violation: {message}", file=sys.stderr)
    return EXIT_CONTRACT if violations else EXIT_OK
