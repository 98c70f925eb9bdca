"""Command-line front end.

Subcommands: verify, hw, decompose, generate, commutant, equiv. Input and
output documents are JSON (see `partialiso.documents`); reports go to
--output or stdout. Exit codes: 0 success, 1 mathematical failure,
2 input or schema error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .documents import (
    SCHEMA_VERSION,
    SchemaError,
    dumps_canonical,
    matrix_to_json,
    parse_model_spec_document,
    parse_tuple_document,
    tuple_document,
)
from .halmos_wallen import DecompositionError, hw_decompose
from .linalg import Tolerance
from .operators import (
    build_model_tuple,
    build_twisted_shift_pair,
    conjugate_tuple,
    haar_unitary,
    is_power_partial_isometry,
)
from .twisted import (
    commutant_dimension,
    decompose_tuple,
    equivalence_check,
    verify_twisted,
)

__all__ = ["entry", "main"]

PRESETS = ("example43",)


def _tolerance(args) -> Tolerance:
    # rank cutoff tracks the residual tolerance at the default 10:1 ratio
    if args.tol <= 0:
        raise SchemaError("--tol must be positive")
    return Tolerance(eps=args.tol, rank_eps=args.tol / 10.0)


def _load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}") from exc


def _load_tuple(path: str):
    return parse_tuple_document(_load_json(path))


def _write(doc: dict, output: str | None) -> None:
    text = dumps_canonical(doc) + "\n"
    if output:
        with open(output, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _report(command: str, tol: Tolerance, started: float, timing: bool) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "tolerance": tol.eps,
        "timing": (time.perf_counter() - started) if timing else None,
    }


def _residual_rows(report) -> list[dict]:
    return [
        {"kind": key[0], "indices": list(key[1:]), "value": value}
        for key, value in report.residuals.items()
    ]


def _sorted_eigenvalues(matrix: np.ndarray) -> list:
    values = np.sort_complex(np.linalg.eigvals(matrix))
    return [[float(v.real), float(v.imag)] for v in values]


def _partition_json(partition) -> dict:
    per_leaf = [
        {str(n): label for n, label in sorted(assignment.items())}
        for assignment in partition.per_leaf
    ]
    if partition.global_assignment is None:
        global_part = None
        classes = None
    else:
        global_part = {str(n): label for n, label in sorted(partition.global_assignment.items())}
        classes = partition.classes()
    return {"per_leaf": per_leaf, "global": global_part, "classes": classes}


def cmd_verify(args) -> int:
    started = time.perf_counter()
    tol = _tolerance(args)
    t, _ = _load_tuple(args.input)
    result = verify_twisted(t, tol, jobs=args.jobs)
    doc = _report("verify", tol, started, args.timing)
    worst_key, worst_value = result.worst()
    doc.update(
        {
            "pass": result.passed,
            "max_residual": result.max_residual,
            "worst": {"kind": worst_key[0], "indices": list(worst_key[1:]), "value": worst_value},
            "residuals": _residual_rows(result),
        }
    )
    _write(doc, args.output)
    return 0 if result.passed else 1


def cmd_hw(args) -> int:
    started = time.perf_counter()
    tol = _tolerance(args)
    t, names = _load_tuple(args.input)
    if args.op is None:
        if t.n_ops != 1:
            raise SchemaError(f"--op is required; available operators: {', '.join(names)}")
        selected = 0
    else:
        if args.op not in names:
            raise SchemaError(f"no operator named {args.op!r}; available: {', '.join(names)}")
        selected = names.index(args.op)
    v = t.ops[selected]
    doc = _report("hw", tol, started, args.timing)
    doc["operator"] = names[selected]
    ok, first_failing = is_power_partial_isometry(v, tol)
    if not ok:
        doc.update({"pass": False, "first_failing_power": first_failing})
        _write(doc, args.output)
        return 1
    try:
        hw = hw_decompose(v, tol)
    except DecompositionError as exc:
        doc.update({"pass": False, "error": str(exc)})
        _write(doc, args.output)
        return 1
    doc.update(
        {
            "pass": True,
            "ambient_dim": hw.ambient_dim,
            "unitary_dim": hw.unitary_dim,
            "unitary_eigenvalues": _sorted_eigenvalues(hw.unitary_op),
            "blocks": [{"p": b.p, "mult": b.mult} for b in hw.truncated_blocks],
            "residual": hw.residual,
        }
    )
    if args.emit_intertwiner:
        doc["intertwiner"] = matrix_to_json(hw.intertwiner)
    _write(doc, args.output)
    return 0


def cmd_decompose(args) -> int:
    started = time.perf_counter()
    tol = _tolerance(args)
    t, _ = _load_tuple(args.input)
    doc = _report("decompose", tol, started, args.timing)
    verification = verify_twisted(t, tol, jobs=args.jobs)
    if not verification.passed:
        worst_key, worst_value = verification.worst()
        doc.update(
            {
                "pass": False,
                "stage": "verify",
                "worst": {"kind": worst_key[0], "indices": list(worst_key[1:]), "value": worst_value},
            }
        )
        _write(doc, args.output)
        return 1
    try:
        tree = decompose_tuple(t, tol, jobs=args.jobs)
    except DecompositionError as exc:
        doc.update({"pass": False, "stage": "decompose", "error": str(exc)})
        _write(doc, args.output)
        return 1
    leaves = []
    for leaf in tree.leaves:
        entry = {
            "multiindex": list(leaf.multiindex),
            "leaf_dim": leaf.leaf_dim,
            "mult_dim": leaf.mult_dim,
            "unit_ops": {
                str(n): matrix_to_json(u) for n, u in sorted(leaf.unit_ops.items())
            },
        }
        if args.emit_intertwiner:
            entry["intertwiner"] = matrix_to_json(leaf.intertwiner)
        leaves.append(entry)
    doc.update(
        {
            "pass": True,
            "ambient_dim": tree.ambient_dim,
            "n_operators": tree.n_ops,
            "residual": tree.residual,
            "leaves": leaves,
            "partition": _partition_json(tree.partition),
        }
    )
    if args.emit_intertwiner:
        doc["global_intertwiner"] = matrix_to_json(tree.global_intertwiner)
    _write(doc, args.output)
    return 0


def _parse_complex_pair(text: str) -> complex:
    parts = text.split(",")
    if len(parts) != 2:
        raise SchemaError("--lambda expects RE,IM")
    try:
        return complex(float(parts[0]), float(parts[1]))
    except ValueError as exc:
        raise SchemaError(f"--lambda expects two floats: {exc}") from exc


def cmd_generate(args) -> int:
    tol = _tolerance(args)
    if args.spec is not None and args.preset is not None:
        raise SchemaError("use either --preset or --spec, not both")
    if args.spec is not None:
        spec = parse_model_spec_document(_load_json(args.spec))
        try:
            t = build_model_tuple(spec, tol)
        except ValueError as exc:
            raise SchemaError(f"spec violates the model relations: {exc}") from exc
        metadata = {"source": "model-spec", "seed": args.seed, "scrambled": bool(args.scramble)}
    elif args.preset is not None:
        if args.preset not in PRESETS:
            raise SchemaError(f"unknown preset {args.preset!r}; available: {', '.join(PRESETS)}")
        lam = _parse_complex_pair(args.lam)
        try:
            t = build_twisted_shift_pair(args.p, lam, tol)
        except ValueError as exc:
            raise SchemaError(str(exc)) from exc
        metadata = {
            "preset": args.preset,
            "p": args.p,
            "lambda": [lam.real, lam.imag],
            "seed": args.seed,
            "scrambled": bool(args.scramble),
        }
    else:
        raise SchemaError("generate needs --preset NAME or --spec PATH")
    if args.scramble:
        t = conjugate_tuple(t, haar_unitary(t.dim, args.seed))
    check = verify_twisted(t, Tolerance(eps=1e-9))
    if not check.passed:
        raise SchemaError(
            f"generated tuple failed self-verification (max residual {check.max_residual:.3e})"
        )
    _write(tuple_document(t, metadata=metadata), args.output)
    return 0


def cmd_commutant(args) -> int:
    started = time.perf_counter()
    tol = _tolerance(args)
    t, _ = _load_tuple(args.input)
    verification = verify_twisted(t, tol)
    # the star-closed commutant is the one that decides reducibility
    dimension = commutant_dimension(t.ops, tol, include_adjoints=True)
    doc = _report("commutant", tol, started, args.timing)
    doc.update(
        {
            "verify_pass": verification.passed,
            "dimension": dimension,
            "irreducible": dimension == 1,
        }
    )
    _write(doc, args.output)
    return 0


def cmd_equiv(args) -> int:
    started = time.perf_counter()
    tol = _tolerance(args)
    t1, _ = _load_tuple(args.input1)
    t2, _ = _load_tuple(args.input2)
    doc = _report("equiv", tol, started, args.timing)
    for label, t in (("first", t1), ("second", t2)):
        verification = verify_twisted(t, tol)
        if not verification.passed:
            doc.update(
                {
                    "pass": False,
                    "stage": "verify",
                    "which": label,
                    "max_residual": verification.max_residual,
                }
            )
            _write(doc, args.output)
            return 1
    try:
        result = equivalence_check(t1, t2, tol)
    except DecompositionError as exc:
        doc.update({"pass": False, "stage": "decompose", "error": str(exc)})
        _write(doc, args.output)
        return 1
    doc.update(
        {
            "verdict": result.verdict,
            "certificate": result.certificate,
            "residual": result.residual,
        }
    )
    if args.emit_intertwiner and result.intertwiner is not None:
        doc["intertwiner"] = matrix_to_json(result.intertwiner)
    _write(doc, args.output)
    return 0


def _add_common(parser: argparse.ArgumentParser, jobs: bool = False) -> None:
    parser.add_argument("--tol", type=float, default=1e-9, help="residual tolerance (default 1e-9)")
    parser.add_argument("--output", default=None, help="write the report here instead of stdout")
    parser.add_argument("--timing", action="store_true", help="include wall-clock timing in the report")
    if jobs:
        parser.add_argument("--jobs", type=int, default=1, help="worker threads for independent checks")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="partialiso",
        description="Verify and decompose twisted power partial isometries.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="check the twisted relations of a tuple document")
    p_verify.add_argument("input")
    _add_common(p_verify, jobs=True)
    p_verify.set_defaults(func=cmd_verify)

    p_hw = sub.add_parser("hw", help="decompose one operator into unitary and shift blocks")
    p_hw.add_argument("input")
    p_hw.add_argument("--op", default=None, help="operator name (required when several)")
    p_hw.add_argument("--emit-intertwiner", action="store_true")
    _add_common(p_hw)
    p_hw.set_defaults(func=cmd_hw)

    p_dec = sub.add_parser("decompose", help="full tuple decomposition into multiindexed leaves")
    p_dec.add_argument("input")
    p_dec.add_argument("--emit-intertwiner", action="store_true")
    _add_common(p_dec, jobs=True)
    p_dec.set_defaults(func=cmd_decompose)

    p_gen = sub.add_parser("generate", help="emit a tuple document from a preset or model spec")
    p_gen.add_argument("--preset", default=None, help=f"one of: {', '.join(PRESETS)}")
    p_gen.add_argument("--p", type=int, default=2, help="shift order for the preset")
    p_gen.add_argument("--lambda", dest="lam", default="0,1", metavar="RE,IM",
                       help="unimodular twist scalar for the preset")
    p_gen.add_argument("--spec", default=None, help="path to a model spec document")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--scramble", action="store_true",
                       help="conjugate by a seeded random unitary")
    p_gen.add_argument("--tol", type=float, default=1e-9)
    p_gen.add_argument("--output", default=None)
    p_gen.set_defaults(func=cmd_generate)

    p_comm = sub.add_parser("commutant", help="commutant dimension and irreducibility")
    p_comm.add_argument("input")
    _add_common(p_comm)
    p_comm.set_defaults(func=cmd_commutant)

    p_eq = sub.add_parser("equiv", help="decide simultaneous unitary equivalence of two tuples")
    p_eq.add_argument("input1")
    p_eq.add_argument("input2")
    p_eq.add_argument("--emit-intertwiner", action="store_true")
    _add_common(p_eq)
    p_eq.set_defaults(func=cmd_equiv)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
