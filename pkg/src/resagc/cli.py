"""Command-line interface (``resagc``).

Exit codes: 0 success, 1 checks failed or refinement did not terminate,
2 usage or model errors. Errors are written to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .contracts import Contract, check_contract, closed_loop_validation
from .geometry import ModelError
from .modelio import ModelFileError, dump_json, load_model, spec_from_json
from .resilience import ResilienceResult, compute_resilience, eps_from_json

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit_error(kind: str, message: str, details: list[str] | None = None) -> int:
    payload = {"error": kind, "message": message}
    if details:
        payload["details"] = details
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return EXIT_USAGE


def _print(obj) -> None:
    print(json.dumps(obj, sort_keys=True, indent=2))


def _check_threads() -> None:
    raw = os.environ.get("AGC_THREADS")
    if raw is None or raw == "":
        return
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"AGC_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"AGC_THREADS must be a positive integer, got {raw!r}")


def _nonneg(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("expected a non-negative integer")
    return v


def _positive(text: str) -> int:
    v = _nonneg(text)
    if v < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    from .harness.study import CASE_STUDIES

    p = _Parser(prog="resagc", description="Resilience-based assume-guarantee contract synthesis.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="refine contracts for a model file and validate them")
    s.add_argument("--model", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--seed", type=_nonneg, default=0)
    s.add_argument("--samples", type=_positive, default=100, help="closed-loop validation samples")

    v = sub.add_parser("verify", help="Monte Carlo check of stored contracts")
    v.add_argument("--model", required=True, type=Path)
    v.add_argument("--contracts", required=True, type=Path)
    v.add_argument("--samples", required=True, type=_positive)
    v.add_argument("--seed", type=_nonneg, default=0)

    r = sub.add_parser("resilience", help="resilience of one subsystem's specification")
    r.add_argument("--model", required=True, type=Path)
    r.add_argument("--subsystem", required=True, type=_nonneg)

    c = sub.add_parser("case-study", help="run a built-in case study")
    c.add_argument("name", choices=CASE_STUDIES)
    c.add_argument("--out", required=True, type=Path)
    c.add_argument("--seed", type=_nonneg, default=0)

    q = sub.add_parser("properties", help="randomised property suite")
    q.add_argument("--seed", type=_nonneg, default=0)
    q.add_argument("--instances", type=_positive, default=100)
    q.add_argument("--out", type=Path, default=None)
    return p


# ---------------------------------------------------------------------------


def _cmd_synth(args) -> int:
    from .harness.study import build_report, synthesize, write_outputs

    model = load_model(args.model)
    outcome = synthesize(model, args.samples, args.seed)
    report = build_report(outcome, args.model.stem, args.seed, args.samples)
    write_outputs(outcome, args.out, report)
    _print({"status": report["status"], "checks": report["checks"], "out": str(args.out)})
    return EXIT_OK if outcome.ok else EXIT_FAILED


def _load_contracts(path: Path, model) -> list[Contract]:
    try:
        data = json.loads(path.read_text())
        items = sorted(data["contracts"], key=lambda d: d["subsystem"])
        out = []
        for d in items:
            eps = eps_from_json(d["epsilon"])
            out.append(Contract(d["subsystem"], eps, spec_from_json(d["guarantee"]), int(d["horizon"]), ResilienceResult(eps, d["kind"])))
    except OSError as e:
        raise ModelFileError([f"cannot read contracts file: {e.strerror or e}"]) from None
    except (ValueError, KeyError, TypeError) as e:
        raise ModelFileError([f"malformed contracts file: {e}"]) from None
    if [c.subsystem for c in out] != list(range(model.network.size)):
        raise ModelFileError(["contracts file must hold one contract per subsystem"])
    return out


def _cmd_verify(args) -> int:
    model = load_model(args.model)
    contracts = _load_contracts(args.contracts, model)
    net = model.network
    open_loop = [
        check_contract(net.subsystems[c.subsystem], c, model.initial_sets[c.subsystem], args.samples, args.seed + 1 + c.subsystem).to_dict()
        for c in contracts
    ]
    closed = closed_loop_validation(net, contracts, model.specs, model.initial_sets, args.samples, args.seed)
    ok = closed.all_ok and all(r["rate"] == 1.0 for r in open_loop)
    _print({"ok": ok, "open_loop": open_loop, "closed_loop": closed.to_dict()})
    return EXIT_OK if ok else EXIT_FAILED


def _cmd_resilience(args) -> int:
    model = load_model(args.model)
    i = args.subsystem
    if i >= model.network.size:
        raise UsageError(f"subsystem {i} does not exist (model has {model.network.size})")
    res = compute_resilience(model.network.subsystems[i], model.specs[i], model.initial_sets[i], model.config)
    _print({"subsystem": i, **res.to_dict()})
    return EXIT_OK


def _cmd_case_study(args) -> int:
    from .harness.study import run_case_study

    report = run_case_study(args.name, args.seed, args.out)
    _print({"case": args.name, "status": report["status"], "checks": report["checks"], "out": str(args.out)})
    return EXIT_OK if report["status"] == "ok" else EXIT_FAILED


def _cmd_properties(args) -> int:
    from .harness.properties import property_suite

    result = property_suite(args.seed, args.instances)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        dump_json(result, args.out / "properties.json")
    _print({"ok": result["ok"], "sections": {k: f"{v['passed']}/{v['total']}" for k, v in result["sections"].items()}})
    return EXIT_OK if result["ok"] else EXIT_FAILED


COMMANDS = {
    "synth": _cmd_synth,
    "verify": _cmd_verify,
    "resilience": _cmd_resilience,
    "case-study": _cmd_case_study,
    "properties": _cmd_properties,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _check_threads()
        return COMMANDS[args.command](args)
    except UsageError as e:
        return _emit_error("usage", str(e))
    except ModelFileError as e:
        return _emit_error("model", "invalid model", e.errors)
    except (ModelError, ValueError) as e:
        return _emit_error("model", str(e))
    except OSError as e:
        return _emit_error("io", f"{e.strerror or e}: {getattr(e, 'filename', '') or ''}".rstrip(": "))


if __name__ == "__main__":
    sys.exit(main())
