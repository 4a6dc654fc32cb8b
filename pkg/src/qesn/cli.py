"""Command-line entry point.

Exit codes: 0 on success, 1 for usage or configuration errors, 2 when a run
fails at runtime.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments
from .circuit import QesnConfig
from .experiments import ExperimentConfig

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; 2 is reserved for runtime failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


_COMMAND_KIND = {
    "lorenz-gen": "lorenz-observer",
    "run-qesn": "lorenz-observer",
    "response": "response",
    "sweep": "sweep",
    "compare": "baseline-compare",
    "export-qasm": "export",
}

# probe experiments run on a single-input, 12-qubit circuit unless told otherwise
_RESPONSE_QESN = {"n_q": 12, "c": 1}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--qubits", type=int, help="total qubit count (even)")
    p.add_argument("--kappa", type=float, help="sparsity level in [0, 1]")
    p.add_argument("--n-c", dest="n_c", type=int, help="re-uploading blocks per step")
    p.add_argument("--shots", type=int, help="shots for sampled features")
    p.add_argument("--backend", choices=("exact", "exact-channel", "trajectory"))
    p.add_argument("--noise", type=float, help="depolarizing probability per gate and wire")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--out", type=Path, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qesn", description="Quantum echo-state network experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "lorenz-gen": "integrate and normalize the Lorenz system",
        "run-qesn": "fit the Lorenz observer (y, z from x)",
        "response": "step/ramp/sinusoid probes across sparsity levels",
        "sweep": "probe responses across re-uploading block counts",
        "compare": "QESN vs classical ESN vs linear regression",
        "export-qasm": "write the observer circuit as OpenQASM 3",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        _common(p)
        if name == "run-qesn":
            p.add_argument("--features", choices=("probability", "expectation", "both"))
        if name in ("response", "sweep"):
            p.add_argument("--plot", action="store_true", help="also write SVG plots")
        if name == "export-qasm":
            p.add_argument("--steps", type=int, default=10, help="recurrent steps to unroll")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    kind = _COMMAND_KIND[args.command]
    if args.config is not None:
        if not args.config.is_file():
            raise UsageError(f"config file not found: {args.config}")
        try:
            doc = json.loads(args.config.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.config}: invalid JSON ({exc})") from None
        doc.setdefault("kind", kind)
    else:
        doc = {"kind": kind}
        if kind in ("response", "sweep"):
            doc["qesn"] = dict(_RESPONSE_QESN, kappa=0.29) if kind == "sweep" else dict(_RESPONSE_QESN)
    try:
        cfg = ExperimentConfig.from_dict(doc)
        overrides = {
            "n_q": args.qubits, "kappa": args.kappa, "n_c": args.n_c, "shots": args.shots,
            "backend": args.backend, "noise_p": args.noise, "workers": args.workers,
        }
        qesn = replace(cfg.qesn, **{k: v for k, v in overrides.items() if v is not None})
        top = {"qesn": qesn}
        if args.seed is not None:
            top["seed"] = args.seed
        if args.out is not None:
            top["output_dir"] = str(args.out)
        if getattr(args, "features", None):
            top["feature_mode"] = args.features
        cfg = replace(cfg, **top)
        if getattr(args, "plot", False):
            cfg.response.plot = True
        if args.shots is not None:
            cfg.response.shots = args.shots
        cfg.qesn.validate()
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _run(args: argparse.Namespace, cfg: ExperimentConfig) -> str:
    cmd = args.command
    if cmd == "lorenz-gen":
        out = experiments.run_lorenz_gen(cfg, cfg.output_dir and Path(cfg.output_dir))
        return f"wrote Lorenz trajectory to {out}"
    if cmd == "run-qesn":
        reports = experiments.run_lorenz_observer(cfg)
        return "\n".join(
            f"{mode}: train RMSE {r.train_rmse:.4f}, test RMSE {r.test_rmse:.4f} (lambda={r.lam:g}, l1_ratio={r.l1_ratio:g})"
            for mode, r in reports.items()
        )
    if cmd in ("response", "sweep"):
        rep = experiments.run_response(cfg)
        lines = [f"{c.probe:9s} {c.label:18s} rise={c.rise_time} cond={c.condition_number:.4g}" for c in rep.cells]
        lines += [f"flag: {f}" for f in rep.flags]
        return "\n".join(lines)
    if cmd == "compare":
        rows = experiments.run_compare(cfg)
        return "\n".join(f"n_q={r['n_q']:2d} {r['model']:7s} features={r['features']:3d} test RMSE {r['test_rmse']:.4f}" for r in rows)
    if cmd == "export-qasm":
        out = experiments.run_export(cfg, steps=args.steps)
        return f"wrote {out / 'circuit.qasm'}"
    raise UsageError(f"unknown command {cmd}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args)
    except UsageError as exc:
        print(f"qesn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        print(_run(args, cfg))
    except UsageError as exc:
        print(f"qesn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"qesn: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
