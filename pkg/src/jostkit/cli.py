"""Command-line driver.

    jostkit jost    --potential square_barrier:1,1 --h 0.5 --E 2
    jostkit kernel  --potential square_barrier --h 0.5 --E 2 --out dump/
    jostkit weights --potential square_barrier --weight thm1 --h 0.5 --E 2
    jostkit norm    --potential square_barrier --theorem thm3 --h 0.5 --E 2 --eps frac:0.1
    jostkit sweep   --config sweep.yaml [--h 1,0.5 ...] --out results/
    jostkit audit   --config audit.yaml --out results/
    jostkit repro   results/report.json --row 3

Exit codes: 0 all rows pass, 1 a bound is violated, 2 usage or validation
error, 3 numerical nonconvergence.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import CatalogError, JostkitError, SpecError
from .sweep import (
    EXIT_NONCONVERGENCE, EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, SweepSpec, _jsonable, load_spec_file,
    repro, run_audit, run_sweep,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def parse_potential(text: str) -> dict:
    """``name`` or ``name:p1,p2,...``."""
    name, _, rest = text.partition(":")
    cfg = {"name": name}
    if rest:
        try:
            cfg["params"] = [float(p) for p in rest.split(",")]
        except ValueError:
            raise SpecError(f"bad potential parameters in {text!r}") from None
    return cfg


def parse_weight(text: str) -> dict:
    """``thm1``, ``thm2:R=1,delta=1``, ``constant:value=1`` or ``tanh:scale=2``."""
    kind, _, rest = text.partition(":")
    cfg: dict = {"kind": kind}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise SpecError(f"weight options must be key=value, got {item!r}")
        try:
            cfg[key.strip()] = float(val)
        except ValueError:
            raise SpecError(f"bad weight option {item!r}") from None
    return cfg


def _list(text: str) -> list:
    return [t.strip() for t in text.split(",") if t.strip()]


def _common(p: argparse.ArgumentParser, lists: bool) -> None:
    p.add_argument("--config", help="YAML or JSON spec file; flags override its values")
    p.add_argument("--potential", help="catalog name, optionally name:p1,p2")
    p.add_argument("--h", help="semiclassical parameter" + (" (comma list)" if lists else ""))
    p.add_argument("--E", help="energy" + (" (comma list)" if lists else ""))
    p.add_argument("--eps", help="value or frac:r (eps = r E, r <= 1/2)" + (" (comma list)" if lists else ""))
    p.add_argument("--weight", help="thm1 | thm2:R=..,delta=.. | constant:value=.. | tanh:scale=..")
    p.add_argument("--theorem", choices=["thm1", "thm3", "thm2"])
    p.add_argument("--backend", choices=["kernel", "matrix"])
    p.add_argument("--out", help="output directory")
    p.add_argument("--slack", type=float)
    p.add_argument("--grid-ppw", type=float, dest="grid_ppw")
    p.add_argument("--jobs", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="jostkit", description="Jost-solution resolvent kernels and weighted resolvent bounds.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, lists, help_ in [
        ("jost", False, "scattering coefficients and unitarity defects at one (h, E, eps)"),
        ("kernel", False, "exterior kernel bound at eps = 0 and optional kernel CSV dump"),
        ("weights", False, "build a weight, check (k/h)|Vw| <= w' and dump it"),
        ("norm", False, "one weighted norm against its theorem bound"),
        ("sweep", True, "parameter sweep writing report.csv and report.json"),
        ("audit", True, "energy audits writing report.csv and report.json"),
    ]:
        _common(sub.add_parser(name, help=help_), lists)
    rp = sub.add_parser("repro", help="re-run one row of a saved report")
    rp.add_argument("report", help="report.json or the directory holding it")
    rp.add_argument("--row", type=int, required=True)
    return ap


def spec_from_args(args: argparse.Namespace, lists: bool = True) -> SweepSpec:
    cfg = load_spec_file(args.config) if args.config else {}
    if args.potential:
        cfg["potential"] = parse_potential(args.potential)
    if args.weight:
        cfg["weight"] = parse_weight(args.weight)
    for key in ("h", "E"):
        val = getattr(args, key)
        if val is not None:
            try:
                cfg[key] = [float(x) for x in _list(val)]
            except ValueError:
                raise SpecError(f"--{key} needs numbers, got {val!r}") from None
    if args.eps is not None:
        cfg["eps"] = [x if x.startswith("frac:") else float(x) for x in _list(args.eps)]
    for key in ("theorem", "backend", "out", "slack", "grid_ppw", "jobs"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    if not lists:
        for key in ("h", "E", "eps"):
            if key in cfg and isinstance(cfg[key], list) and len(cfg[key]) != 1:
                raise SpecError(f"--{key} takes a single value here")
        cfg.setdefault("eps", [0.0])
    return SweepSpec.from_mapping(cfg, strict=args.command not in ("jost", "kernel", "weights"))


def _emit(obj, out: str | None, name: str) -> None:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True)
    print(text)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / name).write_text(text + "\n")


def _single_point(spec: SweepSpec):
    from .potentials import potential_from_config

    (h, E, eps), = spec.points()
    V, m = potential_from_config(spec.potential)
    return V, m, h, E, eps


def cmd_jost(spec: SweepSpec) -> int:
    from .jost import scattering_data

    V, _, h, E, eps = _single_point(spec)
    sd = scattering_data(V, h, E, eps)
    cplx = lambda z: [float(np.real(z)), float(np.imag(z))]
    defects = sd.unitarity_defects()
    out = {"potential": spec.potential, "h": h, "E": E, "eps": eps, "lambda": cplx(sd.lam),
           "A": cplx(sd.A), "B": cplx(sd.B), "C": cplx(sd.C), "D": cplx(sd.D), "W": cplx(sd.W),
           "W_spread": sd.W_spread, "panel_wronskian_defect": sd.panel_wronskian_defect,
           "unitarity_defects": {k: float(v) for k, v in defects.items()}}
    _emit(out, spec.out, "jost.json")
    ok = eps > 0 or all(v <= 1e-8 for v in defects.values())
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_kernel(spec: SweepSpec) -> int:
    from .kernel import build_kernel, dump_kernel_csv, exterior_kernel_bound_check

    V, _, h, E, eps = _single_point(spec)
    if not V.is_compact:
        raise SpecError("the kernel needs a compactly supported potential")
    K = build_kernel(V, h, E, eps)
    out = {"potential": spec.potential, "h": h, "E": E, "eps": eps, "scale": [K.scale.real, K.scale.imag]}
    code = EXIT_OK
    if eps == 0:
        rep = exterior_kernel_bound_check(K)
        out["exterior_bound"] = {k: getattr(rep, k) for k in rep.__dataclass_fields__}
        out["exterior_bound"]["passed"] = rep.passed
        code = EXIT_OK if rep.passed else EXIT_VIOLATION
    if spec.out:
        Path(spec.out).mkdir(parents=True, exist_ok=True)
        r = 3.0 * max(1.0, K.R)
        xs = np.linspace(-r, r, 61)
        out["kernel_csv"] = str(dump_kernel_csv(K, xs, xs, Path(spec.out) / "kernel.csv"))
    _emit(out, spec.out, "kernel.json")
    return code


def cmd_weights(spec: SweepSpec) -> int:
    from .weights import check_grid, dump_weight_csv, validate_weight, verify_w2_condition, weight_from_config

    V, m, h, E, _ = _single_point(spec)
    w = weight_from_config(spec.weight, V, m, h, E)
    w2 = verify_w2_condition(w, V, h, E)
    val = validate_weight(w, V)
    out = {"potential": spec.potential, "weight": spec.weight, "kind": w.kind, "k": w.k, "h": h, "E": E,
           "metadata": {k: v for k, v in w.metadata.items() if isinstance(v, (int, float, str, bool, tuple))},
           "w2": {k: getattr(w2, k) for k in w2.__dataclass_fields__},
           "validation": {k: getattr(val, k) for k in val.__dataclass_fields__}}
    if spec.out:
        Path(spec.out).mkdir(parents=True, exist_ok=True)
        out["weight_csv"] = str(dump_weight_csv(w, check_grid(V, w, n=2001), Path(spec.out) / "weights.csv"))
    _emit(out, spec.out, "weights.json")
    return EXIT_OK if (w2.passed and val.passed) else EXIT_VIOLATION


def _report_code(report) -> int:
    s = report.summary()
    print(json.dumps(_jsonable(s), indent=2, sort_keys=True))
    return report.exit_code


def cmd_norm(spec: SweepSpec) -> int:
    report = run_sweep(spec)
    print(json.dumps(_jsonable(report.rows[0]), indent=2, sort_keys=True))
    return report.exit_code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "repro":
            stored, fresh, same = repro(args.report, args.row)
            print(json.dumps({"stored": stored, "fresh": fresh, "identical": same}, indent=2, sort_keys=True))
            if not same:
                return EXIT_NONCONVERGENCE
            return EXIT_OK if fresh.get("pass") else EXIT_VIOLATION
        lists = args.command in ("sweep", "audit")
        spec = spec_from_args(args, lists=lists)
        if args.command == "sweep":
            return _report_code(run_sweep(spec))
        if args.command == "audit":
            return _report_code(run_audit(spec))
        return {"jost": cmd_jost, "kernel": cmd_kernel, "weights": cmd_weights, "norm": cmd_norm}[args.command](spec)
    except (SpecError, CatalogError) as exc:
        print(f"jostkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except JostkitError as exc:
        print(f"jostkit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
