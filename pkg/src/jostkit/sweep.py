"""Parameter sweeps: norms against the theorem bounds, energy audits, reports.

A sweep evaluates one weighted norm per ``(h, E, eps)`` point and compares it
with the matching closed-form bound:

* ``thm1``: ``||m^{1/2} R m^{1/2}|| <= exp(2 E^{-1/2} int m / h)``;
* ``thm3``: ``||(w')^{1/2} R (w')^{1/2}|| <= 8 E^{-1/2} / h`` for a weight ``w``
  satisfying ``(k/h)|V w| <= w'`` (checked before any norm is computed);
* ``thm2``: the exterior weight ``1_{|x|>R} (1+|x|)^{-(1+delta)/2}`` against
  ``8 (1+R)^{-delta} / (delta h E^{1/2})`` and, at ``eps = 0``, also against
  ``2 / (h delta (1+R)^delta E^{1/2})``.

Rows are ordered as the nested ``h, E, eps`` lists of the sweep spec; each row's
power-iteration seed is derived from the spec hash and the row index, so a
rerun (or ``repro`` of a single row) reproduces the report byte for byte.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .audit import audit_apriori_bound, audit_energy, test_function_from_config
from .errors import JostkitError, SpecError
from .norms import derivative_weight, envelope_weight, estimate_norm, exterior_weight, stable_seed
from .potentials import potential_from_config
from .weights import verify_w2_condition, weight_from_config

THEOREMS = ("thm1", "thm3", "thm2")
BACKENDS = ("kernel", "matrix")

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_NONCONVERGENCE = 0, 1, 2, 3

_SPEC_KEYS = {"potential", "theorem", "weight", "backend", "h", "E", "eps", "slack", "grid_ppw", "levels",
              "tail_rtol", "tail_ref", "max_cells", "tol", "out", "jobs", "audit"}


def tool_version() -> str:
    from importlib.metadata import PackageNotFoundError, version

    try:
        return version("artifact")
    except PackageNotFoundError:
        from . import __version__

        return __version__


def parse_eps(item: Any, E: float) -> float:
    """A number, or ``"frac:r"`` meaning ``eps = r E`` with ``0 <= r <= 1/2``."""
    if isinstance(item, str) and item.startswith("frac:"):
        try:
            r = float(item[5:])
        except ValueError:
            raise SpecError(f"bad eps fraction {item!r}") from None
        if not 0.0 <= r <= 0.5:
            raise SpecError(f"eps fraction must lie in [0, 1/2], got {r}")
        return r * E
    try:
        return float(item)
    except (TypeError, ValueError):
        raise SpecError(f"bad eps value {item!r}") from None


def _float_list(name: str, val) -> list:
    if isinstance(val, (int, float, str)):
        val = [val]
    if not isinstance(val, (list, tuple)) or not val:
        raise SpecError(f"{name} must be a nonempty list")
    return list(val)


@dataclass(frozen=True)
class SweepSpec:
    potential: dict
    theorem: str = "thm3"
    weight: dict = field(default_factory=lambda: {"kind": "thm1"})
    backend: str = "kernel"
    h: tuple = (1.0,)
    E: tuple = (1.0,)
    eps: tuple = ("frac:0.1",)
    slack: float = 1.05
    grid_ppw: float = 20.0
    levels: int = 2
    tail_rtol: float = 1e-4
    tail_ref: str = "value"
    max_cells: int = 400_000
    tol: float = 1e-10
    out: str | None = None
    jobs: int = 1
    audit: dict = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, cfg: Mapping, strict: bool = True) -> "SweepSpec":
        """Build and validate; ``strict=False`` skips the backend and theorem checks."""
        if not isinstance(cfg, Mapping):
            raise SpecError("a sweep spec must be a mapping")
        unknown = set(cfg) - _SPEC_KEYS
        if unknown:
            raise SpecError(f"unknown spec keys: {', '.join(sorted(unknown))}")
        if "potential" not in cfg:
            raise SpecError("spec needs a 'potential'")
        pot = cfg["potential"]
        if isinstance(pot, str):
            pot = {"name": pot}
        weight = cfg.get("weight", {"kind": "thm1"})
        if isinstance(weight, str):
            weight = {"kind": weight}
        try:
            spec = cls(
                potential=dict(pot),
                theorem=str(cfg.get("theorem", "thm3")),
                weight=dict(weight),
                backend=str(cfg.get("backend", "kernel")),
                h=tuple(float(x) for x in _float_list("h", cfg.get("h", [1.0]))),
                E=tuple(float(x) for x in _float_list("E", cfg.get("E", [1.0]))),
                eps=tuple(_float_list("eps", cfg.get("eps", ["frac:0.1"]))),
                slack=float(cfg.get("slack", 1.05)),
                grid_ppw=float(cfg.get("grid_ppw", 20.0)),
                levels=int(cfg.get("levels", 2)),
                tail_rtol=float(cfg.get("tail_rtol", 1e-4)),
                tail_ref=str(cfg.get("tail_ref", "value")),
                max_cells=int(cfg.get("max_cells", 400_000)),
                tol=float(cfg.get("tol", 1e-10)),
                out=cfg.get("out"),
                jobs=int(cfg.get("jobs", 1)),
                audit=dict(cfg.get("audit") or {}),
            )
        except (TypeError, ValueError) as exc:
            raise SpecError(f"malformed spec: {exc}") from None
        spec.validate(strict)
        return spec

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("h", "E", "eps"):
            d[k] = list(d[k])
        return d

    def hash(self) -> str:
        d = self.to_dict()
        d.pop("out", None)
        d.pop("jobs", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def points(self) -> list[tuple[float, float, float]]:
        return [(h, E, parse_eps(e, E)) for h in self.h for E in self.E for e in self.eps]

    def validate(self, strict: bool = True) -> None:
        if self.theorem not in THEOREMS:
            raise SpecError(f"theorem must be one of {THEOREMS}, got {self.theorem!r}")
        if self.backend not in BACKENDS:
            raise SpecError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.tail_ref not in ("value", "bound"):
            raise SpecError(f"tail_ref must be 'value' or 'bound', got {self.tail_ref!r}")
        if self.slack < 1.0:
            raise SpecError("slack must be >= 1")
        if self.grid_ppw <= 0 or self.levels < 1 or self.max_cells < 16 or self.jobs < 1:
            raise SpecError("grid_ppw, levels, max_cells and jobs must be positive")
        V, _ = potential_from_config(self.potential)
        for h, E, eps in self.points():
            if not (h > 0 and E > 0):
                raise SpecError(f"h and E must be positive (h={h}, E={E})")
            if eps < 0 or E < 2 * eps:
                raise SpecError(f"need E >= 2 eps >= 0 (E={E}, eps={eps})")
            if strict and eps == 0 and self.backend != "kernel":
                raise SpecError("eps = 0 needs the kernel backend")
        if not strict:
            return
        if self.backend == "kernel" and not V.is_compact:
            raise SpecError("the kernel backend needs a compactly supported potential")
        if self.theorem == "thm2":
            R = float(self.weight.get("R", 1.0))
            if not V.is_compact or V.support_radius > R:
                raise SpecError(f"the exterior bound needs V supported in [-R, R] with R = {R}")
            if float(self.weight.get("delta", 1.0)) <= 0:
                raise SpecError("delta must be positive")


def load_spec_file(path: str | Path) -> dict:
    """Read a YAML (or JSON) spec file into a mapping."""
    import yaml

    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec file: {exc}") from None
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SpecError(f"cannot parse spec file: {exc}") from None
    if not isinstance(cfg, dict):
        raise SpecError("spec file must hold a mapping")
    return cfg


# ---------------------------------------------------------------------------
# one row


def theorem_bounds(theorem: str, h: float, E: float, eps: float, int_m: float = 0.0,
                   R: float = 1.0, delta: float = 1.0) -> tuple[float, float]:
    """Primary bound and the secondary (``nan`` when none applies)."""
    if theorem == "thm1":
        return math.exp(2.0 * int_m / (math.sqrt(E) * h)), math.nan
    if theorem == "thm3":
        return 8.0 / (math.sqrt(E) * h), math.nan
    if theorem == "thm2":
        b = 8.0 * (1.0 + R) ** -delta / (delta * math.sqrt(E) * h)
        alt = 2.0 / (h * delta * (1.0 + R) ** delta * math.sqrt(E)) if eps == 0 else math.nan
        return b, alt
    raise SpecError(f"unknown theorem {theorem!r}")


def _weight_for(spec: SweepSpec, V, m, h: float, E: float):
    if spec.theorem == "thm1":
        return None, envelope_weight(m)
    if spec.theorem == "thm2":
        return None, exterior_weight(float(spec.weight.get("R", 1.0)), float(spec.weight.get("delta", 1.0)))
    w = weight_from_config(spec.weight, V, m, h, E)
    return w, derivative_weight(w)


def precheck(spec: SweepSpec) -> None:
    """Refuse a thm3 sweep whose weight violates ``(k/h)|V w| <= w'`` at some point."""
    if spec.theorem != "thm3":
        return
    V, m = potential_from_config(spec.potential)
    for h, E, _ in spec.points():
        w = weight_from_config(spec.weight, V, m, h, E)
        rep = verify_w2_condition(w, V, h, E)
        if not rep.passed:
            raise SpecError(
                f"weight {w.kind} violates (k/h)|Vw| <= w' at x = {rep.worst_x:.6g} (h={h}, E={E}); "
                "no theorem bound is attributed")


def evaluate_row(spec: SweepSpec, index: int) -> dict:
    h, E, eps = spec.points()[index]
    V, m = potential_from_config(spec.potential)
    R = float(spec.weight.get("R", 1.0))
    delta = float(spec.weight.get("delta", 1.0))
    bound, alt = theorem_bounds(spec.theorem, h, E, eps, m.l1_norm, R, delta)
    row = {"index": index, "h": h, "E": E, "eps": eps, "computed_norm": math.nan, "theorem_bound": bound,
           "ratio": math.nan, "alt_bound": alt, "alt_ratio": math.nan, "pass": False, "status": "error",
           "converged": False, "upper_value": math.nan, "extrapolated": math.nan, "tail_bound": math.nan,
           "iterations": 0, "n": 0, "message": ""}
    seed = stable_seed(spec.hash(), index)
    t0 = time.perf_counter()
    try:
        _, a = _weight_for(spec, V, m, h, E)
        # tail_ref "bound": the weight tail only has to be small next to the bound being checked
        atol = spec.tail_rtol * np.nanmin([bound, alt]) if spec.tail_ref == "bound" else 0.0
        est = estimate_norm(spec.backend, V, h, E, eps, a, ppw=spec.grid_ppw, levels=spec.levels,
                            tail_rtol=spec.tail_rtol, max_cells=spec.max_cells, seed=seed, tol=spec.tol,
                            tail_atol=float(atol))
    except JostkitError as exc:
        row["message"] = f"{type(exc).__name__}: {exc}"
        row["seconds"] = time.perf_counter() - t0
        return row
    value = est.value
    ratio = value / bound
    alt_ratio = value / alt if np.isfinite(alt) else math.nan
    passed = value <= spec.slack * bound and (not np.isfinite(alt) or value <= spec.slack * alt)
    row.update(computed_norm=value, ratio=ratio, alt_ratio=alt_ratio, converged=est.convergence_flag,
               upper_value=est.upper_value, extrapolated=est.extrapolated, tail_bound=est.tail_bound,
               iterations=est.iterations, n=int(est.discretization.get("n", 0)),
               discretization=est.discretization, seed=seed, seconds=time.perf_counter() - t0)
    row["pass"] = bool(passed)
    row["status"] = "ok" if est.convergence_flag else "nonconverged"
    return row


# ---------------------------------------------------------------------------
# sweeps and reports


CSV_COLUMNS = ["index", "h", "E", "eps", "computed_norm", "theorem_bound", "ratio", "pass", "status",
               "converged", "alt_bound", "alt_ratio", "upper_value", "extrapolated", "tail_bound",
               "iterations", "n"]


@dataclass
class SweepReport:
    rows: list[dict]
    spec: SweepSpec
    kind: str = "sweep"

    @property
    def failures(self) -> list[dict]:
        return [r for r in self.rows if r["status"] != "error" and not r["pass"]]

    @property
    def errors(self) -> list[dict]:
        return [r for r in self.rows if r["status"] in ("error", "nonconverged")]

    @property
    def max_ratio(self) -> float:
        vals = [r["ratio"] for r in self.rows if np.isfinite(r.get("ratio", math.nan))]
        return max(vals) if vals else math.nan

    @property
    def exit_code(self) -> int:
        if self.failures:
            return EXIT_VIOLATION
        if self.errors:
            return EXIT_NONCONVERGENCE
        return EXIT_OK

    def summary(self) -> dict:
        return {"rows": len(self.rows), "max_ratio": self.max_ratio, "failures": len(self.failures),
                "errors_or_nonconverged": len(self.errors), "exit_code": self.exit_code}

    def provenance(self) -> dict:
        s = self.spec
        return {"tool": "jostkit", "version": tool_version(), "spec_hash": s.hash(), "spec": s.to_dict(),
                "potential": s.potential, "backend": s.backend, "theorem": s.theorem,
                "discretization": {"grid_ppw": s.grid_ppw, "levels": s.levels, "tail_rtol": s.tail_rtol, "tail_ref": s.tail_ref,
                                   "max_cells": s.max_cells, "tol": s.tol}}

    def write(self, out: str | Path, columns: list[str] | None = None) -> tuple[Path, Path]:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        cols = columns or CSV_COLUMNS
        csv_path = out / "report.csv"
        with csv_path.open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(cols)
            for r in self.rows:
                wr.writerow([_fmt(r.get(c)) for c in cols])
        json_path = out / "report.json"
        payload = {"kind": self.kind, "summary": self.summary(), "provenance": self.provenance(),
                   "rows": self.rows}
        json_path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
        return csv_path, json_path


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.12e" % v
    return "" if v is None else str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _run_rows(spec: SweepSpec, func, n: int) -> list[dict]:
    if spec.jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            rows = list(pool.map(func, [spec] * n, range(n)))
    else:
        rows = [func(spec, i) for i in range(n)]
    return sorted(rows, key=lambda r: r["index"])


def run_sweep(spec: SweepSpec) -> SweepReport:
    """Evaluate every grid point; writes ``report.csv`` and ``report.json`` when ``spec.out`` is set."""
    spec.validate()
    precheck(spec)
    rows = _run_rows(spec, evaluate_row, len(spec.points()))
    report = SweepReport(rows, spec)
    if spec.out:
        report.write(spec.out)
    return report


# ---------------------------------------------------------------------------
# audits


AUDIT_COLUMNS = ["index", "weight", "test_function", "h", "E", "eps", "flux_relative", "flux_balance",
                 "eps_identity_rel", "min_relative_margin", "apriori_ratio", "pass", "status", "n"]

_AUDIT_DEFAULTS = {
    "test_functions": [{"kind": "gaussian"}, {"kind": "plateau"}, {"kind": "packet"}],
    "weights": [{"kind": "thm1"}, {"kind": "thm2", "R": 1.0, "delta": 1.0}],
    "flux_rtol": 1e-6, "eps_rtol": 1e-6, "margin_tol": 1e-8,
}


def _audit_cases(spec: SweepSpec) -> list[tuple]:
    cfg = {**_AUDIT_DEFAULTS, **spec.audit}
    cases = []
    for h, E, eps in spec.points():
        for wc in cfg["weights"]:
            for tc in cfg["test_functions"]:
                cases.append((h, E, eps, wc, tc))
    return cases


def evaluate_audit_row(spec: SweepSpec, index: int) -> dict:
    cfg = {**_AUDIT_DEFAULTS, **spec.audit}
    h, E, eps, wc, tc = _audit_cases(spec)[index]
    V, m = potential_from_config(spec.potential)
    w = weight_from_config(wc, V, m, h, E)
    v = test_function_from_config(tc)
    row = {"index": index, "weight": w.kind, "test_function": v.name, "h": h, "E": E, "eps": eps,
           "pass": False, "status": "error", "n": 0, "message": ""}
    try:
        tr = audit_energy(V, w, v, h, E, eps)
    except JostkitError as exc:
        row["message"] = f"{type(exc).__name__}: {exc}"
        return row
    ap = audit_apriori_bound(tr)
    flux_ok = (tr.flux_relative <= cfg["flux_rtol"]) if eps > 0 else (tr.flux_balance <= cfg["flux_rtol"])
    eps_ok = tr.eps_identity_rel <= cfg["eps_rtol"] if eps > 0 else True
    margin_ok = tr.min_relative_margin >= -cfg["margin_tol"]
    row.update(flux_relative=tr.flux_relative, flux_balance=tr.flux_balance,
               eps_identity_rel=tr.eps_identity_rel if eps > 0 else math.nan,
               min_relative_margin=tr.min_relative_margin, apriori_ratio=ap.ratio,
               apriori_lhs=ap.lhs, apriori_rhs=ap.rhs, int_wpF=tr.int_wpF, flux_integral=tr.flux_integral,
               pass_flux=bool(flux_ok), pass_eps=bool(eps_ok), pass_margin=bool(margin_ok),
               pass_apriori=bool(ap.passed), n=int(tr.x.size), status="ok")
    row["pass"] = bool(flux_ok and eps_ok and margin_ok and ap.passed)
    return row


class AuditReport(SweepReport):
    @property
    def max_ratio(self) -> float:
        vals = [r["apriori_ratio"] for r in self.rows if "apriori_ratio" in r]
        return max(vals) if vals else math.nan

    def write(self, out, columns=None):
        return super().write(out, columns or AUDIT_COLUMNS)


def run_audit(spec: SweepSpec) -> AuditReport:
    """Energy audits over the spec's points, weights and test functions."""
    spec.validate()
    cfg = {**_AUDIT_DEFAULTS, **spec.audit}
    unknown = set(spec.audit) - set(_AUDIT_DEFAULTS)
    if unknown:
        raise SpecError(f"unknown audit keys: {', '.join(sorted(unknown))}")
    V, m = potential_from_config(spec.potential)
    for h, E, eps in spec.points():
        if eps == 0 and not V.is_compact:
            raise SpecError("eps = 0 audits need a compactly supported potential")
        for wc in cfg["weights"]:
            w = weight_from_config(wc, V, m, h, E)
            if not verify_w2_condition(w, V, h, E).passed:
                raise SpecError(f"audit weight {w.kind} violates (k/h)|Vw| <= w' (h={h}, E={E})")
    for tc in cfg["test_functions"]:
        test_function_from_config(tc)
    rows = _run_rows(spec, evaluate_audit_row, len(_audit_cases(spec)))
    report = AuditReport(rows, spec, kind="audit")
    if spec.out:
        report.write(spec.out)
    return report


# ---------------------------------------------------------------------------
# reproduction


def repro(report_path: str | Path, index: int) -> tuple[dict, dict, bool]:
    """Re-run row ``index`` of a saved report; returns (stored, fresh, identical CSV line)."""
    path = Path(report_path)
    if path.is_dir():
        path = path / "report.json"
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(f"cannot read report: {exc}") from None
    spec = SweepSpec.from_mapping({**payload["provenance"]["spec"], "out": None, "jobs": 1})
    rows = payload["rows"]
    if not 0 <= index < len(rows):
        raise SpecError(f"row {index} not in report (0..{len(rows) - 1})")
    kind = payload.get("kind", "sweep")
    fresh = (evaluate_audit_row if kind == "audit" else evaluate_row)(spec, index)
    cols = AUDIT_COLUMNS if kind == "audit" else CSV_COLUMNS
    stored = rows[index]
    line = lambda r: [_fmt(_none_to_nan(r.get(c))) for c in cols]
    return stored, _jsonable(fresh), line(stored) == line(_jsonable(fresh))


def _none_to_nan(v):
    return math.nan if v is None else v
