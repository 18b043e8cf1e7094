"""Command-line driver: transform and crossing scans, pricing, MC benchmarks, identity check.

Every command reads one YAML file, applies ``--set key.sub=value`` overrides
and writes CSV or JSON atomically. Exit codes: 0 success, 2 configuration
error, 3 numerical domain failure, 4 threshold failure of a check command.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import re
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from . import __version__
from ._parallel import WORKERS_ENV
from .crossing import (
    CrossingScan,
    lipschitz_bound_intvar,
    lipschitz_bound_intvar_strict,
    lipschitz_estimate_empirical,
    scan_crossings,
)
from .errors import ConfigError, DomainError, NumericalError, VolterraSteinError
from .kernelops import ModelParams, TimeGrid
from .montecarlo import McConfig, price_from_terminals, simulate_terminals
from .pricing import LewisPricer, PriceRequest, price_surface
from .transform import (
    METHODS,
    ScanSpec,
    _det_parts,
    evaluate,
    get_kernel_matrices,
    phi_tilde_n,
    random_admissible_points,
)
from .operators import ArgPoint

log = logging.getLogger("volterra_stein")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_THRESHOLD = 0, 2, 3, 4

HEADERS: Dict[str, Tuple[str, ...]] = {
    "transform-scan": ("abscissa", "re_xi", "im_xi", "k", "log_abs_det", "arg_det", "status"),
    "crossing-scan": ("case", "abscissa", "arg_det", "k"),
    "crossing-scan/crossings": ("case", "index", "lo", "hi", "location", "direction"),
    "crossing-scan/bounds": ("case", "r", "n_r", "bound", "first_crossing", "holds"),
    "crossing-scan/spectrum": ("case", "index", "eigenvalue"),
    "crossing-scan/summary": (
        "case", "overrides", "step", "points", "crossing_count", "first_crossing", "min_bound",
        "lipschitz_L", "lipschitz_L_strict", "status",
    ),
    "price": (
        "case", "overrides", "maturity", "strike", "method", "n", "quad_degree", "put", "call",
        "evaluations", "t_matrices", "t_transform", "t_quadrature", "status",
    ),
    "mc-benchmark": (
        "case", "overrides", "maturity", "strike", "payoff", "paths", "steps", "seed", "mc_price",
        "stderr", "ci_low", "ci_high", "fourier_price", "contained", "status",
    ),
    "det-identity-check": ("n", "re_u", "im_u", "re_w", "im_w", "rel_error", "passed", "status"),
}


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _complex(value) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(f"complex values are [re, im], got {value!r}")
        return complex(float(value[0]), float(value[1]))
    try:
        return complex(value)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot read a complex number from {value!r}")


def _floats(values, name: str) -> Tuple[float, ...]:
    if not isinstance(values, (list, tuple)):
        values = [values]
    try:
        return tuple(float(v) for v in values)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a list of numbers, got {values!r}")


def _ints(values, name: str) -> Tuple[int, ...]:
    out = _floats(values, name)
    if any(int(v) != v for v in out):
        raise ConfigError(f"{name} must be integers, got {values!r}")
    return tuple(int(v) for v in out)


@dataclass(frozen=True)
class ScanBlock:
    """Scan over [lower, upper] of Im(u) or Im(w); step 'auto' uses pi / L."""

    axis: str = "u"
    fixed_real: float = 0.5
    lower: float = 0.0
    upper: float = 10.0
    step: Union[float, str] = 0.05
    other: complex = 0j

    def __post_init__(self):
        if self.axis not in ("u", "w"):
            raise ConfigError(f"scan.axis must be 'u' or 'w', got {self.axis!r}")
        if self.step != "auto" and not (isinstance(self.step, (int, float)) and self.step > 0):
            raise ConfigError(f"scan.step must be positive or 'auto', got {self.step!r}")
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ConfigError("scan bounds must be finite")
        object.__setattr__(self, "other", _complex(self.other))
        # validates the fixed real part and the other argument
        self.crossing_scan(1.0, max(self.upper, 0.0)).point(0.0)

    def crossing_scan(self, step: float, upper: Optional[float] = None) -> CrossingScan:
        return CrossingScan(self.axis, self.fixed_real, self.upper if upper is None else upper, step, self.other)

    def abscissae(self, step: float) -> np.ndarray:
        if self.upper < self.lower:
            return np.array([])
        N = int(math.ceil((self.upper - self.lower) / step - 1e-12))
        xs = self.lower + np.arange(N + 1, dtype=float) * step
        xs[-1] = min(xs[-1], self.upper)
        return xs

    def to_dict(self) -> dict:
        return {
            "axis": self.axis, "fixed_real": self.fixed_real, "lower": self.lower, "upper": self.upper,
            "step": self.step, "other": [self.other.real, self.other.imag],
        }


@dataclass(frozen=True)
class TransformBlock:
    method: str = "prefactor_free"
    n_coarse: int = 40
    lipschitz_L: Optional[float] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"transform.method must be one of {METHODS}, got {self.method!r}")
        if int(self.n_coarse) != self.n_coarse or self.n_coarse < 2:
            raise ConfigError(f"transform.n_coarse must be an integer >= 2, got {self.n_coarse}")
        if self.lipschitz_L is not None and not self.lipschitz_L > 0:
            raise ConfigError(f"transform.lipschitz_L must be positive, got {self.lipschitz_L}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PricingBlock:
    strikes: Tuple[float, ...] = (1.0,)
    maturities: Optional[Tuple[float, ...]] = None
    methods: Tuple[str, ...] = ("prefactor_free",)
    n_values: Tuple[int, ...] = (200,)
    quad_degrees: Tuple[int, ...] = (30,)
    n_coarse: int = 40
    lipschitz_L: Optional[float] = None
    control_variate: bool = True
    node_scale: Union[str, float] = "auto"
    tail_eps: float = 1e-14

    def __post_init__(self):
        object.__setattr__(self, "strikes", _floats(self.strikes, "pricing.strikes"))
        if self.maturities is not None:
            object.__setattr__(self, "maturities", _floats(self.maturities, "pricing.maturities"))
            if any(not T > 0 for T in self.maturities):
                raise ConfigError("pricing.maturities must be positive")
        methods = self.methods if isinstance(self.methods, (list, tuple)) else [self.methods]
        object.__setattr__(self, "methods", tuple(str(m) for m in methods))
        object.__setattr__(self, "n_values", _ints(self.n_values, "pricing.n_values"))
        object.__setattr__(self, "quad_degrees", _ints(self.quad_degrees, "pricing.quad_degrees"))
        if any(not K > 0 for K in self.strikes):
            raise ConfigError(f"pricing.strikes must be positive, got {list(self.strikes)}")
        list(self.requests())  # PriceRequest validates every combination

    def requests(self):
        for method in self.methods:
            for n in self.n_values:
                for degree in self.quad_degrees:
                    yield PriceRequest(
                        strike=self.strikes[0] if self.strikes else 1.0,
                        method=method,
                        quad_degree=degree,
                        n=n,
                        n_coarse=self.n_coarse,
                        lipschitz_L=self.lipschitz_L,
                        control_variate=self.control_variate,
                        node_scale=self.node_scale,
                        tail_eps=self.tail_eps,
                    )

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("strikes", "maturities", "methods", "n_values", "quad_degrees"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out


@dataclass(frozen=True)
class McBlock:
    paths: int = 200_000
    steps: int = 2000
    seed: int = 0
    antithetic: bool = True
    block_size: int = 4096
    payoff: str = "call"
    fourier: bool = True
    fourier_prices: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        self.config()
        if self.payoff not in ("call", "put"):
            raise ConfigError(f"mc.payoff must be 'call' or 'put', got {self.payoff!r}")
        if self.fourier_prices is not None:
            object.__setattr__(self, "fourier_prices", _floats(self.fourier_prices, "mc.fourier_prices"))

    def config(self) -> McConfig:
        return McConfig(self.paths, self.steps, self.seed, self.antithetic, self.block_size)

    def to_dict(self) -> dict:
        out = asdict(self)
        if out["fourier_prices"] is not None:
            out["fourier_prices"] = list(out["fourier_prices"])
        return out


@dataclass(frozen=True)
class CheckBlock:
    points: int = 20
    seed: int = 0
    n_values: Tuple[int, ...] = (20, 100)
    threshold: float = 1e-8
    im_u_max: float = 10.0
    im_w_max: float = 10.0
    use_scan: bool = False
    include_zero: bool = True

    def __post_init__(self):
        if int(self.points) != self.points or self.points < 0:
            raise ConfigError(f"check.points must be a nonnegative integer, got {self.points}")
        object.__setattr__(self, "n_values", _ints(self.n_values, "check.n_values"))
        if any(n < 1 for n in self.n_values):
            raise ConfigError("check.n_values must be positive")
        if not self.threshold > 0:
            raise ConfigError(f"check.threshold must be positive, got {self.threshold}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["n_values"] = list(out["n_values"])
        return out


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration shared by all commands."""

    model: ModelParams
    n: int = 200
    scan: ScanBlock = field(default_factory=ScanBlock)
    transform: TransformBlock = field(default_factory=TransformBlock)
    pricing: PricingBlock = field(default_factory=PricingBlock)
    mc: McBlock = field(default_factory=McBlock)
    check: CheckBlock = field(default_factory=CheckBlock)
    sweep: Tuple[Tuple[Tuple[str, Any], ...], ...] = ()
    output: str = "out.csv"
    format: str = "csv"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"n must be a positive integer, got {self.n}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be 'csv' or 'json', got {self.format!r}")
        for case in self.sweep:
            for key, _ in case:
                if key not in _MODEL_KEYS:
                    raise ConfigError(f"sweep entries override model fields only, got {key!r}")
        self.cases()  # validates every sweep case

    def cases(self) -> List[Tuple[str, ModelParams]]:
        if not self.sweep:
            return [("", self.model)]
        out = []
        for case in self.sweep:
            try:
                params = self.model.replace(**dict(case))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid sweep case {dict(case)}: {exc}")
            out.append((";".join(f"{k}={v}" for k, v in case), params))
        return out

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "n": self.n,
            "scan": self.scan.to_dict(),
            "transform": self.transform.to_dict(),
            "pricing": self.pricing.to_dict(),
            "mc": self.mc.to_dict(),
            "check": self.check.to_dict(),
            "sweep": [dict(case) for case in self.sweep],
            "output": self.output,
            "format": self.format,
        }


_SCI = re.compile(r"[-+]?(\d+\.?\d*|\.\d+)[eE][-+]?\d+")
_MODEL_KEYS = {f.name for f in fields(ModelParams)}
_BLOCKS = {"scan": ScanBlock, "transform": TransformBlock, "pricing": PricingBlock, "mc": McBlock, "check": CheckBlock}


def _build(cls, data, name: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{name} must be a mapping")
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{name}: {exc}")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{name}: {exc}")


def _coerce_numbers(data):
    """YAML 1.1 reads exponent notation without a dot (1e-8) as a string."""
    if isinstance(data, dict):
        return {k: _coerce_numbers(v) for k, v in data.items()}
    if isinstance(data, list):
        return [_coerce_numbers(v) for v in data]
    if isinstance(data, str) and _SCI.fullmatch(data.strip()):
        return float(data)
    return data


def config_from_dict(data: dict) -> RunConfig:
    """Validate a raw mapping into a RunConfig."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    data = _coerce_numbers(data)
    allowed = {"model", "n", "output", "format", "sweep"} | set(_BLOCKS)
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    if "model" not in data:
        raise ConfigError("configuration needs a 'model' block")
    model = _build(ModelParams, data["model"], "model")
    blocks = {name: _build(cls, data.get(name), name) for name, cls in _BLOCKS.items()}
    sweep_raw = data.get("sweep") or []
    if not isinstance(sweep_raw, list) or not all(isinstance(c, dict) for c in sweep_raw):
        raise ConfigError("sweep must be a list of mappings")
    sweep = tuple(tuple(sorted(c.items())) for c in sweep_raw)
    try:
        return RunConfig(
            model=model,
            n=data.get("n", 200),
            sweep=sweep,
            output=str(data.get("output", "out.csv")),
            format=str(data.get("format", "csv")),
            **blocks,
        )
    except TypeError as exc:
        raise ConfigError(str(exc))


def serialize_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


def parse_config(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}")
    return config_from_dict(data)


def apply_overrides(data: dict, overrides: Sequence[str]) -> dict:
    """Apply ``a.b=value`` assignments; values are parsed as YAML scalars or lists."""
    data = json.loads(json.dumps(data or {}))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, raw = item.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ConfigError(f"empty override key in {item!r}")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse override value {raw!r}: {exc}")
        node = data
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {key!r} crosses a non-mapping value")
        node[parts[-1]] = value
    return data


def load_config(path: Optional[str], overrides: Sequence[str] = (), seed: Optional[int] = None) -> RunConfig:
    data: dict = {}
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}")
    overrides = list(overrides)
    if seed is not None:
        overrides += [f"mc.seed={seed}", f"check.seed={seed}"]
    return config_from_dict(apply_overrides(data, overrides))


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def atomic_write(path: Union[str, Path], text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render_csv(header: Sequence[str], rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(row.get(col)) for col in header])
    return buf.getvalue()


def _json_default(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _sidecar(path: Path, suffix: str) -> Path:
    return path.with_name(f"{path.stem}_{suffix}{path.suffix}")


@dataclass
class CommandOutput:
    """Tables keyed by header name; the first is the main file."""

    tables: Dict[str, List[dict]]
    exit_code: int = EXIT_OK
    summary: Dict[str, Any] = field(default_factory=dict)


def write_output(command: str, out: CommandOutput, path: Union[str, Path], fmt: str) -> List[Path]:
    path = Path(path)
    written = []
    if fmt == "json":
        doc = {"command": command, "version": __version__, "exit_code": out.exit_code, "summary": out.summary}
        for key, rows in out.tables.items():
            doc[key.split("/")[-1] if "/" in key else "rows"] = rows
        atomic_write(path, json.dumps(doc, indent=2, default=_json_default, allow_nan=True) + "\n")
        return [path]
    for key, rows in out.tables.items():
        target = path if key == command else _sidecar(path, key.split("/")[-1])
        atomic_write(target, render_csv(HEADERS[key], rows))
        written.append(target)
    return written


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _lipschitz_L(params: ModelParams, n: int, block: ScanBlock, explicit: Optional[float], upper: float) -> float:
    if explicit is not None:
        return float(explicit)
    probe = block.crossing_scan(max(upper, 1e-12) / 64, upper)
    L = lipschitz_estimate_empirical(params, TimeGrid(n, params.maturity), probe)
    return max(L, math.pi / max(upper, 1e-12))


def cmd_transform_scan(config: RunConfig, workers: Optional[int] = None) -> CommandOutput:
    if config.sweep:
        raise ConfigError("transform-scan does not take a sweep")
    block, tb = config.scan, config.transform
    if block.step == "auto":
        raise ConfigError("transform-scan needs a numeric scan.step")
    params = config.model
    grid = TimeGrid(config.n, params.maturity)
    xs = block.abscissae(float(block.step))
    scan = None
    if tb.method == "lipschitz" and xs.size:
        upper = float(xs[-1])
        if block.lower < 0:
            raise ConfigError("lipschitz scans start at 0; scan.lower must be >= 0")
        scan = ScanSpec(block.axis, block.fixed_real, upper, _lipschitz_L(params, config.n, block, tb.lipschitz_L, upper), block.other)
    rows, failed = [], False
    for x in xs:
        row = {"abscissa": float(x)}
        try:
            point = block.crossing_scan(1.0, max(block.upper, 0.0)).point(float(x))
            tv = evaluate(tb.method, params, grid, point, n_coarse=tb.n_coarse, scan=scan)
            row.update(
                re_xi=tv.value.real, im_xi=tv.value.imag, k=tv.k,
                log_abs_det=None if math.isnan(tv.log_abs_det) else tv.log_abs_det,
                arg_det=None if math.isnan(tv.arg_det) else tv.arg_det, status="ok",
            )
        except (DomainError, NumericalError) as exc:
            failed = True
            row.update(status=f"error: {exc}")
        rows.append(row)
    return CommandOutput({"transform-scan": rows}, EXIT_NUMERICAL if failed else EXIT_OK, {"points": len(rows)})


def cmd_crossing_scan(config: RunConfig, workers: Optional[int] = None) -> CommandOutput:
    block = config.scan
    if block.lower != 0:
        raise ConfigError("crossing-scan counts rotations from 0; scan.lower must be 0")
    if block.upper < 0:
        raise ConfigError("crossing-scan needs scan.upper >= 0")
    main, crossings, bounds, spectra, summary = [], [], [], [], []
    failed = False
    for idx, (label, params) in enumerate(config.cases()):
        grid = TimeGrid(config.n, params.maturity)
        info = {"case": idx, "overrides": label}
        try:
            if block.step == "auto":
                L = _lipschitz_L(params, config.n, block, config.transform.lipschitz_L, block.upper)
                step = min(math.pi / L, max(block.upper, 1e-12))
            else:
                step = float(block.step)
            report = scan_crossings(params, grid, block.crossing_scan(step), workers=workers)
        except (DomainError, NumericalError) as exc:
            failed = True
            summary.append({**info, "status": f"error: {exc}"})
            continue
        for x, a, k in zip(report.grid, report.arg_det, report.k_profile):
            main.append({"case": idx, "abscissa": float(x), "arg_det": float(a), "k": int(k)})
        for j, c in enumerate(report.crossings):
            crossings.append({"case": idx, "index": j, "lo": c.lo, "hi": c.hi, "location": c.location, "direction": c.direction})
        first = report.first_crossing
        for r, bound in report.bounds.items():
            holds = None if (bound is None or first is None) else bool(first <= bound)
            n_r = int(np.count_nonzero(report.spectrum > r))
            bounds.append({"case": idx, "r": r, "n_r": n_r, "bound": bound, "first_crossing": first, "holds": holds})
        for j, lam in enumerate(report.spectrum):
            spectra.append({"case": idx, "index": j, "eigenvalue": float(lam)})
        finite = [b for b in report.bounds.values() if b is not None]
        L_paper = L_strict = None
        if block.axis == "w":
            L_paper = lipschitz_bound_intvar(report.spectrum, block.fixed_real)
            L_strict = lipschitz_bound_intvar_strict(report.spectrum, block.fixed_real)
        summary.append({
            **info, "step": step, "points": len(report.grid), "crossing_count": len(report.crossings),
            "first_crossing": first, "min_bound": min(finite) if finite else None,
            "lipschitz_L": L_paper, "lipschitz_L_strict": L_strict, "status": "ok",
        })
    tables = {
        "crossing-scan": main,
        "crossing-scan/crossings": crossings,
        "crossing-scan/bounds": bounds,
        "crossing-scan/spectrum": spectra,
        "crossing-scan/summary": summary,
    }
    return CommandOutput(tables, EXIT_NUMERICAL if failed else EXIT_OK, {"cases": len(summary)})


def _maturities(config: RunConfig, params: ModelParams) -> Tuple[float, ...]:
    return config.pricing.maturities or (params.maturity,)


def cmd_price(config: RunConfig, workers: Optional[int] = None) -> CommandOutput:
    pb = config.pricing
    rows, failed = [], False
    for idx, (label, params) in enumerate(config.cases()):
        for req in pb.requests():
            stats: Dict[float, int] = {}
            cells = price_surface(params, pb.strikes, _maturities(config, params), req, workers, stats)
            for cell in cells:
                row = {
                    "case": idx, "overrides": label, "maturity": cell.maturity, "strike": cell.strike,
                    "method": req.method, "n": req.n, "quad_degree": req.quad_degree,
                    "evaluations": stats.get(cell.maturity),
                }
                if cell.result is None:
                    failed = True
                    row["status"] = f"error: {cell.error}"
                else:
                    t = cell.result.timings
                    row.update(
                        put=cell.result.put, call=cell.result.call, t_matrices=t.get("matrices"),
                        t_transform=t.get("transform"), t_quadrature=t.get("quadrature"), status="ok",
                    )
                rows.append(row)
    return CommandOutput({"price": rows}, EXIT_NUMERICAL if failed else EXIT_OK, {"rows": len(rows)})


def cmd_mc_benchmark(config: RunConfig, workers: Optional[int] = None) -> CommandOutput:
    mb, pb = config.mc, config.pricing
    if mb.fourier_prices is not None and len(mb.fourier_prices) != len(pb.strikes):
        raise ConfigError("mc.fourier_prices must align with pricing.strikes")
    mcc = mb.config()
    rows, failed = [], False
    first_req = next(iter(pb.requests()))
    for idx, (label, params) in enumerate(config.cases()):
        for T in _maturities(config, params):
            p_T = params.replace(maturity=T)
            log_s, _ = simulate_terminals(p_T, mcc, workers)
            pricer = None
            if mb.fourier and mb.fourier_prices is None:
                try:
                    pricer = LewisPricer(p_T, first_req, workers)
                except VolterraSteinError as exc:
                    failed = True
                    log.error("Fourier pricer failed at T=%s: %s", T, exc)
            for j, K in enumerate(pb.strikes):
                res = price_from_terminals(log_s, mcc, K, mb.payoff)
                row = {
                    "case": idx, "overrides": label, "maturity": T, "strike": K, "payoff": mb.payoff,
                    "paths": mb.paths, "steps": mb.steps, "seed": mb.seed, "mc_price": res.price,
                    "stderr": res.stderr, "ci_low": res.ci95[0], "ci_high": res.ci95[1], "status": "ok",
                }
                fourier = None
                try:
                    if mb.fourier_prices is not None:
                        fourier = mb.fourier_prices[j]
                    elif pricer is not None:
                        pr = pricer.price(K)
                        fourier = pr.call if mb.payoff == "call" else pr.put
                except VolterraSteinError as exc:
                    failed = True
                    row["status"] = f"error: {exc}"
                if fourier is not None:
                    row.update(fourier_price=fourier, contained=res.contains(fourier))
                rows.append(row)
    return CommandOutput({"mc-benchmark": rows}, EXIT_NUMERICAL if failed else EXIT_OK, {"rows": len(rows)})


def _identity_error(params: ModelParams, grid: TimeGrid, point: ArgPoint) -> float:
    kmats = get_kernel_matrices(params, grid)
    logdet, _, _ = _det_parts(kmats, point)
    phi = phi_tilde_n(params, grid, point)
    gap = -2.0 * phi - complex(logdet.log_abs, logdet.arg)
    return abs(np.expm1(gap))


def cmd_det_identity_check(config: RunConfig, workers: Optional[int] = None) -> CommandOutput:
    cb = config.check
    params = config.model
    rng = np.random.default_rng(cb.seed)
    points = random_admissible_points(rng, cb.points, cb.im_u_max, -1.0, cb.im_w_max)
    if cb.use_scan and config.scan.step != "auto":
        scan = config.scan.crossing_scan(1.0, max(config.scan.upper, 0.0))
        points += [scan.point(float(x)) for x in config.scan.abscissae(float(config.scan.step))]
    if cb.include_zero:
        points.append(ArgPoint(0j, 0j))
    rows, failed, worst = [], False, 0.0
    for n in cb.n_values:
        grid = TimeGrid(n, params.maturity)
        for pt in points:
            row = {"n": n, "re_u": pt.u.real, "im_u": pt.u.imag, "re_w": pt.w.real, "im_w": pt.w.imag}
            try:
                err = float(_identity_error(params, grid, pt))
                worst = max(worst, err)
                row.update(rel_error=err, passed=err <= cb.threshold, status="ok")
            except (DomainError, NumericalError) as exc:
                failed = True
                row.update(passed=False, status=f"error: {exc}")
            rows.append(row)
    code = EXIT_NUMERICAL if failed else EXIT_OK
    if not failed and worst > cb.threshold:
        code = EXIT_THRESHOLD
    return CommandOutput({"det-identity-check": rows}, code, {"max_rel_error": worst, "threshold": cb.threshold})


COMMANDS = {
    "transform-scan": cmd_transform_scan,
    "crossing-scan": cmd_crossing_scan,
    "price": cmd_price,
    "mc-benchmark": cmd_mc_benchmark,
    "det-identity-check": cmd_det_identity_check,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="volterra-stein", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("-c", "--config", help="YAML configuration file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a configuration entry (dotted path), repeatable")
        p.add_argument("--seed", type=int, help="seed for random sampling (mc.seed and check.seed)")
        p.add_argument("-o", "--output", help="output path (overrides the config)")
        p.add_argument("--format", choices=("csv", "json"), help="output format (overrides the config)")
        p.add_argument("--workers", type=int, help=f"worker threads (default: ${WORKERS_ENV} or 1)")
        p.add_argument("--dump-config", action="store_true", help="print the resolved configuration and exit")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.overrides)
    if args.output:
        overrides.append(f"output={json.dumps(args.output)}")
    if args.format:
        overrides.append(f"format={args.format}")
    try:
        config = load_config(args.config, overrides, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dump_config:
        sys.stdout.write(serialize_config(config))
        return EXIT_OK
    t0 = time.perf_counter()
    try:
        out = COMMANDS[args.command](config, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VolterraSteinError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    paths = write_output(args.command, out, config.output, config.format)
    log.info("%s finished in %.2fs; wrote %s", args.command, time.perf_counter() - t0, ", ".join(map(str, paths)))
    if out.exit_code == EXIT_THRESHOLD:
        print(f"threshold failure: {out.summary}", file=sys.stderr)
    elif out.exit_code == EXIT_NUMERICAL:
        print("numerical domain errors recorded in the output", file=sys.stderr)
    return out.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
