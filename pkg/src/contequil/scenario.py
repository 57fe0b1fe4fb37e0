"""Scenario configuration, execution and parameter sweeps.

Configs are TOML files with a mandatory ``schema_version``.  A scenario of
kind ``spectral`` builds a grid, partition, state, dynamics, observables and
an optional POVM family, then evaluates every inequality at each listed
``T``.  Kind ``finite-dim`` runs the effective-dimension baseline.
"""
from __future__ import annotations

import copy
import itertools
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import tomli_w
from threadpoolctl import threadpool_limits

from . import bounds, models, oracle
from .kernels import KernelParams
from .povm import effective_equilibration_check
from .spectral import (
    DensityMatrix,
    Observable,
    Partition,
    UniformCellDensity,
    build_uniform_grid,
    power_law_transform,
    table_transform,
)

SCHEMA_VERSION = 1
BUNDLED = ("toy_s6", "finite_dim_short", "lemma_suite")
PARTS_MIN_ORDER = 1.8
TOY_MATCH_TOL = 1e-8


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


# --------------------------------------------------------------------------
# Loading
# --------------------------------------------------------------------------


def bundled_config_path(name: str) -> Path:
    return Path(str(resources.files("contequil") / "configs" / f"{name}.toml"))


def load_config(source: str | Path) -> dict:
    """Read a config file or bundled config name and validate it."""
    path = Path(source)
    if not path.exists() and str(source) in BUNDLED:
        path = bundled_config_path(str(source))
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read config {source!s}: {exc.strerror}") from exc
    return parse_config(text, str(path))


def parse_config(text: str, origin: str = "<string>") -> dict:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("", f"{origin}: {exc}") from exc
    validate_config(raw)
    return raw


def dump_config(config: dict) -> str:
    return tomli_w.dumps(config)


def _require(cfg: dict, path: str, types, default=Ellipsis):
    node: Any = cfg
    parts = path.split(".")
    for key in parts:
        if not isinstance(node, dict) or key not in node:
            if default is not Ellipsis:
                return default
            raise ConfigError(path, "missing required field")
        node = node[key]
    if types is not None:
        allowed = types if isinstance(types, tuple) else (types,)
        if not isinstance(node, allowed) or (isinstance(node, bool) and bool not in allowed):
            raise ConfigError(path, f"expected {_type_name(types)}, got {type(node).__name__}")
    return node


def _type_name(types) -> str:
    if isinstance(types, tuple):
        return " or ".join(t.__name__ for t in types)
    return types.__name__


NUMBER = (int, float)


def validate_config(cfg: dict) -> None:
    version = _require(cfg, "schema_version", int)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version}; expected {SCHEMA_VERSION}")
    _require(cfg, "name", str)
    kind = _require(cfg, "kind", str)
    seed = _require(cfg, "seed", int)
    if seed < 0:
        raise ConfigError("seed", "must be non-negative")
    tol = _require(cfg, "tolerance", NUMBER, 1e-6)
    if tol < 0:
        raise ConfigError("tolerance", "must be non-negative")
    ts = _require(cfg, "time.T", list)
    if not ts or not all(isinstance(t, NUMBER) and not isinstance(t, bool) and t > 0 for t in ts):
        raise ConfigError("time.T", "expected a non-empty list of positive numbers")
    if kind == "spectral":
        _validate_spectral(cfg)
    elif kind == "finite-dim":
        dim = _require(cfg, "system.dim", int)
        if not 2 <= dim <= 64:
            raise ConfigError("system.dim", "must be between 2 and 64")
        st = _require(cfg, "system.state", str, "random-pure")
        if st not in ("random-pure", "maximally-mixed"):
            raise ConfigError("system.state", f"unknown state {st!r}")
        _require(cfg, "system.repeats", int, 1)
    else:
        raise ConfigError("kind", f"unknown scenario kind {kind!r}")


def _validate_spectral(cfg: dict) -> None:
    support = _require(cfg, "grid.support", list)
    if len(support) != 2 or not all(isinstance(v, NUMBER) for v in support):
        raise ConfigError("grid.support", "expected [lo, hi]")
    _require(cfg, "grid.n_points", int)
    has_count = "count" in cfg.get("partition", {})
    has_width = "width" in cfg.get("partition", {})
    if has_count == has_width:
        raise ConfigError("partition", "give exactly one of count or width")
    if has_count:
        _require(cfg, "partition.count", int)
    else:
        _require(cfg, "partition.width", NUMBER)
    family = _require(cfg, "state.family", str)
    if family == "uniform-cells":
        _require(cfg, "state.cells", list)
    elif family == "gaussian-profile":
        _require(cfg, "state.center", NUMBER)
        _require(cfg, "state.width", NUMBER)
    elif family == "random-seeded":
        pass
    else:
        raise ConfigError("state.family", f"unknown family {family!r}")
    tname = _require(cfg, "dynamics.transform", str, "identity")
    if tname == "power-law":
        _require(cfg, "dynamics.exponent", NUMBER)
    elif tname == "table":
        _require(cfg, "dynamics.p", list)
        _require(cfg, "dynamics.energy", list)
    elif tname != "identity":
        raise ConfigError("dynamics.transform", f"unknown transform {tname!r}")
    okind = _require(cfg, "observable.kind", str, "random-seeded")
    if okind == "diagonal":
        _require(cfg, "observable.values", list)
    elif okind == "matrix-file":
        _require(cfg, "observable.path", str)
    elif okind not in ("random-seeded", "smooth-random"):
        raise ConfigError("observable.kind", f"unknown observable kind {okind!r}")
    _require(cfg, "observable.count", int, 1)
    if "povm" in cfg:
        _require(cfg, "povm.n_povms", int)
        oc = _require(cfg, "povm.outcomes", list)
        if len(oc) != 2 or not all(isinstance(v, int) and v >= 1 for v in oc) or oc[0] > oc[1]:
            raise ConfigError("povm.outcomes", "expected [min, max] outcome counts")
    checks = cfg.get("checks", {})
    if not isinstance(checks, dict):
        raise ConfigError("checks", "expected a table")
    for key, val in checks.items():
        if key not in CHECK_NAMES:
            raise ConfigError(f"checks.{key}", "unknown check")
        if not isinstance(val, bool):
            raise ConfigError(f"checks.{key}", "expected true or false")
    nts = cfg.get("time", {}).get("n_time_samples")
    if nts is not None and not isinstance(nts, int):
        raise ConfigError("time.n_time_samples", "expected an integer")


CHECK_NAMES = ("bound", "block_norm", "diag_fluct", "cross_fluct", "parts_order", "povm", "toy")


# --------------------------------------------------------------------------
# Building
# --------------------------------------------------------------------------


@dataclass
class BuiltScenario:
    name: str
    partition: Partition
    state: Any
    transform: Any
    observables: list[Observable]
    povm_family: Any
    toy_cells: list[int] | None
    checks: dict[str, bool]
    n_time_samples: int | None
    tolerance: float


def _transform(cfg: dict):
    name = cfg.get("dynamics", {}).get("transform", "identity")
    if name == "identity":
        return None
    if name == "power-law":
        return power_law_transform(float(cfg["dynamics"]["exponent"]))
    return table_transform(cfg["dynamics"]["p"], cfg["dynamics"]["energy"])


def build_spectral(cfg: dict) -> BuiltScenario:
    rng = np.random.default_rng(cfg["seed"])
    lo, hi = cfg["grid"]["support"]
    try:
        grid = build_uniform_grid(float(lo), float(hi), cfg["grid"]["n_points"])
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from exc
    part_cfg = cfg["partition"]
    try:
        if "count" in part_cfg:
            partition = Partition.uniform(grid, count=part_cfg["count"])
        else:
            partition = Partition.uniform(grid, width=float(part_cfg["width"]))
    except ValueError as exc:
        raise ConfigError("partition", str(exc)) from exc
    scfg = cfg["state"]
    toy_cells = None
    try:
        if scfg["family"] == "uniform-cells":
            toy_cells = [int(c) for c in scfg["cells"]]
            state = models.uniform_cells_state(partition, toy_cells)
        elif scfg["family"] == "gaussian-profile":
            state = models.gaussian_profile_state(grid, float(scfg["center"]), float(scfg["width"]),
                                                  float(scfg.get("momentum", 0.0)))
        else:
            cells = scfg.get("cells")
            state = models.random_state(grid, rng, cells, partition if cells is not None else None)
    except (ValueError, IndexError) as exc:
        raise ConfigError("state", str(exc)) from exc
    try:
        transform = _transform(cfg)
    except ValueError as exc:
        raise ConfigError("dynamics", str(exc)) from exc
    ocfg = cfg.get("observable", {})
    okind = ocfg.get("kind", "random-seeded")
    count = int(ocfg.get("count", 1))
    try:
        if okind == "random-seeded":
            observables = [models.random_observable(grid, rng) for _ in range(count)]
        elif okind == "smooth-random":
            observables = [models.smooth_random_observable(grid, rng) for _ in range(count)]
        elif okind == "diagonal":
            observables = [models.diagonal_observable(grid, ocfg["values"])]
        else:
            observables = [Observable(grid, _load_matrix(ocfg["path"]))]
    except (ValueError, OSError) as exc:
        raise ConfigError("observable", str(exc)) from exc
    povm_family = None
    if "povm" in cfg:
        pc = cfg["povm"]
        povm_family = models.random_povm_family(grid.size, rng, pc["n_povms"], tuple(pc["outcomes"]))
    checks = {name: True for name in CHECK_NAMES}
    checks["toy"] = toy_cells is not None and transform is not None and transform.name.startswith("power-law(k=2")
    checks["povm"] = povm_family is not None
    checks.update(cfg.get("checks", {}))
    return BuiltScenario(cfg["name"], partition, state, transform, observables, povm_family, toy_cells,
                         checks, cfg.get("time", {}).get("n_time_samples"), float(cfg.get("tolerance", 1e-6)))


def _load_matrix(path: str) -> np.ndarray:
    if path.endswith(".npy"):
        return np.load(path)
    return np.loadtxt(path, dtype=complex)


# --------------------------------------------------------------------------
# Rows
# --------------------------------------------------------------------------

CHECKS_IN_ROW = ("bound", "block_norm", "diag_fluct", "cross_fluct", "parts_order", "povm", "toy", "short")


@dataclass
class Row:
    scenario: str
    kind: str
    T: float
    tolerance: float
    delta: float | None = None
    N: int | None = None
    D: float | None = None
    k_term: float | None = None
    f_term: float | None = None
    beta_sq_sum: float | None = None
    r_cross_term: float | None = None
    total: float | None = None
    empirical_sigma_sq: float | None = None
    checks: dict[str, tuple[float, float]] = field(default_factory=dict)
    extras: dict[str, float | None] = field(default_factory=dict)

    def passes(self, name: str) -> bool | None:
        if name not in self.checks:
            return None
        lhs, rhs = self.checks[name]
        return bool(lhs <= rhs + self.tolerance)

    @property
    def pass_all(self) -> bool:
        flags = [self.passes(n) for n in self.checks]
        if "toy_match" in self.extras and self.extras["toy_match"] is not None:
            flags.append(self.extras["toy_match"] <= TOY_MATCH_TOL)
        return all(flags)


def _worst_block_norm(built: BuiltScenario, T: float) -> tuple[float, float]:
    """Pair with the largest ``lhs - rhs`` among occupied cells."""
    worst = None
    p = built.partition
    occupied = [int(c) for c in bounds._occupied(built.state, p)]
    if len(occupied) < 2:
        return oracle.verify_lemma1(built.state, p, T, 0, 1, "cesaro", built.transform)
    for i in occupied:
        for j in occupied:
            if i == j:
                continue
            lhs, rhs = oracle.verify_lemma1(built.state, p, T, i, j, "cesaro", built.transform)
            if worst is None or lhs - rhs > worst[0] - worst[1]:
                worst = (lhs, rhs)
    return worst


def _parts_order(built: BuiltScenario, T: float) -> tuple[float, float] | None:
    occupied = bounds._occupied(built.state, built.partition)
    if occupied.size < 2:
        return None
    spacing = float(built.partition.grid.weights[0])
    t = min(T, 0.25 / spacing)
    _, orders = oracle.integration_by_parts_orders(built.state, built.partition, int(occupied[0]),
                                                 int(occupied[1]), t, "phase")
    return PARTS_MIN_ORDER, float(min(orders))


def run_spectral_row(cfg: dict, T: float) -> Row:
    built = build_spectral(cfg)
    p = built.partition
    params = KernelParams(T, p.width)
    nts = built.n_time_samples
    breakdown = bounds.assemble_bound(built.state, p, params, built.transform)
    sig = max(oracle.empirical_sigma_sq(built.state, a, T, nts, built.transform) for a in built.observables)
    row = Row(cfg["name"], "spectral", T, built.tolerance, delta=p.width,
              N=int(np.count_nonzero(built.state.cell_weights(p) > 0)),
              k_term=breakdown.k_term, f_term=breakdown.f_term, beta_sq_sum=breakdown.beta_sq_sum,
              r_cross_term=breakdown.r_cross_term, total=breakdown.total, empirical_sigma_sq=sig)
    ch = built.checks
    if ch.get("bound"):
        row.checks["bound"] = (sig, breakdown.total)
    if ch.get("block_norm"):
        row.checks["block_norm"] = _worst_block_norm(built, T)
    if ch.get("diag_fluct"):
        row.checks["diag_fluct"] = oracle.verify_lemma2(built.state, p, T, built.observables, built.transform, nts)
    if ch.get("cross_fluct") and built.state.support.size ** 2 <= oracle.DOUBLED_DIM_CAP:
        worst = None
        for a in built.observables:
            lr = oracle.verify_lemma3(built.state, p, T, a, built.transform, nts)
            if worst is None or lr[0] - lr[1] > worst[0] - worst[1]:
                worst = lr
        row.checks["cross_fluct"] = worst
    if ch.get("parts_order"):
        res = _parts_order(built, T)
        if res is not None:
            row.checks["parts_order"] = res
    if ch.get("povm") and built.povm_family is not None:
        eq = effective_equilibration_check(built.povm_family, built.state, breakdown, T, nts, built.transform)
        row.checks["povm"] = (eq.lhs, eq.rhs)
        row.extras["povm_chain_rhs"] = eq.chain_rhs
    if ch.get("toy") and built.toy_cells is not None:
        toy = bounds.ToyParams.from_cells(p, built.toy_cells, T)
        closed = bounds.toy_closed_form(toy)
        density = UniformCellDensity(p, tuple(built.toy_cells))
        env = bounds.envelope_substituted_bound(density, p, toy, transform=built.transform)
        row.D = toy.big_d
        row.checks["toy"] = (sig, closed.total)
        row.extras["toy_envelope_total"] = env.total
        row.extras["toy_match"] = abs(closed.total - env.total)
        row.extras["toy_generic_total"] = breakdown.total
    return row


def run_finite_dim_row(cfg: dict, T: float) -> Row:
    rng = np.random.default_rng(cfg["seed"])
    sc = cfg["system"]
    dim = sc["dim"]
    repeats = sc.get("repeats", 1)
    worst = None
    d_eff = dist = None
    for _ in range(repeats):
        system = models.random_finite_system(dim, rng)
        if sc.get("state", "random-pure") == "maximally-mixed":
            system = bounds.FiniteDimSystem(system.eigenvalues, system.ranks, DensityMatrix(np.eye(dim) / dim))
        a = models.random_hermitian(dim, rng)
        sb = bounds.short_bound_finite_dim(system, a)
        lhs = bounds.infinite_time_sigma_sq(system, a)
        if worst is None or lhs - sb.sigma_sq_infinity_bound > worst[0] - worst[1]:
            worst = (lhs, sb.sigma_sq_infinity_bound)
            d_eff = sb.d_eff
            dist = oracle.finite_dim_dephasing(system, T)
    row = Row(cfg["name"], "finite-dim", T, float(cfg.get("tolerance", 1e-6)))
    row.checks["short"] = worst
    row.extras["d_eff"] = d_eff
    row.extras["dephasing_distance"] = dist
    return row


def run_row(cfg: dict, T: float) -> Row:
    with threadpool_limits(1):
        if cfg["kind"] == "spectral":
            return run_spectral_row(cfg, T)
        return run_finite_dim_row(cfg, T)


# --------------------------------------------------------------------------
# Drivers
# --------------------------------------------------------------------------


@dataclass
class SweepReport:
    rows: list[Row]

    @property
    def all_pass(self) -> bool:
        return all(r.pass_all for r in self.rows)


def apply_overrides(cfg: dict, seed: int | None = None, tolerance: float | None = None) -> dict:
    out = copy.deepcopy(cfg)
    if seed is not None:
        out["seed"] = int(seed)
    if tolerance is not None:
        out["tolerance"] = float(tolerance)
    validate_config(out)
    return out


def _tasks(cfg: dict) -> list[tuple[dict, float]]:
    return [(cfg, float(t)) for t in cfg["time"]["T"]]


def _execute(tasks: list[tuple[dict, float]], jobs: int) -> list[Row]:
    if jobs <= 1 or len(tasks) <= 1:
        return [run_row(c, t) for c, t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_row, c, t) for c, t in tasks]
        return [f.result() for f in futures]


def run_scenario(cfg: dict, jobs: int = 1) -> SweepReport:
    """Evaluate every enabled inequality at each ``T`` of the config."""
    return SweepReport(_execute(_tasks(cfg), jobs))


def _set_path(cfg: dict, path: str, value) -> None:
    if path == "T":
        cfg["time"]["T"] = [value]
        return
    parts = path.split(".")
    node = cfg
    for key in parts[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(path, "unknown sweep axis")
        node = node[key]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise ConfigError(path, "unknown sweep axis")
    node[parts[-1]] = value


def parse_axis(text: str) -> tuple[str, list]:
    """``name=v1,v2,...`` with numeric values where possible."""
    if "=" not in text:
        raise ConfigError(text, "axis must look like name=v1,v2")
    name, vals = text.split("=", 1)
    out = []
    for v in vals.split(","):
        v = v.strip()
        if not v:
            raise ConfigError(name, "empty axis value")
        try:
            num = int(v)
        except ValueError:
            try:
                num = float(v)
            except ValueError:
                num = v
        out.append(num)
    return name.strip(), out


def run_sweep(cfg: dict, axes: list[tuple[str, list]], jobs: int = 1) -> SweepReport:
    """Cartesian-product sweep; rows follow the lexicographic order of the axes."""
    if not axes:
        return run_scenario(cfg, jobs)
    tasks = []
    for combo in itertools.product(*(vals for _, vals in axes)):
        variant = copy.deepcopy(cfg)
        label = []
        for (name, _), value in zip(axes, combo):
            _set_path(variant, name, value)
            label.append(f"{name}={value}")
        variant["name"] = f"{cfg['name']}[{','.join(label)}]"
        validate_config(variant)
        tasks.extend(_tasks(variant))
    return SweepReport(_execute(tasks, jobs))
