"""Run configuration: one JSON document describes one reproducible experiment.

Shape of the document (defaults in parentheses):

    {
      "model":  {"r": 0.05, "d": [0.02], "a": [[0.04]], "T": 1.0},
      "payoff": {"family": "index_put", "w": [1.0], "K": 100.0},
      "spot":   {"s": 0.0, "x": [100.0]},
      "pde":    {"nodes_per_axis": 201|101, "time_steps": 200|100,
                 "theta": 0.5, "eps_exercise": null, "psor_omega": 1.3,
                 "psor_tol": 1e-9, "psor_max_sweeps": 10000},
      "mc":     {"n_paths": 100000, "mesh_steps": 200, "seed": 12345,
                 "antithetic": false, "chunk_size": 65536,
                 "region_source": "pde",
                 "lsmc": {"train_paths": 100000, "price_paths": 100000,
                          "dates": 50, "degree": 3}},
      "tolerances": {"abs": null, "stderr_mult": 3.0},
      "threads": 0,
      "output": {"dir": "out", "surface_csv": false, "region_csv": false,
                 "paths_csv": false}
    }

Families: index_call / index_put (fields w, K), max_call / min_put (K),
multi_strike (K as a list), power_product (gamma, K). Validation errors name
the offending field by dotted path.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ValidationError
from .model import ModelParams, SpotPoint
from .payoff import FAMILIES, PayoffSpec


def _require(block: dict, key: str, path: str):
    if key not in block:
        raise ConfigError(f"{path}.{key}", "missing required field")
    return block[key]


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return value


def _vector(value, path: str) -> list[float]:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(path, f"expected a nonempty list of numbers, got {value!r}")
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _known_keys(block: dict, allowed: set[str], path: str):
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown field")


@dataclass(frozen=True)
class ModelBlock:
    r: float
    d: tuple
    a: tuple  # rows
    T: float


@dataclass(frozen=True)
class PayoffBlock:
    family: str
    params: dict


@dataclass(frozen=True)
class SpotBlock:
    s: float
    x: tuple


@dataclass(frozen=True)
class PdeBlock:
    nodes_per_axis: int
    time_steps: int
    theta: float = 0.5
    eps_exercise: float | None = None
    psor_omega: float = 1.3
    psor_tol: float = 1e-9
    psor_max_sweeps: int = 10_000


@dataclass(frozen=True)
class LsmcBlock:
    train_paths: int = 100_000
    price_paths: int = 100_000
    dates: int = 50
    degree: int = 3


@dataclass(frozen=True)
class McBlock:
    n_paths: int = 100_000
    mesh_steps: int = 200
    seed: int = 12_345
    antithetic: bool = False
    chunk_size: int = 1 << 16
    region_source: str = "pde"
    lsmc: LsmcBlock = field(default_factory=LsmcBlock)


@dataclass(frozen=True)
class ToleranceBlock:
    abs: float | None = None
    stderr_mult: float = 3.0


@dataclass(frozen=True)
class OutputBlock:
    dir: str = "out"
    surface_csv: bool = False
    region_csv: bool = False
    paths_csv: bool = False


@dataclass(frozen=True)
class RunConfig:
    model: ModelBlock
    payoff: PayoffBlock
    spot: SpotBlock
    pde: PdeBlock
    mc: McBlock
    tolerances: ToleranceBlock = field(default_factory=ToleranceBlock)
    threads: int = 0
    output: OutputBlock = field(default_factory=OutputBlock)

    @property
    def n(self) -> int:
        return len(self.spot.x)

    def build_objects(self) -> tuple[ModelParams, PayoffSpec, SpotPoint]:
        """Materialize validated domain objects from the blocks."""
        try:
            params = ModelParams(r=self.model.r, d=np.array(self.model.d),
                                 a=np.array(self.model.a), T=self.model.T)
        except ValidationError as exc:
            raise ConfigError("model", str(exc)) from exc
        try:
            spec = FAMILIES[self.payoff.family](**self.payoff.params)
        except ValidationError as exc:
            raise ConfigError("payoff", str(exc)) from exc
        try:
            spot = SpotPoint(s=self.spot.s, x=np.array(self.spot.x))
            spot.require_before(params.T)
        except ValidationError as exc:
            raise ConfigError("spot", str(exc)) from exc
        return params, spec, spot

    def tolerance_abs(self, spec: PayoffSpec) -> float:
        if self.tolerances.abs is not None:
            return self.tolerances.abs
        return 2e-3 * spec.k_scale

    def override(self, *, pde_nodes: int | None = None, pde_steps: int | None = None,
                 mc_paths: int | None = None, mc_mesh_steps: int | None = None,
                 seed: int | None = None, threads: int | None = None,
                 out_dir: str | None = None) -> "RunConfig":
        pde = self.pde
        if pde_nodes is not None or pde_steps is not None:
            pde = replace(pde,
                          nodes_per_axis=pde_nodes or pde.nodes_per_axis,
                          time_steps=pde_steps or pde.time_steps)
        mcb = self.mc
        if mc_paths is not None or mc_mesh_steps is not None or seed is not None:
            mcb = replace(mcb,
                          n_paths=mc_paths or mcb.n_paths,
                          mesh_steps=mc_mesh_steps or mcb.mesh_steps,
                          seed=mcb.seed if seed is None else seed)
        out = self.output if out_dir is None else replace(self.output, dir=out_dir)
        thr = self.threads if threads is None else threads
        return replace(self, pde=pde, mc=mcb, output=out, threads=thr)

    def canonical_dict(self) -> dict:
        return {
            "model": {"r": self.model.r, "d": list(self.model.d),
                      "a": [list(row) for row in self.model.a], "T": self.model.T},
            "payoff": {"family": self.payoff.family,
                       **{k: (v.tolist() if isinstance(v, np.ndarray) else v)
                          for k, v in self.payoff.params.items()}},
            "spot": {"s": self.spot.s, "x": list(self.spot.x)},
            "pde": {"nodes_per_axis": self.pde.nodes_per_axis,
                    "time_steps": self.pde.time_steps, "theta": self.pde.theta,
                    "eps_exercise": self.pde.eps_exercise,
                    "psor_omega": self.pde.psor_omega,
                    "psor_tol": self.pde.psor_tol,
                    "psor_max_sweeps": self.pde.psor_max_sweeps},
            "mc": {"n_paths": self.mc.n_paths, "mesh_steps": self.mc.mesh_steps,
                   "seed": self.mc.seed, "antithetic": self.mc.antithetic,
                   "chunk_size": self.mc.chunk_size,
                   "region_source": self.mc.region_source,
                   "lsmc": {"train_paths": self.mc.lsmc.train_paths,
                            "price_paths": self.mc.lsmc.price_paths,
                            "dates": self.mc.lsmc.dates,
                            "degree": self.mc.lsmc.degree}},
            "tolerances": {"abs": self.tolerances.abs,
                           "stderr_mult": self.tolerances.stderr_mult},
            "threads": self.threads,
        }

    def params_hash(self) -> str:
        payload = json.dumps(self.canonical_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:12]


_PAYOFF_FIELDS = {
    "index_call": {"w", "K"},
    "index_put": {"w", "K"},
    "max_call": {"K"},
    "min_put": {"K"},
    "multi_strike": {"K"},
    "power_product": {"gamma", "K"},
}


def _parse_payoff(block: dict, n: int) -> PayoffBlock:
    family = _require(block, "family", "payoff")
    if family not in FAMILIES:
        raise ConfigError("payoff.family",
                          f"unknown family {family!r}; choose from {sorted(FAMILIES)}")
    _known_keys(block, _PAYOFF_FIELDS[family] | {"family"}, "payoff")
    params: dict = {}
    if family in ("index_call", "index_put"):
        w = _vector(_require(block, "w", "payoff"), "payoff.w")
        if len(w) != n:
            raise ConfigError("payoff.w", f"expected length {n}, got {len(w)}")
        params["w"] = np.array(w)
        params["K"] = _number(_require(block, "K", "payoff"), "payoff.K")
    elif family in ("max_call", "min_put"):
        params["K"] = _number(_require(block, "K", "payoff"), "payoff.K")
    elif family == "multi_strike":
        K = _vector(_require(block, "K", "payoff"), "payoff.K")
        if len(K) != n:
            raise ConfigError("payoff.K", f"expected length {n}, got {len(K)}")
        params["K"] = np.array(K)
    else:  # power_product
        params["gamma"] = _number(_require(block, "gamma", "payoff"), "payoff.gamma")
        params["K"] = _number(_require(block, "K", "payoff"), "payoff.K")
    return PayoffBlock(family=family, params=params)


def from_dict(doc: dict) -> RunConfig:
    """Parse and validate a config document; errors carry dotted field paths."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config document must be a JSON object")
    _known_keys(doc, {"model", "payoff", "spot", "pde", "mc", "tolerances",
                      "threads", "output"}, "<root>")

    spot_block = _require(doc, "spot", "<root>")
    x = _vector(_require(spot_block, "x", "spot"), "spot.x")
    n = len(x)
    for i, v in enumerate(x):
        if v <= 0:
            raise ConfigError(f"spot.x[{i}]", f"spot must be > 0, got {v}")
    s = _number(spot_block.get("s", 0.0), "spot.s")
    _known_keys(spot_block, {"s", "x"}, "spot")

    model_block = _require(doc, "model", "<root>")
    _known_keys(model_block, {"r", "d", "a", "T"}, "model")
    r = _number(_require(model_block, "r", "model"), "model.r")
    T = _number(_require(model_block, "T", "model"), "model.T")
    d = _vector(_require(model_block, "d", "model"), "model.d")
    if len(d) != n:
        raise ConfigError("model.d", f"expected length {n}, got {len(d)}")
    a_raw = _require(model_block, "a", "model")
    if not isinstance(a_raw, (list, tuple)) or len(a_raw) != n:
        raise ConfigError("model.a", f"expected {n} rows, got "
                          f"{len(a_raw) if isinstance(a_raw, (list, tuple)) else a_raw!r}")
    a = []
    for i, row in enumerate(a_raw):
        row_vals = _vector(row, f"model.a[{i}]")
        if len(row_vals) != n:
            raise ConfigError(f"model.a[{i}]", f"expected length {n}, got {len(row_vals)}")
        a.append(tuple(row_vals))
    if r < 0:
        raise ConfigError("model.r", f"must be >= 0, got {r}")
    if T <= 0:
        raise ConfigError("model.T", f"must be > 0, got {T}")
    for i, v in enumerate(d):
        if v < 0:
            raise ConfigError(f"model.d[{i}]", f"must be >= 0, got {v}")
    if not 0 <= s < T:
        raise ConfigError("spot.s", f"must be in [0, T={T}), got {s}")

    payoff = _parse_payoff(_require(doc, "payoff", "<root>"), n)

    pde_block = doc.get("pde", {})
    _known_keys(pde_block, {"nodes_per_axis", "time_steps", "theta", "eps_exercise",
                            "psor_omega", "psor_tol", "psor_max_sweeps"}, "pde")
    nodes_default = 201 if n == 1 else 101
    steps_default = 200 if n == 1 else 100
    pde = PdeBlock(
        nodes_per_axis=_integer(pde_block.get("nodes_per_axis", nodes_default),
                                "pde.nodes_per_axis"),
        time_steps=_integer(pde_block.get("time_steps", steps_default),
                            "pde.time_steps"),
        theta=_number(pde_block.get("theta", 0.5), "pde.theta"),
        eps_exercise=(None if pde_block.get("eps_exercise") is None
                      else _number(pde_block["eps_exercise"], "pde.eps_exercise")),
        psor_omega=_number(pde_block.get("psor_omega", 1.3), "pde.psor_omega"),
        psor_tol=_number(pde_block.get("psor_tol", 1e-9), "pde.psor_tol"),
        psor_max_sweeps=_integer(pde_block.get("psor_max_sweeps", 10_000),
                                 "pde.psor_max_sweeps"),
    )
    if not 0.5 <= pde.theta <= 1.0:
        raise ConfigError("pde.theta", f"must be in [0.5, 1], got {pde.theta}")

    mc_block = doc.get("mc", {})
    _known_keys(mc_block, {"n_paths", "mesh_steps", "seed", "antithetic",
                           "chunk_size", "region_source", "lsmc"}, "mc")
    lsmc_block = mc_block.get("lsmc", {})
    _known_keys(lsmc_block, {"train_paths", "price_paths", "dates", "degree"},
                "mc.lsmc")
    lsmc = LsmcBlock(
        train_paths=_integer(lsmc_block.get("train_paths", 100_000),
                             "mc.lsmc.train_paths"),
        price_paths=_integer(lsmc_block.get("price_paths", 100_000),
                             "mc.lsmc.price_paths"),
        dates=_integer(lsmc_block.get("dates", 50), "mc.lsmc.dates"),
        degree=_integer(lsmc_block.get("degree", 3), "mc.lsmc.degree"),
    )
    mcb = McBlock(
        n_paths=_integer(mc_block.get("n_paths", 100_000), "mc.n_paths"),
        mesh_steps=_integer(mc_block.get("mesh_steps", 200), "mc.mesh_steps"),
        seed=_integer(mc_block.get("seed", 12_345), "mc.seed"),
        antithetic=bool(mc_block.get("antithetic", False)),
        chunk_size=_integer(mc_block.get("chunk_size", 1 << 16), "mc.chunk_size"),
        region_source=str(mc_block.get("region_source", "pde")),
        lsmc=lsmc,
    )
    if mcb.region_source not in ("pde", "lsmc"):
        raise ConfigError("mc.region_source",
                          f"must be 'pde' or 'lsmc', got {mcb.region_source!r}")
    if mcb.region_source == "pde" and n > 2:
        raise ConfigError("mc.region_source",
                          f"grid region needs n <= 2 (n={n}); use 'lsmc'")

    tol_block = doc.get("tolerances", {})
    _known_keys(tol_block, {"abs", "stderr_mult"}, "tolerances")
    tolerances = ToleranceBlock(
        abs=(None if tol_block.get("abs") is None
             else _number(tol_block["abs"], "tolerances.abs")),
        stderr_mult=_number(tol_block.get("stderr_mult", 3.0),
                            "tolerances.stderr_mult"),
    )

    out_block = doc.get("output", {})
    _known_keys(out_block, {"dir", "surface_csv", "region_csv", "paths_csv"},
                "output")
    output = OutputBlock(
        dir=str(out_block.get("dir", "out")),
        surface_csv=bool(out_block.get("surface_csv", False)),
        region_csv=bool(out_block.get("region_csv", False)),
        paths_csv=bool(out_block.get("paths_csv", False)),
    )

    threads = _integer(doc.get("threads", 0), "threads")
    if threads < 0:
        raise ConfigError("threads", f"must be >= 0, got {threads}")

    cfg = RunConfig(
        model=ModelBlock(r=r, d=tuple(d), a=tuple(a), T=T),
        payoff=payoff,
        spot=SpotBlock(s=s, x=tuple(x)),
        pde=pde, mc=mcb, tolerances=tolerances, threads=threads, output=output,
    )
    cfg.build_objects()  # surface any remaining domain-level validation now
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError("<file>", f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON in {path}: {exc}") from exc
    return from_dict(doc)
