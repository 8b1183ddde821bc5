"""Scenario runner, parameter sweeps and CSV output."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .adversary import (
    AdversarySet,
    AttackerConfig,
    AttackerMode,
    attacker_count,
    select_attackers,
)
from .identity import NodeId, PublicKey
from .netsim.world import ConfigError, SimConfig, SimWorld, derive_rng
from .protocol import (
    CertificationProtocol,
    ExchangeState,
    NodeState,
    ProtocolConfig,
    ProtocolError,
    Status,
    install_mutual,
)
from .trust import TrustError, TrustParams

log = logging.getLogger(__name__)

CSV_HEADER = ("axis", "valid_rate", "corrupted_rate", "failed_rate", "mean_delay_s", "runs", "seed")
RUNS_HEADER = ("axis", "run", "seed", "requested", "valid", "corrupted", "failed", "delay_sum_s")
AXES = ("attacker_fraction", "mpktv", "known_nodes")


@dataclass(frozen=True)
class ScenarioConfig:
    sim: SimConfig = SimConfig()
    comm_pairs: int = 5
    runs: int = 10
    attacker: AttackerConfig = AttackerConfig()
    known_nodes: int = 0
    mpktv: float = 0.7
    trust_params: TrustParams = TrustParams()
    protocol: ProtocolConfig = ProtocolConfig()

    @property
    def base_seed(self) -> int:
        return self.sim.rng_seed

    def validate(self) -> None:
        try:
            self.sim.validate()
            self.attacker.validate()
            self.protocol.validate()
        except (ProtocolError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        n = self.sim.node_count
        if self.comm_pairs < 1:
            raise ConfigError("comm_pairs must be >= 1")
        if 2 * self.comm_pairs > n:
            raise ConfigError("comm_pairs needs 2 distinct nodes per pair")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if not 0 <= self.known_nodes < n:
            raise ConfigError("known_nodes must satisfy 0 <= known_nodes < node_count")
        if not 0.0 <= self.mpktv <= 1.0:
            raise ConfigError("mpktv must lie in [0, 1]")
        # an endpoint's peers exclude itself, its partner and every attacker
        if self.known_nodes > n - 2 - attacker_count(self.attacker.fraction, n):
            raise ConfigError("known_nodes exceeds the honest nodes available")

    def with_axis(self, axis: str, value: float) -> "ScenarioConfig":
        if axis == "attacker_fraction":
            return replace(self, attacker=replace(self.attacker, fraction=float(value)))
        if axis == "mpktv":
            return replace(self, mpktv=float(value))
        if axis == "known_nodes":
            if float(value) != int(value):
                raise ConfigError(f"known_nodes must be an integer, got {value!r}")
            return replace(self, known_nodes=int(value))
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {', '.join(AXES)}")


@dataclass(frozen=True)
class RunCounts:
    run: int
    seed: int
    requested: int
    valid: int
    corrupted: int
    failed: int
    delays: Tuple[float, ...]

    @property
    def delay_sum(self) -> float:
        return math.fsum(self.delays)


@dataclass(frozen=True)
class MetricsRecord:
    valid_acceptance_rate: float
    corrupted_acceptance_rate: float
    failed_rate: float
    mean_delay: float
    per_run: Tuple[RunCounts, ...]
    seed: int

    @property
    def runs(self) -> int:
        return len(self.per_run)

    @classmethod
    def from_runs(cls, per_run: Sequence[RunCounts], seed: int) -> "MetricsRecord":
        requested = sum(r.requested for r in per_run)
        delays = [d for r in per_run for d in r.delays]
        return cls(
            valid_acceptance_rate=sum(r.valid for r in per_run) / requested,
            corrupted_acceptance_rate=sum(r.corrupted for r in per_run) / requested,
            failed_rate=sum(r.failed for r in per_run) / requested,
            mean_delay=math.fsum(delays) / len(delays) if delays else math.nan,
            per_run=tuple(per_run),
            seed=seed,
        )


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: Tuple[float, ...]
    fixed: ScenarioConfig = ScenarioConfig()

    def validate(self) -> None:
        if self.axis not in AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}; choose from {', '.join(AXES)}")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        for v in self.values:
            self.fixed.with_axis(self.axis, v).validate()


# -- one run ------------------------------------------------------------------------


@dataclass
class RunSetup:
    """Everything a single seeded run is built from; handy for tests."""

    world: SimWorld
    protocol: CertificationProtocol
    nodes: Dict[NodeId, NodeState]
    pairs: List[Tuple[NodeId, NodeId]]
    attackers: List[NodeId]
    start_times: List[float]


def choose_pairs(seed: int, node_count: int, comm_pairs: int) -> List[Tuple[NodeId, NodeId]]:
    ends = derive_rng(seed, "pairs").sample(range(node_count), 2 * comm_pairs)
    return [(ends[2 * i], ends[2 * i + 1]) for i in range(comm_pairs)]


def seed_known_nodes(
    nodes: Mapping[NodeId, NodeState],
    pairs: Sequence[Tuple[NodeId, NodeId]],
    count: int,
    params: TrustParams,
    seed: int,
    attackers: Iterable[NodeId] = (),
    now: float = 0.0,
) -> Dict[NodeId, List[NodeId]]:
    """Pre-certify ``count`` honest peers for every source and destination.

    Each endpoint gets a seeded candidate order of its own; the first
    ``count`` honest candidates are taken, so a smaller count is always a
    prefix of a larger one.
    """
    bad = set(attackers)
    chosen: Dict[NodeId, List[NodeId]] = {}
    for s, d in pairs:
        for end, partner in ((s, d), (d, s)):
            pool = [v for v in sorted(nodes) if v not in (end, partner)]
            derive_rng(seed, "known", end).shuffle(pool)
            peers = [v for v in pool if v not in bad][:count]
            if len(peers) < count:
                raise ConfigError(f"only {len(peers)} honest peers available for node {end}")
            for p in peers:
                install_mutual(nodes[end], nodes[p], now, params)
            chosen[end] = peers
    return chosen


def build_run(config: ScenarioConfig, seed: int, trace: bool = False) -> RunSetup:
    sim = replace(config.sim, rng_seed=seed)
    n = sim.node_count
    params = replace(config.trust_params, mpktv=config.mpktv)
    world = SimWorld(sim, trace=trace)
    pairs = choose_pairs(seed, n, config.comm_pairs)
    endpoints = [v for p in pairs for v in p]
    attackers = select_attackers(seed, config.attacker.fraction, n, excluded=endpoints)
    adversary = AdversarySet(config.attacker, set(attackers), salt=seed)
    nodes = {v: NodeState.create(v, (seed, v), params) for v in range(n)}
    seed_known_nodes(nodes, pairs, config.known_nodes, params, seed, attackers)
    proto = CertificationProtocol(world, nodes, params, config.protocol, adversary)
    rng = derive_rng(seed, "stagger")
    starts = [rng.uniform(0.0, sim.duration / 2) for _ in pairs]
    return RunSetup(world, proto, nodes, pairs, attackers, starts)


def classify(ex: ExchangeState, true_key: Optional[PublicKey]) -> str:
    if ex.status is Status.ACCEPTED:
        return "valid" if ex.accepted_key == true_key else "corrupted"
    return "failed"


def run_once(config: ScenarioConfig, run: int, trace: bool = False) -> Tuple[RunCounts, List[str]]:
    """One seeded world; returns its counts and (optionally) its trace lines."""
    seed = config.base_seed + run
    setup = build_run(config, seed, trace)
    world, proto = setup.world, setup.protocol
    started: Dict[int, ExchangeState] = {}
    true_key_at_accept: Dict[int, PublicKey] = {}

    def on_accept(node: NodeState, ex: ExchangeState) -> None:
        for i, e in started.items():
            if e is ex:
                true_key_at_accept[i] = setup.nodes[ex.target].keys.public

    proto.on_accept.append(on_accept)

    def start(i: int, s: NodeId, d: NodeId) -> None:
        started[i] = proto.start_exchange(s, d)
        if started[i].status is Status.ACCEPTED:
            true_key_at_accept[i] = setup.nodes[d].keys.public

    for i, ((s, d), t) in enumerate(zip(setup.pairs, setup.start_times)):
        world.schedule_at(t, start, i, s, d)
    world.run(config.sim.duration)

    outcome = {"valid": 0, "corrupted": 0, "failed": 0}
    delays: List[float] = []
    for i in range(len(setup.pairs)):
        ex = started.get(i)
        if ex is None:
            outcome["failed"] += 1
            continue
        kind = classify(ex, true_key_at_accept.get(i))
        outcome[kind] += 1
        if ex.status is Status.ACCEPTED and ex.delay is not None:
            delays.append(ex.delay)
    counts = RunCounts(run, seed, len(setup.pairs), outcome["valid"], outcome["corrupted"],
                       outcome["failed"], tuple(delays))
    lines = list(world.trace.lines()) if trace else []
    return counts, lines


def _run_job(args: Tuple[ScenarioConfig, int, bool]) -> Tuple[RunCounts, List[str]]:
    return run_once(*args)


def _map_runs(jobs: List[Tuple[ScenarioConfig, int, bool]], workers: int) -> List[Tuple[RunCounts, List[str]]]:
    if workers <= 1 or len(jobs) <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def default_workers() -> int:
    return max(1, min(8, os.cpu_count() or 1))


def run_scenario(config: ScenarioConfig, workers: int = 1, trace_sink: Optional[List[str]] = None) -> MetricsRecord:
    """Average ``config.runs`` independent seeds (base_seed + run index)."""
    config.validate()
    jobs = [(config, r, trace_sink is not None) for r in range(config.runs)]
    results = _map_runs(jobs, workers)
    if trace_sink is not None:
        for counts, lines in results:
            trace_sink.append(f'{{"run":{counts.run},"seed":{counts.seed}}}')
            trace_sink.extend(lines)
    return MetricsRecord.from_runs([c for c, _ in results], config.base_seed)


def run_sweep(spec: SweepSpec, workers: int = 1, trace_sink: Optional[List[str]] = None) -> List[Tuple[float, MetricsRecord]]:
    spec.validate()
    configs = [spec.fixed.with_axis(spec.axis, v) for v in spec.values]
    # flatten every (point, run) so a pool stays busy across sweep points
    jobs = [(c, r, trace_sink is not None) for c in configs for r in range(c.runs)]
    results = _map_runs(jobs, workers)
    out: List[Tuple[float, MetricsRecord]] = []
    pos = 0
    for value, cfg in zip(spec.values, configs):
        chunk = results[pos: pos + cfg.runs]
        pos += cfg.runs
        if trace_sink is not None:
            for counts, lines in chunk:
                trace_sink.append(f'{{"axis":"{spec.axis}={_fmt_axis(value)}","run":{counts.run},"seed":{counts.seed}}}')
                trace_sink.extend(lines)
        out.append((value, MetricsRecord.from_runs([c for c, _ in chunk], cfg.base_seed)))
    return out


# -- output -------------------------------------------------------------------------


def _fmt_axis(value: Any) -> str:
    if isinstance(value, str):
        return value
    if float(value) == int(value) and not isinstance(value, float):
        return str(int(value))
    return f"{float(value):g}"


def _fmt_delay(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def csv_text(results: Sequence[Tuple[Any, MetricsRecord]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for value, rec in results:
        w.writerow([
            _fmt_axis(value),
            f"{rec.valid_acceptance_rate:.4f}",
            f"{rec.corrupted_acceptance_rate:.4f}",
            f"{rec.failed_rate:.4f}",
            _fmt_delay(rec.mean_delay),
            rec.runs,
            rec.seed,
        ])
    return buf.getvalue()


def runs_csv_text(results: Sequence[Tuple[Any, MetricsRecord]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUNS_HEADER)
    for value, rec in results:
        for r in rec.per_run:
            w.writerow([_fmt_axis(value), r.run, r.seed, r.requested, r.valid, r.corrupted, r.failed,
                        f"{r.delay_sum:.6f}"])
    return buf.getvalue()


def emit_csv(results: Sequence[Tuple[Any, MetricsRecord]], destination: str | os.PathLike, runs_sidecar: bool = True) -> str:
    """Write the summary CSV (and a ``*.runs.csv`` with per-run counts).

    Raises ``ValueError`` on empty results before touching the filesystem
    and ``OSError`` naming the path when it cannot be written.
    """
    if not results:
        raise ValueError("no results to write")
    path = os.fspath(destination)
    _write(path, csv_text(results))
    if runs_sidecar:
        root, ext = os.path.splitext(path)
        _write(f"{root}.runs{ext or '.csv'}", runs_csv_text(results))
    return path


def _write(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc


def write_trace(lines: Iterable[str], destination: str | os.PathLike) -> None:
    path = os.fspath(destination)
    _write(path, "".join(line + "\n" for line in lines))


# -- config files -------------------------------------------------------------------

_SIM_KEYS = {f.name for f in fields(SimConfig)} - {"area"}
_TRUST_KEYS = {"initial_known", "initial_unknown", "reward_delta", "penalty_delta"}
_PROTOCOL_KEYS = {f.name for f in fields(ProtocolConfig)}
_ATTACKER_KEYS = {"attacker_mode": "mode", "attacker_fraction": "fraction",
                  "drop_replies": "drop_replies", "tamper_replies": "tamper_replies"}
_SCENARIO_KEYS = {"comm_pairs", "runs", "known_nodes", "mpktv"}
_AREA_KEYS = {"area_width", "area_height"}
CONFIG_KEYS = frozenset(_SIM_KEYS | _TRUST_KEYS | _PROTOCOL_KEYS | set(_ATTACKER_KEYS) | _SCENARIO_KEYS
                        | _AREA_KEYS | {"seed"})


def parse_config_text(text: str) -> Dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _parse_bool(s: str) -> bool:
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _parse_optional_float(s: str) -> Optional[float]:
    return None if s.lower() in ("none", "") else float(s)


def scenario_from_mapping(values: Mapping[str, Any], base: ScenarioConfig = ScenarioConfig()) -> ScenarioConfig:
    """Overlay ``values`` (strings or native values) on ``base``."""
    sim_kw: Dict[str, Any] = {}
    trust_kw: Dict[str, Any] = {}
    proto_kw: Dict[str, Any] = {}
    att_kw: Dict[str, Any] = {}
    top_kw: Dict[str, Any] = {}
    area = list(base.sim.area)
    try:
        for key, raw in values.items():
            s = str(raw)
            if key in ("seed", "rng_seed"):
                sim_kw["rng_seed"] = int(s)
            elif key in ("node_count", "mobility_tick") or key in _SIM_KEYS:
                kind = int if key == "node_count" else float
                sim_kw[key] = kind(s)
            elif key == "area_width":
                area[0] = float(s)
            elif key == "area_height":
                area[1] = float(s)
            elif key in _TRUST_KEYS:
                trust_kw[key] = float(s)
            elif key in _PROTOCOL_KEYS:
                if key in ("copy_grace", "rekey_period"):
                    proto_kw[key] = _parse_optional_float(s)
                else:
                    proto_kw[key] = int(s)
            elif key in _ATTACKER_KEYS:
                field_name = _ATTACKER_KEYS[key]
                if field_name == "mode":
                    att_kw["mode"] = AttackerMode(s.lower())
                elif field_name == "fraction":
                    att_kw["fraction"] = float(s)
                else:
                    att_kw[field_name] = _parse_bool(s)
            elif key in ("comm_pairs", "runs", "known_nodes"):
                top_kw[key] = int(s)
            elif key == "mpktv":
                top_kw[key] = float(s)
            else:
                raise ConfigError(f"unknown key {key!r}")
        sim_kw["area"] = (area[0], area[1])
        return replace(
            base,
            sim=replace(base.sim, **sim_kw),
            trust_params=replace(base.trust_params, **trust_kw),
            protocol=replace(base.protocol, **proto_kw),
            attacker=replace(base.attacker, **att_kw),
            **top_kw,
        )
    except (TrustError, ProtocolError) as exc:
        raise ConfigError(str(exc)) from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad value: {exc}") from exc


def load_config(path: str | os.PathLike, base: ScenarioConfig = ScenarioConfig()) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return scenario_from_mapping(parse_config_text(fh.read()), base)


# -- canned figure reproductions ------------------------------------------------------

FRACTIONS = (0.0, 0.1, 0.2, 0.3, 0.4)
MPKTVS = (0.5, 0.6, 0.7, 0.8, 0.9)
KNOWN = (5, 10, 20)


def figure_sweeps(figure: str, base: ScenarioConfig = ScenarioConfig()) -> List[Tuple[str, SweepSpec]]:
    """Named sweeps behind each reproduced figure: ``[(series label, spec), ...]``."""
    iso = replace(base.attacker, mode=AttackerMode.ISOLATED)
    col = replace(base.attacker, mode=AttackerMode.COLLUDING)
    if figure == "3":
        fixed = replace(base, attacker=iso, mpktv=0.5, known_nodes=0)
        return [("fig3", SweepSpec("attacker_fraction", FRACTIONS, fixed))]
    if figure == "4":
        return [
            (f"fig4_mpktv{m:g}",
             SweepSpec("attacker_fraction", FRACTIONS, replace(base, attacker=iso, mpktv=m, known_nodes=20)))
            for m in MPKTVS
        ]
    if figure == "5":
        no_att = replace(iso, fraction=0.0)
        return [
            (f"fig5_known{k}", SweepSpec("mpktv", MPKTVS, replace(base, attacker=no_att, known_nodes=k)))
            for k in KNOWN
        ]
    if figure in ("6a", "6b"):
        m = 0.7 if figure == "6a" else 0.9
        return [
            (f"fig{figure}_known{k}",
             SweepSpec("attacker_fraction", FRACTIONS, replace(base, attacker=col, mpktv=m, known_nodes=k)))
            for k in KNOWN
        ]
    raise ConfigError(f"unknown figure {figure!r}; choose from 3, 4, 5, 6a, 6b")


FIGURES = ("3", "4", "5", "6a", "6b")
