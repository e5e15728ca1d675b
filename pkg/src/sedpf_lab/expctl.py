"""Experiment controller: spec files, sweeps, seed fan-out and CSV output.

An experiment is a base simulator configuration, a set of sweep axes and a
list of seeds.  Every (grid point, seed) pair is one independent run; runs
are dispatched to a process pool and merged back in grid order, so the CSVs
do not depend on scheduling.  Axis names are dotted paths into the
configuration (``tau``, ``channels.1.erasure``, list indices from 0, so
that one is the second path's erasure rate); the special axis
``variant`` takes mappings of several overrides at once plus a ``label``.
"""

from __future__ import annotations

import copy
import csv
import io
import itertools
import json
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml
from scipy import stats

from . import netsim, scheduler, sprocess

SCHEMA_VERSION = 1
RESULTS_TAG = f"# sedpf-lab results v{SCHEMA_VERSION}"
SUMMARY_TAG = f"# sedpf-lab summary v{SCHEMA_VERSION}"
SGRID_TAG = f"# sedpf-lab sgrid v{SCHEMA_VERSION}"
VALIDATION_TAG = f"# sedpf-lab validation v{SCHEMA_VERSION}"
SCENARIOS = ("fig2", "fig6", "fig7a", "fig7b", "custom")
DEFAULT_SEEDS = (1, 2, 3, 4, 5)
CONFIDENCE = 0.95

# metric columns of a results row, in output order
METRIC_COLUMNS = (
    "mean_delay", "median_delay", "q1_delay", "q3_delay", "whisker_lo_delay", "whisker_hi_delay",
    "p95_delay", "mean_buffering", "median_buffering", "q3_buffering", "p95_buffering",
    "goodput", "raw_throughput", "delivered", "undelivered", "sent_info", "sent_coded",
    "sent_retx", "spurious_retx", "erased", "recovered_by_code", "idle_slots", "frame_counts",
    "eps_bar", "bound_stmt", "bound_proof",
)
SUMMARY_METRICS = ("mean_delay", "mean_buffering", "goodput", "raw_throughput")


class SpecError(ValueError):
    """Malformed experiment, scenario or grid description."""


# --- spec -----------------------------------------------------------------------

@dataclass
class ExperimentSpec:
    name: str
    base: dict[str, Any]
    sweep: dict[str, list] = field(default_factory=dict)
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    outputs: str = "results"
    scenario: str = "custom"
    bounds: bool = False
    traces: bool = False
    workers: int | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise SpecError(f"unknown scenario {self.scenario!r}")
        if not self.seeds:
            raise SpecError("need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise SpecError("seeds must be distinct")
        if not self.name or any(c in self.name for c in "/\\"):
            raise SpecError("name must be a plain file stem")
        for axis, values in self.sweep.items():
            if not isinstance(values, list) or not values:
                raise SpecError(f"sweep axis {axis!r} needs a non-empty list")
            if axis == "variant":
                for v in values:
                    if not isinstance(v, dict) or "label" not in v:
                        raise SpecError("variant values must be mappings with a label")
                    for k in v:
                        if k != "label":
                            _check_path(self.base, k)
            else:
                _check_path(self.base, axis)
        # fail early on a base config the simulator would reject
        for point in self.grid():
            try:
                netsim.SimConfig(**point_config(self.base, point, self.seeds[0]))
            except (TypeError, ValueError) as exc:
                raise SpecError(f"invalid config at {point}: {exc}") from None

    def grid(self) -> list[dict[str, Any]]:
        """Cartesian product of the axes, last axis fastest."""
        axes = list(self.sweep)
        return [dict(zip(axes, combo)) for combo in itertools.product(*(self.sweep[a] for a in axes))]

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name, "scenario": self.scenario, "base": self.base, "sweep": self.sweep,
            "seeds": self.seeds, "outputs": self.outputs, "bounds": self.bounds,
            "traces": self.traces, "workers": self.workers,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _split(path: str) -> list[str | int]:
    return [int(p) if p.isdigit() else p for p in path.split(".")]


def _check_path(base: dict, path: str) -> None:
    node: Any = base
    for key in _split(path):
        try:
            node = node[key]
        except (KeyError, IndexError, TypeError):
            if isinstance(node, dict) and isinstance(key, str) and key in _CONFIG_FIELDS | _CHANNEL_FIELDS:
                return  # a field left at its default
            raise SpecError(f"sweep axis {path!r} does not name a config field") from None


_CONFIG_FIELDS = set(netsim.SimConfig.__dataclass_fields__)
_CHANNEL_FIELDS = set(netsim.ChannelSpec.__dataclass_fields__)


def _set(cfg: dict, path: str, value) -> None:
    keys = _split(path)
    node = cfg
    for key in keys[:-1]:
        node = node[key]
    node[keys[-1]] = value


def point_config(base: dict, point: dict[str, Any], seed: int) -> dict[str, Any]:
    """Keyword arguments for ``SimConfig`` at one grid point and seed."""
    cfg = copy.deepcopy(base)
    for axis, value in point.items():
        if axis == "variant":
            for k, v in value.items():
                if k != "label":
                    _set(cfg, k, v)
        else:
            _set(cfg, axis, value)
    cfg["seed"] = seed
    return cfg


def load_spec(path: str | Path) -> ExperimentSpec:
    """Read a YAML (or JSON) experiment file.

    A known ``scenario`` tag supplies the defaults; keys in the file override
    them, with ``base`` merged key by key.
    """
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise SpecError(f"cannot parse {path}: {exc}") from None
    if not isinstance(data, dict):
        raise SpecError("spec file must hold a mapping")
    return spec_from_dict(data)


def spec_from_dict(data: dict[str, Any]) -> ExperimentSpec:
    known = {"name", "scenario", "base", "sweep", "seeds", "outputs", "bounds", "traces", "workers"}
    extra = set(data) - known
    if extra:
        raise SpecError(f"unknown spec keys: {sorted(extra)}")
    tag = data.get("scenario", "custom")
    if tag != "custom":
        spec = scenario(tag)
        merged = spec.to_dict()
        merged["base"] = {**merged["base"], **data.get("base", {})}
        for k in ("name", "sweep", "seeds", "outputs", "bounds", "traces", "workers"):
            if k in data:
                merged[k] = data[k]
        data = merged
    if "base" not in data:
        raise SpecError("custom experiments need a base config")
    try:
        return ExperimentSpec(
            name=str(data.get("name", "experiment")),
            base=data["base"],
            sweep=data.get("sweep") or {},
            seeds=list(data.get("seeds", DEFAULT_SEEDS)),
            outputs=str(data.get("outputs", "results")),
            scenario=tag,
            bounds=bool(data.get("bounds", False)),
            traces=bool(data.get("traces", False)),
            workers=data.get("workers"),
        )
    except SpecError:
        raise
    except (TypeError, ValueError) as exc:
        raise SpecError(str(exc)) from None


# --- scenarios --------------------------------------------------------------------

def _link(path_id: int, **kw) -> dict[str, Any]:
    # 10 Mb/s with 1250-byte packets is one packet per millisecond
    return {"path_id": path_id, "slot_duration": 0.001, "base_delay": 0.05, **kw}


def scenario(tag: str, seeds: Sequence[int] | None = None, packets: int | None = None) -> ExperimentSpec:
    """Canned experiment for ``tag``."""
    if tag not in SCENARIOS:
        raise SpecError(f"unknown scenario {tag!r}; expected one of {SCENARIOS}")
    seeds = list(seeds) if seeds is not None else list(DEFAULT_SEEDS)
    if tag == "fig2":
        # equal 50 ms means, one path jittery; the source leaves spare slots
        base = {"channels": [_link(1, delay_std=0.01), _link(2)], "source_rate": 1500.0,
                "packets": 3000, "estimate": "nominal"}
        spec = ExperimentSpec("fig2", base, {"selector": ["sedpf", "edpf"]}, seeds, scenario=tag)
    elif tag == "fig6":
        e1 = 0.1
        base = {"channels": [_link(1, erasure=e1), _link(2)], "selector": "sedpf",
                "packets": 10000, "estimate": "nominal"}
        sweep = {"tau": [2, 4, 6, 8],
                 "channels.1.erasure": [round(f * e1, 12) for f in (0, 0.2, 0.4, 0.6, 0.8, 1.0)]}
        spec = ExperimentSpec("fig6", base, sweep, seeds, scenario=tag, bounds=True)
    elif tag in ("fig7a", "fig7b"):
        e2 = 0.0 if tag == "fig7a" else 0.1
        base = {"channels": [_link(1, erasure=0.1), _link(2, erasure=e2)], "packets": 20000,
                "estimate": "nominal"}
        variants = [{"label": "ARQ-EDPF", "selector": "edpf", "tau": 0, "arq": True}]
        variants += [{"label": f"S-EDPF-{t}", "selector": "sedpf", "tau": t, "arq": False} for t in (4, 8, 16)]
        spec = ExperimentSpec(tag, base, {"variant": variants}, seeds, scenario=tag)
    else:
        base = {"channels": [_link(1), _link(2)]}
        spec = ExperimentSpec("custom", base, {}, seeds, scenario=tag)
    if packets is not None:
        spec.base["packets"] = packets
    return spec


# --- running ----------------------------------------------------------------------

@dataclass
class ResultRow:
    point: int
    params: dict[str, Any]
    seed: int
    metrics: dict[str, Any]

    def cells(self, axes: Sequence[str]) -> list[str]:
        return ([str(self.point)] + [_fmt(_param_cell(self.params[a])) for a in axes]
                + [str(self.seed)] + [_fmt(self.metrics[c]) for c in METRIC_COLUMNS])


def _param_cell(v):
    return v["label"] if isinstance(v, dict) else v


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _frame_layout(frames: list[tuple[int, ...]]) -> tuple[int, ...] | None:
    if not frames:
        return None
    # most common layout; first seen wins a tie
    return Counter(frames).most_common(1)[0][0]


def bound_values(cfg: netsim.SimConfig, counts: tuple[int, ...] | None) -> tuple[float, float, float]:
    """``(eps_bar, statement, proof)`` for a coded run; nan when the run has
    no frames and inf when the S-process has no finite moments."""
    if not cfg.tau or counts is None:
        return math.nan, math.nan, math.nan
    eps = tuple(c.erasure for c in cfg.channels)
    pc = sprocess.lossiest_path(eps) if cfg.coded_path == "auto" else int(cfg.coded_path)
    spec = sprocess.SProcessSpec(cfg.tau, counts, eps, coded_path=pc)
    try:
        b = sprocess.delay_bound(spec, [c.slot_duration for c in cfg.channels])
    except sprocess.DivergenceError:
        return spec.eps_bar, math.inf, math.inf
    return spec.eps_bar, b.statement, b.proof


def _run_one(job: tuple[int, dict, dict, int, bool, bool]) -> tuple[dict[str, Any], str | None]:
    point, params, kwargs, seed, with_bounds, trace = job
    cfg = netsim.SimConfig(**{**kwargs, "trace": trace})
    m = netsim.run(cfg)
    box, bbox = m.box("in_order"), m.box("buffering")
    layout = _frame_layout(m.frame_counts)
    eps_bar, stmt, proof = bound_values(cfg, layout) if with_bounds else (math.nan,) * 3
    metrics = {
        "mean_delay": m.mean_delay, "median_delay": box["median"], "q1_delay": box["q1"],
        "q3_delay": box["q3"], "whisker_lo_delay": box["whisker_lo"], "whisker_hi_delay": box["whisker_hi"],
        "p95_delay": box["p95"], "mean_buffering": m.mean_buffering, "median_buffering": bbox["median"],
        "q3_buffering": bbox["q3"], "p95_buffering": bbox["p95"], "goodput": m.goodput,
        "raw_throughput": m.raw_throughput, "delivered": m.delivered, "undelivered": m.undelivered,
        "sent_info": m.sent_info, "sent_coded": m.sent_coded, "sent_retx": m.sent_retx,
        "spurious_retx": m.spurious_retx, "erased": m.erased, "recovered_by_code": m.recovered_by_code,
        "idle_slots": m.idle_slots, "frame_counts": ";".join(map(str, layout)) if layout else "",
        "eps_bar": eps_bar, "bound_stmt": stmt, "bound_proof": proof,
    }
    return metrics, (m.trace_csv() if trace else None)


def _jobs(spec: ExperimentSpec) -> list[tuple]:
    jobs = []
    for i, point in enumerate(spec.grid()):
        for seed in spec.seeds:
            jobs.append((i, point, point_config(spec.base, point, seed), seed, spec.bounds, spec.traces))
    return jobs


def collect(spec: ExperimentSpec, workers: int | None = None) -> tuple[list[ResultRow], list[str | None]]:
    """Run every (grid point, seed); rows come back in grid order."""
    jobs = _jobs(spec)
    n = workers or spec.workers or os.cpu_count() or 1
    if n <= 1 or len(jobs) <= 1:
        out = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            out = list(pool.map(_run_one, jobs))  # map keeps submission order
    rows = [ResultRow(j[0], j[1], j[3], m) for j, (m, _) in zip(jobs, out)]
    return rows, [t for _, t in out]


def results_csv(spec: ExperimentSpec, rows: Sequence[ResultRow]) -> str:
    axes = list(spec.sweep)
    buf = io.StringIO()
    buf.write(f"{RESULTS_TAG} experiment={spec.name} scenario={spec.scenario}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["point", *axes, "seed", *METRIC_COLUMNS])
    for r in rows:
        w.writerow(r.cells(axes))
    return buf.getvalue()


def mean_se(values: Sequence[float]) -> tuple[float, float]:
    """Sample mean and standard error ``s / sqrt(n)`` (nan below two values)."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n == 0:
        return math.nan, math.nan
    mean = float(np.mean(x))
    if n < 2:
        return mean, math.nan
    return mean, float(np.std(x, ddof=1) / math.sqrt(n))


def summary_csv(spec: ExperimentSpec, rows: Sequence[ResultRow]) -> str:
    axes = list(spec.sweep)
    buf = io.StringIO()
    buf.write(f"{SUMMARY_TAG} experiment={spec.name} scenario={spec.scenario}\n")
    w = csv.writer(buf, lineterminator="\n")
    head = ["point", *axes, "n"]
    for m in SUMMARY_METRICS:
        head += [m, f"{m}_se"]
    head += ["frame_counts", "eps_bar", "bound_stmt", "bound_proof"]
    w.writerow(head)
    for point, group in itertools.groupby(rows, key=lambda r: r.point):
        group = list(group)
        first = group[0]
        line = [str(point)] + [_fmt(_param_cell(first.params[a])) for a in axes] + [str(len(group))]
        for m in SUMMARY_METRICS:
            line += [_fmt(v) for v in mean_se([r.metrics[m] for r in group])]
        line += [_fmt(first.metrics[c]) for c in ("frame_counts", "eps_bar", "bound_stmt", "bound_proof")]
        w.writerow(line)
    return buf.getvalue()


@dataclass
class ExperimentOutput:
    results: Path
    summary: Path
    rows: list[ResultRow]
    traces: list[Path]


def run_experiment(spec: ExperimentSpec, out_dir: str | Path | None = None,
                   workers: int | None = None) -> ExperimentOutput:
    """Execute the sweep and write ``<name>_results.csv`` and ``<name>_summary.csv``."""
    rows, traces = collect(spec, workers)
    out = Path(out_dir if out_dir is not None else spec.outputs)
    try:
        out.mkdir(parents=True, exist_ok=True)
        res = out / f"{spec.name}_results.csv"
        summ = out / f"{spec.name}_summary.csv"
        res.write_text(results_csv(spec, rows))
        summ.write_text(summary_csv(spec, rows))
        written = []
        for r, t in zip(rows, traces):
            if t is not None:
                p = out / "traces" / f"{spec.name}_p{r.point}_s{r.seed}.csv"
                p.parent.mkdir(exist_ok=True)
                p.write_text(t)
                written.append(p)
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc}") from exc
    return ExperimentOutput(res, summ, rows, written)


# --- bound validation -------------------------------------------------------------

@dataclass(frozen=True)
class BoundCheck:
    point: int
    params: dict[str, str]
    n: int
    sim_mean: float
    sim_upper: float
    bound: float
    bound_proof: float
    divergent: bool
    passed: bool | None  # None: excluded
    tightness: float
    proof_passed: bool | None


@dataclass
class BoundReport:
    checks: list[BoundCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)

    def failures(self) -> list[BoundCheck]:
        return [c for c in self.checks if c.passed is False]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(VALIDATION_TAG + "\n")
        w = csv.writer(buf, lineterminator="\n")
        keys = list(self.checks[0].params) if self.checks else []
        w.writerow(["point", *keys, "n", "sim_mean", "sim_upper95", "bound_stmt", "bound_proof",
                    "status", "tightness", "proof_status"])
        for c in self.checks:
            w.writerow([c.point, *(c.params[k] for k in keys), c.n, _fmt(c.sim_mean), _fmt(c.sim_upper),
                        _fmt(c.bound), _fmt(c.bound_proof), _status(c.passed), _fmt(c.tightness),
                        _status(c.proof_passed)])
        return buf.getvalue()


def _status(flag: bool | None) -> str:
    return "excluded" if flag is None else ("pass" if flag else "fail")


def upper_confidence(values: Sequence[float], level: float = CONFIDENCE) -> float:
    """One-sided upper Student-t confidence limit of the mean."""
    mean, se = mean_se(values)
    if len(values) < 2:
        return mean
    if se == 0:
        return mean
    return mean + float(stats.t.ppf(level, len(values) - 1)) * se


def read_results(path: str | Path) -> tuple[list[str], list[dict[str, str]]]:
    """Parse a results CSV; checks the version line and the header."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# sedpf-lab results v"):
        raise SpecError("missing results version line")
    version = lines[0].split()[3]
    if version != f"v{SCHEMA_VERSION}":
        raise SpecError(f"unsupported results schema {version}")
    reader = csv.DictReader(lines[1:])
    header = reader.fieldnames or []
    need = {"point", "seed", "mean_buffering", "bound_stmt", "bound_proof"}
    if not need <= set(header):
        raise SpecError(f"results header lacks {sorted(need - set(header))}")
    rows = list(reader)
    return header, rows


def validate_bounds(rows: Sequence[dict[str, str]], axes: Sequence[str] = (),
                    level: float = CONFIDENCE, slack: float = 1e-12) -> BoundReport:
    """Compare the mean buffering delay with the bound at every grid point.

    A point passes when the one-sided upper confidence limit of the
    simulated mean lies at or below the statement bound.  Points whose
    bound diverges are excluded; so are uncoded points (no bound).
    """
    checks = []
    for point, group in itertools.groupby(rows, key=lambda r: int(r["point"])):
        group = list(group)
        sims = [float(r["mean_buffering"]) for r in group]
        stmt, proof = float(group[0]["bound_stmt"]), float(group[0]["bound_proof"])
        mean = float(np.mean(sims))
        upper = upper_confidence(sims, level)
        divergent = math.isinf(stmt)
        params = {a: group[0][a] for a in axes}
        if math.isnan(stmt) or divergent:
            checks.append(BoundCheck(point, params, len(sims), mean, upper, stmt, proof, divergent,
                                     None, math.nan, None))
            continue
        ok = upper <= stmt + slack
        ok_proof = upper <= proof + slack
        tight = stmt / mean if mean > 0 else (1.0 if stmt == 0 else math.inf)
        checks.append(BoundCheck(point, params, len(sims), mean, upper, stmt, proof, False, ok, tight, ok_proof))
    return BoundReport(checks)


def validate_file(path: str | Path) -> BoundReport:
    header, rows = read_results(path)
    axes = header[1 : header.index("seed")]
    return validate_bounds(rows, axes)


# --- analytic grid ----------------------------------------------------------------

@dataclass
class GridSpec:
    taus: list[int]
    eps: list[list[float]]
    slot_durations: list[float] | None = None
    coded_path: str | int = "auto"
    mc_packets: int = 5000
    mc_seed: int = 1
    base_delay: float = 0.05

    def __post_init__(self):
        if not self.taus or any(t < 2 for t in self.taus):
            raise SpecError("taus must be a non-empty list of values >= 2")
        if not self.eps:
            raise SpecError("eps must list at least one erasure vector")
        widths = {len(e) for e in self.eps}
        if len(widths) != 1:
            raise SpecError("all erasure vectors need the same number of paths")
        P = widths.pop()
        if self.slot_durations is None:
            self.slot_durations = [0.001] * P
        if len(self.slot_durations) != P:
            raise SpecError("one slot duration per path")
        if self.mc_packets < 0:
            raise SpecError("mc_packets must be >= 0")

    @property
    def paths(self) -> int:
        return len(self.eps[0])


def load_grid(path: str | Path) -> GridSpec:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise SpecError(f"cannot parse {path}: {exc}") from None
    if not isinstance(data, dict):
        raise SpecError("grid file must hold a mapping")
    try:
        return GridSpec(
            taus=[int(t) for t in data["tau"]],
            eps=[[float(x) for x in e] for e in data["eps"]],
            slot_durations=data.get("slot_durations"),
            coded_path=data.get("coded_path", "auto"),
            mc_packets=int(data.get("mc_packets", 5000)),
            mc_seed=int(data.get("mc_seed", 1)),
            base_delay=float(data.get("base_delay", 0.05)),
        )
    except KeyError as exc:
        raise SpecError(f"grid file lacks {exc}") from None
    except (TypeError, ValueError) as exc:
        raise SpecError(str(exc)) from None


def frame_layout(tau: int, slot_durations: Sequence[float], coded_path: int) -> tuple[int, ...]:
    """Slots per path in one frame, as the simulator lays it out from rest."""
    models = [netsim.ChannelSpec(i + 1, T).nominal_model() for i, T in enumerate(slot_durations)]
    return tuple(scheduler.frame_quota(scheduler.ScheduleState(models), tau, coded_path))


def sgrid_rows(grid: GridSpec) -> list[list[str]]:
    rows = []
    for tau in grid.taus:
        for eps in grid.eps:
            pc = sprocess.lossiest_path(eps) if grid.coded_path == "auto" else int(grid.coded_path)
            counts = frame_layout(tau, grid.slot_durations, pc)
            spec = sprocess.SProcessSpec(tau, counts, tuple(eps), coded_path=pc)
            p0, p1 = sprocess.p_s(spec, 0), sprocess.p_s(spec, 1)
            try:
                b = sprocess.delay_bound(spec, grid.slot_durations)
                es, es2, stmt, proof = b.mean_s, b.second_s, b.statement, b.proof
                stable = True
            except sprocess.DivergenceError:
                es = es2 = stmt = proof = math.inf
                stable = False
            mc = math.nan
            if stable and grid.mc_packets:
                chans = [netsim.ChannelSpec(i + 1, T, grid.base_delay, erasure=e)
                         for i, (T, e) in enumerate(zip(grid.slot_durations, eps))]
                cfg = netsim.SimConfig(chans, tau=tau, packets=grid.mc_packets, seed=grid.mc_seed,
                                       estimate="nominal", coded_path=pc)
                mc = netsim.run(cfg).mean_buffering
            rows.append([str(tau), *(_fmt(float(e)) for e in eps),
                         *(_fmt(v) for v in (p0, p1, es, es2, stmt, proof, mc))])
    return rows


def sgrid_csv(grid: GridSpec) -> str:
    buf = io.StringIO()
    buf.write(SGRID_TAG + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tau", *(f"eps{i + 1}" for i in range(grid.paths)),
                "p_s0", "p_s1", "E_S", "E_S2", "bound_stmt", "bound_proof", "mc_mean_delay"])
    w.writerows(sgrid_rows(grid))
    return buf.getvalue()
