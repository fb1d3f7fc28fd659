"""Experiment specifications, presets, runners and deterministic result files."""

from __future__ import annotations

import csv
import hashlib
import json
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ..bcd import BcdSettings, solve
from ..channel import ChannelProcess, sample_channel
from ..config import SystemConfig
from ..objective import mse
from ..tosca import (Timeline, TtsSettings, effective_problem, assemble_state, plateau_frame,
                     run_super_frame, short_timescale_solve)
from .algorithms import ALGORITHMS, run_algorithm
from .link import SerEstimate, binomial_ci, simulate_ser
from .overhead import delay_ratio, feedback_overhead, tts_delay

RESULT_FIELDS = ["algo", "snr_db", "delay_ms", "seed", "mse", "ser", "ci", "iters", "config_hash"]
TIMING_FIELDS = ["algo", "snr_db", "delay_ms", "seed", "wall_ms"]

STATIC_ALGOS = ("fd", "nl-joint", "nl-joint-random-order", "nl-joint-nonrobust", "nl-separate",
                "l-joint", "l-separate", "zf")
DELAY_ALGOS = ("nl-joint", "tts")


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce one experiment.

    ``seeds`` lists the channel seeds; ``symbols`` counts symbol vectors per
    (algorithm, SNR, seed) cell.  Delay and two-timescale presets use
    ``f_d``, ``slot_s``, ``train_frames`` and ``tau_prox``.
    """

    preset: str = "desk"
    system: SystemConfig = field(default_factory=SystemConfig)
    snr_db: tuple = (10.0, 15.0, 20.0)
    seeds: tuple = tuple(range(20))
    symbols: int = 100_000
    algos: tuple = STATIC_ALGOS
    delays_ms: tuple = (0.0,)
    out: str | None = None
    jobs: int = 1
    tol: float = 1e-6
    max_iter: int = 500
    f_d: float = 20.0
    slot_s: float = 1e-4
    frames: int = 500
    train_frames: int = 100
    eval_points: int = 2
    eval_spacing_s: float = 0.01
    tau_prox: float = 0.01

    def __post_init__(self):
        if not self.snr_db:
            raise ValueError("SNR grid must not be empty")
        if self.symbols < 1000:
            raise ValueError("need at least 1000 symbols per point")
        if not self.seeds:
            raise ValueError("need at least one seed")
        unknown = set(self.algos) - set(ALGORITHMS) - {"tts"}
        if unknown:
            raise ValueError(f"unknown algorithms {sorted(unknown)}")

    @property
    def bcd(self) -> BcdSettings:
        return BcdSettings(tol=self.tol, max_iter=self.max_iter)

    @property
    def tts(self) -> TtsSettings:
        return TtsSettings(tau_prox=self.tau_prox)

    def settings_dict(self) -> dict:
        d = asdict(self)
        d.pop("out")
        d.pop("jobs")
        d["system"] = self.system.to_dict()
        return d

    def cell_hash(self, snr_db: float) -> str:
        blob = {"config": self.system.with_snr(snr_db).to_dict(), "settings": self.settings_dict()}
        return hashlib.sha256(json.dumps(blob, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class RunReport:
    """Result rows plus wall-clock timings and auxiliary tables."""

    spec: ExperimentSpec
    rows: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    traces: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    def aggregate(self, key: str = "mse") -> dict:
        """Mean of ``key`` per ``(algo, snr_db, delay_ms)``."""
        acc = defaultdict(list)
        for r in self.rows:
            if r[key] is not None:
                acc[(r["algo"], r["snr_db"], r["delay_ms"])].append(r[key])
        return {k: float(np.mean(v)) for k, v in acc.items()}

    def mean(self, algo: str, key: str = "mse", snr_db=None, delay_ms=None) -> float:
        vals = [r[key] for r in self.rows if r["algo"] == algo
                and (snr_db is None or r["snr_db"] == snr_db)
                and (delay_ms is None or r["delay_ms"] == delay_ms)]
        return float(np.mean(vals))

    def paired(self, algo: str, key: str = "mse", snr_db=None, delay_ms=None) -> np.ndarray:
        """Values of ``algo`` ordered by seed."""
        rows = sorted((r for r in self.rows if r["algo"] == algo
                       and (snr_db is None or r["snr_db"] == snr_db)
                       and (delay_ms is None or r["delay_ms"] == delay_ms)), key=lambda r: r["seed"])
        return np.array([r[key] for r in rows])

    def write(self, out) -> None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "results.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RESULT_FIELDS)
            for r in self.rows:
                w.writerow([_fmt(r[k]) for k in RESULT_FIELDS])
        with open(out / "timing.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TIMING_FIELDS)
            for r in self.timings:
                w.writerow([_fmt(r[k]) for k in TIMING_FIELDS])
        for name, trace in self.traces.items():
            trace.to_csv(out / f"{name}.csv")
        for name, (header, rows) in self.tables.items():
            with open(out / f"{name}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                w.writerows(rows)
        meta = {"preset": self.spec.preset, "config": self.spec.system.to_dict(),
                "settings": self.spec.settings_dict(),
                "config_hash": hashlib.sha256(json.dumps(self.spec.settings_dict(), sort_keys=True)
                                              .encode()).hexdigest()[:16]}
        (out / "run.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _row(algo, snr_db, delay_ms, seed, mse_value, ser, iters, cfg_hash):
    return {"algo": algo, "snr_db": float(snr_db), "delay_ms": float(delay_ms), "seed": int(seed),
            "mse": float(mse_value), "ser": None if ser is None else float(ser.ser),
            "ci": None if ser is None else float(ser.ci), "iters": int(iters), "config_hash": cfg_hash}


def _static_cell(args):
    spec, snr_db, seed = args
    cfg = spec.system.with_snr(snr_db)
    _, cs = sample_channel(cfg, seed)
    rows, timings, traces = [], [], {}
    for algo in spec.algos:
        start = time.perf_counter()
        state, iters = run_algorithm(algo, cfg, cs, seed, spec.bcd)
        ser = simulate_ser(state, cs, cfg.Q, spec.symbols, [seed, 11])
        rows.append(_row(algo, snr_db, 0.0, seed, mse(state, cs), ser, iters, spec.cell_hash(snr_db)))
        timings.append({"algo": algo, "snr_db": float(snr_db), "delay_ms": 0.0, "seed": seed,
                        "wall_ms": round(1e3 * (time.perf_counter() - start), 3)})
    return rows, timings, traces


def _map(fn, cells, jobs):
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, cells))
    return [fn(c) for c in cells]


def run_static(spec: ExperimentSpec) -> RunReport:
    """Every algorithm on every (SNR, seed) channel draw; paired across algorithms."""
    report = RunReport(spec)
    cells = [(spec, snr, seed) for snr in spec.snr_db for seed in spec.seeds]
    for rows, timings, traces in _map(_static_cell, cells, spec.jobs):
        report.rows.extend(rows)
        report.timings.extend(timings)
        report.traces.update(traces)
    return report


def robust_vs_nonrobust(spec: ExperimentSpec) -> RunReport:
    """Paired robust and non-robust designs; ``tables['gap']`` holds mean SER gaps per SNR."""
    report = run_static(replace(spec, algos=("nl-joint", "nl-joint-nonrobust")))
    gap_rows = []
    for snr in spec.snr_db:
        gap = report.mean("nl-joint-nonrobust", "ser", snr) - report.mean("nl-joint", "ser", snr)
        gap_rows.append([repr(float(snr)), repr(gap)])
    report.tables["gap"] = (["snr_db", "ser_gap"], gap_rows)
    return report


def _convergence_cell(args):
    spec, snr_db, seed = args
    cfg = spec.system.with_snr(snr_db)
    _, cs = sample_channel(cfg, seed)
    start = time.perf_counter()
    state, trace = solve(cfg, cs, settings=spec.bcd)
    ser = simulate_ser(state, cs, cfg.Q, spec.symbols, [seed, 11])
    row = _row("nl-joint", snr_db, 0.0, seed, mse(state, cs), ser, trace.iterations,
               spec.cell_hash(snr_db))
    timing = {"algo": "nl-joint", "snr_db": float(snr_db), "delay_ms": 0.0, "seed": seed,
              "wall_ms": round(1e3 * (time.perf_counter() - start), 3)}
    return [row], [timing], {f"trace_snr{snr_db:g}_seed{seed}": trace}


def run_convergence(spec: ExperimentSpec) -> RunReport:
    report = RunReport(spec)
    cells = [(spec, snr, seed) for snr in spec.snr_db for seed in spec.seeds]
    for rows, timings, traces in _map(_convergence_cell, cells, spec.jobs):
        report.rows.extend(rows)
        report.timings.extend(timings)
        report.traces.update(traces)
    return report


def _tts_convergence_cell(args):
    spec, snr_db, seed = args
    cfg = spec.system.with_snr(snr_db)
    start = time.perf_counter()
    rep = run_super_frame(cfg, Timeline(T_f=spec.frames, T_s=1, slot_s=spec.slot_s),
                          ChannelProcess(cfg, seed, 0.0), spec.tts)
    obj = rep.objective
    plateau = plateau_frame(obj)
    row = {"algo": "tts", "snr_db": float(snr_db), "delay_ms": 0.0, "seed": int(seed),
           "mse": float(obj[-50:].mean()), "ser": None, "ci": None,
           "iters": int(plateau if plateau is not None else -1), "config_hash": spec.cell_hash(snr_db)}
    timing = {"algo": "tts", "snr_db": float(snr_db), "delay_ms": 0.0, "seed": seed,
              "wall_ms": round(1e3 * (time.perf_counter() - start), 3)}
    return [row], [timing], {f"frames_snr{snr_db:g}_seed{seed}": rep}


def run_tts_convergence(spec: ExperimentSpec) -> RunReport:
    """Two-timescale runs on a static channel; ``iters`` is the plateau frame (-1: none)."""
    report = RunReport(spec)
    cells = [(spec, snr, seed) for snr in spec.snr_db for seed in spec.seeds]
    for rows, timings, traces in _map(_tts_convergence_cell, cells, spec.jobs):
        report.rows.extend(rows)
        report.timings.extend(timings)
        report.traces.update(traces)
    return report


def _delay_cell(args):
    """All delays and both designs on one seed and SNR with common random numbers."""
    spec, snr_db, seed = args
    cfg = spec.system.with_snr(snr_db)
    process = ChannelProcess(cfg, seed, spec.f_d)
    rows, timings = [], []
    cfg_hash = spec.cell_hash(snr_db)

    trained = None
    if "tts" in spec.algos:
        start = time.perf_counter()
        trained = run_super_frame(cfg, Timeline(T_f=spec.train_frames, T_s=1, slot_s=spec.slot_s),
                                  process, spec.tts)
        train_ms = 1e3 * (time.perf_counter() - start)

    t0 = spec.train_frames * spec.slot_s + max(spec.delays_ms) * 1e-3
    for delay_ms in spec.delays_ms:
        tau = delay_ms * 1e-3
        for algo in spec.algos:
            start = time.perf_counter()
            mses, errors, total, iters = [], 0, 0, 0
            for k in range(spec.eval_points):
                now = t0 + k * spec.eval_spacing_s
                truth = process.truth_set(now)
                if algo == "tts":
                    cs = process.observe(now, lag=tts_delay(tau, cfg), key=(3, k))
                    dp = effective_problem(trained.tts, cs, cfg.P_t, trained.L)
                    sol = short_timescale_solve(dp, cs.sigma, cfg.D_m, spec.tts.digital)
                    state = assemble_state(trained.tts, sol, trained.L)
                    iters += sol.iterations
                else:
                    cs = process.observe(now, lag=tau, key=(3, k))
                    state, it = run_algorithm(algo, cfg, cs, seed, spec.bcd)
                    iters += it
                est = simulate_ser(state, truth, cfg.Q, spec.symbols, [seed, 5, k])
                errors += est.errors
                total += est.symbols
                mses.append(mse(state, truth))
            ser = errors / total
            pooled = SerEstimate(ser=ser, ci=binomial_ci(ser, total), errors=errors, symbols=total)
            rows.append(_row(algo, snr_db, delay_ms, seed, float(np.mean(mses)), pooled,
                             iters, cfg_hash))
            wall = 1e3 * (time.perf_counter() - start)
            if algo == "tts" and delay_ms == spec.delays_ms[0]:
                wall += train_ms
            timings.append({"algo": algo, "snr_db": float(snr_db), "delay_ms": float(delay_ms),
                            "seed": seed, "wall_ms": round(wall, 3)})
    return rows, timings, {}


def delay_sweep(spec: ExperimentSpec) -> RunReport:
    """SER and true-channel MSE versus CSI delay for single- and two-timescale designs.

    The single-timescale design is solved on full CSI ``tau`` old; the
    two-timescale design keeps analog phases trained on the channel process
    and re-solves its digital part on effective CSI ``tau / delay_ratio`` old.
    Both are evaluated on the channel in force at use time.
    """
    report = RunReport(spec)
    cells = [(spec, snr, seed) for snr in spec.snr_db for seed in spec.seeds]
    for rows, timings, _ in _map(_delay_cell, cells, spec.jobs):
        report.rows.extend(rows)
        report.timings.extend(timings)
    return report


def overhead_table(spec: ExperimentSpec) -> RunReport:
    report = RunReport(spec)
    rows = []
    for name, cfg in (("paper", SystemConfig.paper()), ("desk", spec.system)):
        for T_s in (1, 5, 10, 20):
            tl = Timeline(T_f=1000, T_s=T_s)
            rows.append([name, tl.T_f, T_s, feedback_overhead(tl, cfg, "single"),
                         feedback_overhead(tl, cfg, "two-timescale"), str(delay_ratio(cfg))])
    report.tables["overhead"] = (["config", "T_f", "T_s", "single", "two_timescale", "delay_ratio"], rows)
    return report


PRESETS = {
    "fig3": dict(runner=run_convergence, snr_db=(20.0,), seeds=tuple(range(5)), symbols=10_000,
                 algos=("nl-joint",)),
    "fig4": dict(runner=run_static),
    "fig5": dict(runner=run_static, symbols=10_000),
    "fig6": dict(runner=run_tts_convergence, snr_db=(20.0,), seeds=tuple(range(3)), algos=("tts",)),
    "fig7": dict(runner=overhead_table, algos=()),
    "fig8": dict(runner=delay_sweep, snr_db=(10.0, 15.0, 20.0), algos=DELAY_ALGOS, delays_ms=(5.0,),
                 seeds=tuple(range(10)), symbols=20_000),
    "fig9": dict(runner=delay_sweep, snr_db=(20.0,), algos=DELAY_ALGOS,
                 delays_ms=(0.0, 1.0, 2.0, 3.0, 4.0, 5.0), seeds=tuple(range(10)), symbols=20_000),
    "robust": dict(runner=robust_vs_nonrobust, algos=("nl-joint", "nl-joint-nonrobust")),
    "desk": dict(runner=run_static),
    "paper": dict(runner=run_static, system="paper", seeds=tuple(range(5)), symbols=10_000),
}


def make_spec(preset: str, **overrides) -> ExperimentSpec:
    """Preset defaults with ``overrides`` applied; ``system`` may be a dict of config fields."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    base = {k: v for k, v in PRESETS[preset].items() if k != "runner"}
    system = base.pop("system", None)
    sys_over = overrides.pop("system", None) or {}
    if system == "paper":
        system = SystemConfig.paper(**sys_over)
    else:
        system = SystemConfig(**sys_over)
    base.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("snr_db", "seeds", "algos", "delays_ms"):
        if key in base:
            base[key] = tuple(base[key])
    return ExperimentSpec(preset=preset, system=system, **base)


def run_preset(spec: ExperimentSpec) -> RunReport:
    """Run the preset's experiment and write its files when ``spec.out`` is set."""
    report = PRESETS[spec.preset]["runner"](spec)
    if spec.out:
        report.write(spec.out)
    return report


__all__ = ["ExperimentSpec", "PRESETS", "RunReport", "delay_sweep", "make_spec", "overhead_table",
           "robust_vs_nonrobust", "run_convergence", "run_preset", "run_static", "run_tts_convergence"]
