"""
simqnet.py — Discrete-event simulation of a queueing network.

Used as an independent oracle for the analytic solvers in sysmodel. Every
job visits every center once, in the listed order:
    - open workloads:   Poisson arrivals at rate λ, jobs leave after the last center;
    - closed workloads: N jobs cycle forever with an exponential think time Z
                        between passes.

Service times are exponential with mean D_i. FCFS centers serve one job at a
time from a queue, PS centers share the server equally among present jobs,
and delay centers serve every job in parallel.

Random numbers come from numpy's PCG64 generator. One SeedSequence per run
spawns a child per replication and, inside each replication, one stream for
arrivals, one for think times and one per center, so results for a fixed
seed are bit-identical across runs and across worker counts.
"""

from __future__ import annotations

import heapq
import logging
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Optional, Union

import numpy as np
from pydantic import Field, model_validator
from scipy import stats

from spe.errors import NetworkError, SaturationError
from spe.softmodel import ResultModel
from spe.sysmodel import EMPTY_CYCLE, ClosedWorkload, OpenWorkload, QueueingNetwork, SystemMetrics, Workload

logger = logging.getLogger(__name__)

# Fraction of the horizon discarded as warmup when none is given.
DEFAULT_WARMUP_FRACTION = 0.1
CONFIDENCE = 0.95
_BLOCK = 4096


# ── Configuration and results ─────────────────────────────────────────────────

class SimConfig(ResultModel):
    horizon: float = Field(gt=0)
    warmup: float = Field(default=-1.0)
    seed: int = Field(ge=0, lt=2**64)
    replications: int = Field(default=1, ge=1)

    @model_validator(mode="before")
    @classmethod
    def _default_warmup(cls, data):
        if isinstance(data, dict) and data.get("warmup") is None and "horizon" in data:
            data = {**data, "warmup": DEFAULT_WARMUP_FRACTION * float(data["horizon"])}
        return data

    @model_validator(mode="after")
    def _warmup_within_horizon(self) -> "SimConfig":
        if self.warmup < 0:
            raise ValueError("warmup must be non-negative")
        if self.warmup >= self.horizon:
            raise ValueError(f"warmup {self.warmup:g} must be shorter than the horizon {self.horizon:g}")
        return self


class Estimate(ResultModel):
    """Replication mean and the half-width of its 95% confidence interval."""

    mean: float
    half_width95: float = Field(ge=0)


class CenterEstimates(ResultModel):
    utilization: Estimate
    residence_time: Estimate
    queue_length: Estimate


class SimMetrics(ResultModel):
    per_center: dict[str, CenterEstimates]
    system_throughput: Estimate
    system_response_time: Estimate
    completed_jobs: int = Field(ge=0)
    center_completions: dict[str, int]
    config: SimConfig
    workload: Workload


class MetricAgreement(ResultModel):
    metric: str
    analytic: float
    simulated: float
    half_width95: float
    passed: bool


class AgreementReport(ResultModel):
    rel_tol: float
    checks: tuple[MetricAgreement, ...]
    passed: bool


# ── Random streams ────────────────────────────────────────────────────────────

def _exponentials(seed: np.random.SeedSequence) -> Iterator[float]:
    """Unit-mean exponential variates, drawn from PCG64 in blocks."""
    gen = np.random.Generator(np.random.PCG64(seed))
    while True:
        yield from gen.standard_exponential(_BLOCK).tolist()


class _Stream:
    def __init__(self, seed: np.random.SeedSequence) -> None:
        self._draws = _exponentials(seed)

    def exp(self, mean: float) -> float:
        return mean * next(self._draws)


# ── One replication ───────────────────────────────────────────────────────────

_ARRIVAL, _THINK_END, _DEPARTURE, _WARMUP_END = range(4)


class _Center:
    def __init__(self, name: str, demand: float, scheduling: str, stream: _Stream) -> None:
        self.name = name
        self.demand = demand
        self.scheduling = scheduling
        self.stream = stream
        self.queue: deque[int] = deque()
        self.serving: Optional[int] = None
        self.remaining: dict[int, float] = {}
        self.version = 0
        self.arrived: dict[int, float] = {}
        self.reset()

    def reset(self) -> None:
        self.busy_area = 0.0
        self.population_area = 0.0
        self.residence_sum = 0.0
        self.completions = 0

    @property
    def population(self) -> int:
        return len(self.arrived)

    def accumulate(self, dt: float) -> None:
        n = self.population
        if n:
            self.busy_area += dt
            self.population_area += n * dt
            if self.scheduling == "ps":
                share = dt / n
                for job in self.remaining:
                    self.remaining[job] -= share


@dataclass(frozen=True)
class _ReplicationResult:
    utilization: dict[str, float]
    residence_time: dict[str, float]
    queue_length: dict[str, float]
    center_completions: dict[str, int]
    throughput: float
    response_time: float
    completed_jobs: int


class _Replication:
    """Event loop for one replication; events are (time, seq, kind, center, job, version)."""

    def __init__(
        self,
        net: QueueingNetwork,
        w: Union[OpenWorkload, ClosedWorkload],
        cfg: SimConfig,
        seed: np.random.SeedSequence,
    ) -> None:
        streams = seed.spawn(2 + len(net.centers))
        self.arrivals = _Stream(streams[0])
        self.thinking = _Stream(streams[1])
        self.centers = [
            _Center(c.name, c.demand, c.scheduling, _Stream(s))
            for c, s in zip(net.centers, streams[2:])
        ]
        self.workload = w
        self.cfg = cfg
        self.events: list[tuple[float, int, int, int, int, int]] = []
        self.seq = 0
        self.clock = 0.0
        self.next_job = 0
        self.entered: dict[int, float] = {}
        self.response_sum = 0.0
        self.completed = 0

    # ── event list ──

    def _schedule(self, t: float, kind: int, center: int = -1, job: int = -1, version: int = 0) -> None:
        heapq.heappush(self.events, (t, self.seq, kind, center, job, version))
        self.seq += 1

    def _advance(self, now: float) -> None:
        dt = now - self.clock
        if dt > 0:
            for c in self.centers:
                c.accumulate(dt)
        self.clock = now

    # ── centers ──

    def _arrive(self, i: int, job: int) -> None:
        c = self.centers[i]
        c.arrived[job] = self.clock
        if c.scheduling == "delay":
            self._schedule(self.clock + c.stream.exp(c.demand), _DEPARTURE, i, job)
        elif c.scheduling == "ps":
            c.remaining[job] = c.stream.exp(c.demand)
            self._reschedule_ps(i)
        elif c.serving is None:
            self._start(i, job)
        else:
            c.queue.append(job)

    def _start(self, i: int, job: int) -> None:
        c = self.centers[i]
        c.serving = job
        self._schedule(self.clock + c.stream.exp(c.demand), _DEPARTURE, i, job)

    def _reschedule_ps(self, i: int) -> None:
        c = self.centers[i]
        c.version += 1
        if c.remaining:
            job = min(c.remaining, key=lambda j: (c.remaining[j], j))
            finish = self.clock + max(c.remaining[job], 0.0) * len(c.remaining)
            self._schedule(finish, _DEPARTURE, i, job, c.version)

    def _depart(self, i: int, job: int, version: int) -> None:
        c = self.centers[i]
        if c.scheduling == "ps":
            if version != c.version:
                return
            del c.remaining[job]
        c.residence_sum += self.clock - c.arrived.pop(job)
        c.completions += 1
        if c.scheduling == "ps":
            self._reschedule_ps(i)
        elif c.scheduling == "fcfs":
            c.serving = None
            if c.queue:
                self._start(i, c.queue.popleft())

        if i + 1 < len(self.centers):
            self._arrive(i + 1, job)
        else:
            self._finish(job)

    # ── jobs ──

    def _enter(self, job: int) -> None:
        self.entered[job] = self.clock
        self._arrive(0, job)

    def _finish(self, job: int) -> None:
        self.response_sum += self.clock - self.entered.pop(job)
        self.completed += 1
        if isinstance(self.workload, ClosedWorkload):
            self._think(job)

    def _think(self, job: int) -> None:
        if self.workload.think_time > 0:
            self._schedule(self.clock + self.thinking.exp(self.workload.think_time), _THINK_END, job=job)
        else:
            self._enter(job)

    def _new_arrival(self) -> None:
        self._schedule(self.clock + self.arrivals.exp(1.0 / self.workload.arrival_rate), _ARRIVAL)

    def _reset_statistics(self) -> None:
        for c in self.centers:
            c.reset()
        self.response_sum = 0.0
        self.completed = 0

    # ── run ──

    def run(self) -> _ReplicationResult:
        if isinstance(self.workload, OpenWorkload):
            self._new_arrival()
        else:
            for job in range(self.workload.population):
                self._think(job)
            self.next_job = self.workload.population
        if self.cfg.warmup > 0:
            self._schedule(self.cfg.warmup, _WARMUP_END)

        horizon = self.cfg.horizon
        while self.events and self.events[0][0] <= horizon:
            t, _, kind, center, job, version = heapq.heappop(self.events)
            self._advance(t)
            if kind == _DEPARTURE:
                self._depart(center, job, version)
            elif kind == _ARRIVAL:
                job = self.next_job
                self.next_job += 1
                self._enter(job)
                self._new_arrival()
            elif kind == _THINK_END:
                self._enter(job)
            elif kind == _WARMUP_END:
                self._reset_statistics()
        self._advance(horizon)
        return self._result()

    def _result(self) -> _ReplicationResult:
        span = self.cfg.horizon - self.cfg.warmup
        utilization = {}
        for c in self.centers:
            # A delay center never queues; its utilization is the mean number in service.
            area = c.population_area if c.scheduling == "delay" else c.busy_area
            utilization[c.name] = area / span
        if self.completed == 0:
            logger.warning("No job completed after warmup; response time reported as 0")
        return _ReplicationResult(
            utilization=utilization,
            residence_time={c.name: c.residence_sum / c.completions if c.completions else 0.0 for c in self.centers},
            queue_length={c.name: c.population_area / span for c in self.centers},
            center_completions={c.name: c.completions for c in self.centers},
            throughput=self.completed / span,
            response_time=self.response_sum / self.completed if self.completed else 0.0,
            completed_jobs=self.completed,
        )


def _run_replication(
    net: QueueingNetwork,
    w: Union[OpenWorkload, ClosedWorkload],
    cfg: SimConfig,
    seed: np.random.SeedSequence,
) -> _ReplicationResult:
    return _Replication(net, w, cfg, seed).run()


# ── Estimates ─────────────────────────────────────────────────────────────────

def estimate(values: list[float]) -> Estimate:
    """
    Mean of replication values with a Student-t 95% half-width
    (replications − 1 degrees of freedom). One replication gives half-width 0.
    """
    data = np.asarray(values, dtype=float)
    mean = float(data.mean())
    if data.size < 2:
        return Estimate(mean=mean, half_width95=0.0)
    quantile = stats.t.ppf(0.5 + CONFIDENCE / 2, df=data.size - 1)
    half = float(quantile * data.std(ddof=1) / math.sqrt(data.size))
    return Estimate(mean=mean, half_width95=half)


def _check_stable(net: QueueingNetwork, w: Union[OpenWorkload, ClosedWorkload]) -> None:
    if isinstance(w, ClosedWorkload):
        # Every event would fall at t=0 and the clock would never advance.
        if w.think_time + sum(c.demand for c in net.centers) == 0:
            raise NetworkError(EMPTY_CYCLE)
        return
    queueing = [c for c in net.centers if c.queueing]
    if not queueing:
        return
    top = max(queueing, key=lambda c: c.demand)
    u = w.arrival_rate * top.demand
    if u >= 1.0:
        raise SaturationError(top.name, u, 1.0 / top.demand)


# ── Entry points ──────────────────────────────────────────────────────────────

def simulate(
    net: QueueingNetwork,
    w: Union[OpenWorkload, ClosedWorkload],
    cfg: SimConfig,
    workers: Optional[int] = None,
) -> SimMetrics:
    """
    Simulate the network and summarize the replications.

    Args:
        net:     The queueing network.
        w:       Open or closed workload.
        cfg:     Horizon, warmup, seed and replication count.
        workers: Run replications in a process pool of this size. Results are
                 reduced in replication order, so the output does not depend
                 on the worker count.

    Raises:
        SaturationError: If an open workload saturates a queueing center.
        NetworkError:    If a closed workload has zero demand and zero think time.
    """
    _check_stable(net, w)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.replications)
    logger.info(
        "Simulating %d center(s): horizon=%g warmup=%g seed=%d replications=%d",
        len(net.centers), cfg.horizon, cfg.warmup, cfg.seed, cfg.replications,
    )

    if workers and workers > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(
                _run_replication,
                [net] * len(seeds), [w] * len(seeds), [cfg] * len(seeds), seeds,
            ))
    else:
        runs = [_run_replication(net, w, cfg, s) for s in seeds]

    per_center = {
        c.name: CenterEstimates(
            utilization=estimate([r.utilization[c.name] for r in runs]),
            residence_time=estimate([r.residence_time[c.name] for r in runs]),
            queue_length=estimate([r.queue_length[c.name] for r in runs]),
        )
        for c in net.centers
    }
    metrics = SimMetrics(
        per_center=per_center,
        system_throughput=estimate([r.throughput for r in runs]),
        system_response_time=estimate([r.response_time for r in runs]),
        completed_jobs=sum(r.completed_jobs for r in runs),
        center_completions={
            c.name: sum(r.center_completions[c.name] for r in runs) for c in net.centers
        },
        config=cfg,
        workload=w,
    )
    logger.info(
        "Simulation done: X=%g R=%g over %d completed job(s)",
        metrics.system_throughput.mean, metrics.system_response_time.mean, metrics.completed_jobs,
    )
    return metrics


def cross_validate(analytic: SystemMetrics, sim: SimMetrics, rel_tol: float) -> AgreementReport:
    """
    Compare analytic and simulated metrics.

    A metric passes when |analytic − simulated mean| ≤ max(rel_tol × |analytic|,
    half-width of the simulated 95% interval).

    Raises:
        NetworkError: If the two results cover different center sets.
    """
    if set(analytic.per_center) != set(sim.per_center):
        raise NetworkError(
            "analytic and simulated results cover different centers: "
            f"{sorted(analytic.per_center)} vs {sorted(sim.per_center)}"
        )

    checks: list[MetricAgreement] = []

    def check(metric: str, value: float, est: Estimate) -> None:
        allowed = max(rel_tol * abs(value), est.half_width95)
        checks.append(MetricAgreement(
            metric=metric,
            analytic=value,
            simulated=est.mean,
            half_width95=est.half_width95,
            passed=abs(value - est.mean) <= allowed,
        ))

    for name in sorted(analytic.per_center):
        a, s = analytic.per_center[name], sim.per_center[name]
        check(f"{name}.utilization", a.utilization, s.utilization)
        check(f"{name}.residenceTime", a.residence_time, s.residence_time)
        check(f"{name}.queueLength", a.queue_length, s.queue_length)
    check("system.throughput", analytic.system_throughput, sim.system_throughput)
    check("system.responseTime", analytic.system_response_time, sim.system_response_time)

    failed = [c.metric for c in checks if not c.passed]
    if failed:
        logger.warning("Analytic and simulated results disagree on %s", ", ".join(failed))
    return AgreementReport(rel_tol=rel_tol, checks=tuple(checks), passed=not failed)
