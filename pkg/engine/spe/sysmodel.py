"""
sysmodel.py — The system execution model: a single-class queueing network
built from software-model demands and the deployment model.

Responsibilities:
    - build_network: one service center per deployed device, demand scaled
      by the device speed factor.
    - solve_open: product-form open solution for an arrival rate λ.
    - solve_closed / mva_trace: exact Mean Value Analysis for N jobs with
      think time Z.
    - bottleneck_report, what_if and the deployment back-annotation.

FCFS and PS centers share the product-form formulas; scheduling only
matters to the simulator.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Annotated, Literal, Optional, Union

from pydantic import Field, model_validator

from spe.errors import NetworkError, SaturationError
from spe.scenario_ir import DeploymentModel, Device
from spe.softmodel import DemandVector, ResultModel

logger = logging.getLogger(__name__)

EMPTY_CYCLE = "a closed network needs positive total demand or think time"


# ── Network and workload types ────────────────────────────────────────────────

class ServiceCenter(ResultModel):
    name: str
    kind: Literal["queueing", "delay"] = "queueing"
    scheduling: Literal["fcfs", "ps", "delay"] = "fcfs"
    demand: float = Field(ge=0)

    @model_validator(mode="after")
    def _delay_consistency(self) -> "ServiceCenter":
        if self.kind == "delay" and self.scheduling != "delay":
            raise ValueError(f"delay center {self.name!r} must use delay scheduling")
        if self.scheduling == "delay" and self.kind != "delay":
            raise ValueError(f"center {self.name!r} with delay scheduling must be a delay center")
        return self

    @property
    def queueing(self) -> bool:
        return self.kind == "queueing"


class QueueingNetwork(ResultModel):
    centers: tuple[ServiceCenter, ...]

    @model_validator(mode="after")
    def _unique_centers(self) -> "QueueingNetwork":
        if not self.centers:
            raise ValueError("a queueing network needs at least one center")
        names = [c.name for c in self.centers]
        if len(set(names)) != len(names):
            raise ValueError("service center names must be unique")
        return self

    def center(self, name: str) -> ServiceCenter:
        for c in self.centers:
            if c.name == name:
                return c
        raise NetworkError(f"unknown service center {name!r}")

    @property
    def total_demand(self) -> float:
        return math.fsum(c.demand for c in self.centers)


class OpenWorkload(ResultModel):
    type: Literal["open"] = "open"
    arrival_rate: float = Field(gt=0)


class ClosedWorkload(ResultModel):
    type: Literal["closed"] = "closed"
    population: int = Field(ge=1)
    think_time: float = Field(default=0.0, ge=0)


Workload = Annotated[Union[OpenWorkload, ClosedWorkload], Field(discriminator="type")]


def parse_workload_spec(spec: str) -> Union[OpenWorkload, ClosedWorkload]:
    """
    Parse `open:LAMBDA` or `closed:N,Z` (Z optional, default 0).

    Raises:
        ValueError: On any other form.
    """
    kind, _, params = spec.strip().partition(":")
    try:
        if kind == "open":
            return OpenWorkload(arrival_rate=float(params))
        if kind == "closed":
            population, _, think = params.partition(",")
            return ClosedWorkload(population=int(population), think_time=float(think or 0.0))
    except ValueError as exc:
        raise ValueError(f"invalid workload {spec!r}: {exc}") from exc
    raise ValueError(f"invalid workload {spec!r}: expected open:LAMBDA or closed:N,Z")


# ── Results ───────────────────────────────────────────────────────────────────

class CenterMetrics(ResultModel):
    utilization: float
    residence_time: float
    queue_length: float


class ThroughputBounds(ResultModel):
    """Asymptotic bounds: X ≤ 1/D_max, and X ≤ N/(ΣD + Z) for closed workloads."""

    max_throughput: float
    population_bound: Optional[float] = None


class SystemMetrics(ResultModel):
    per_center: dict[str, CenterMetrics]
    system_throughput: float
    system_response_time: float
    bottleneck: str
    bounds: ThroughputBounds
    workload: Workload


class BottleneckReport(ResultModel):
    center: str
    max_demand: float
    bounds: ThroughputBounds
    crossover_population: Optional[float] = None
    # Set when a delay center carries more demand than the bottleneck.
    largest_delay_center: Optional[str] = None


class DevicePA(ResultModel):
    """Performance attributes of one deployed device after solving."""

    device: str
    center: str
    scheduling: str
    utilization: float
    throughput: float
    residence_time: float


class NodePA(ResultModel):
    node: str
    components: tuple[str, ...]
    devices: tuple[DevicePA, ...]


# ── Building ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class _Deployed:
    node: str
    device: Device


def _deployed_devices(dep: DeploymentModel) -> list[_Deployed]:
    return [_Deployed(node.name, dev) for node in dep.nodes for dev in node.devices]


def _center_names(deployed: list[_Deployed]) -> list[str]:
    """Plain device name when it is unique across the deployment, else node.device."""
    counts: dict[str, int] = {}
    for d in deployed:
        counts[d.device.name] = counts.get(d.device.name, 0) + 1
    return [
        d.device.name if counts[d.device.name] == 1 else f"{d.node}.{d.device.name}"
        for d in deployed
    ]


def build_network(d: DemandVector, dep: DeploymentModel) -> QueueingNetwork:
    """
    Map a demand vector onto the deployed devices.

    Demand keys name a device either plainly (`CPU`) or qualified by its
    processing node (`AppServer.CPU`). Every deployed device becomes one
    center with D_i = demand / speedFactor; devices nobody asks for get D_i = 0.

    Raises:
        NetworkError: If a demanded device is not deployed, or a plain name
                      matches devices on more than one node.
    """
    deployed = _deployed_devices(dep)
    if not deployed:
        raise NetworkError("the deployment has no devices")
    names = _center_names(deployed)
    demands = [0.0] * len(deployed)

    for key, value in d.per_device.items():
        if "." in key:
            node, _, device = key.partition(".")
            matches = [i for i, x in enumerate(deployed) if x.node == node and x.device.name == device]
        else:
            matches = [i for i, x in enumerate(deployed) if x.device.name == key]
        if not matches:
            raise NetworkError(f"device {key!r} in the demand vector has no deployment target")
        if len(matches) > 1:
            raise NetworkError(f"device {key!r} maps to {len(matches)} deployed devices")
        demands[matches[0]] += value

    centers = []
    for x, name, demand in zip(deployed, names, demands):
        delay = x.device.kind == "delay" or x.device.scheduling == "delay"
        centers.append(ServiceCenter(
            name=name,
            kind="delay" if delay else "queueing",
            scheduling="delay" if delay else x.device.scheduling,
            demand=demand / x.device.speed_factor,
        ))
    logger.info("Built queueing network with %d center(s)", len(centers))
    return QueueingNetwork(centers=tuple(centers))


# ── Bottleneck ────────────────────────────────────────────────────────────────

def _bottleneck(net: QueueingNetwork) -> ServiceCenter:
    """argmax D_i over queueing centers (all centers if none queue); ties by name."""
    pool = [c for c in net.centers if c.queueing] or list(net.centers)
    return min(pool, key=lambda c: (-c.demand, c.name))


def _bounds(net: QueueingNetwork, population: Optional[int] = None, think_time: float = 0.0) -> ThroughputBounds:
    d_max = _bottleneck(net).demand
    max_x = math.inf if d_max == 0 else 1.0 / d_max
    pop_bound = None
    if population is not None:
        denominator = net.total_demand + think_time
        pop_bound = math.inf if denominator == 0 else population / denominator
    return ThroughputBounds(max_throughput=max_x, population_bound=pop_bound)


def bottleneck_report(
    net: QueueingNetwork,
    w: Union[OpenWorkload, ClosedWorkload],
) -> BottleneckReport:
    """
    Identify the bottleneck center and the asymptotic throughput bounds.

    For a closed workload also reports the crossover population
    N* = (ΣD_i + Z) / D_max beyond which the bottleneck saturates.
    Delay centers never saturate, so they are not candidates; one that
    carries more demand than the bottleneck is named in largest_delay_center.
    """
    top = _bottleneck(net)
    if isinstance(w, ClosedWorkload):
        bounds = _bounds(net, w.population, w.think_time)
        crossover = None if top.demand == 0 else (net.total_demand + w.think_time) / top.demand
    else:
        bounds = _bounds(net)
        crossover = None
    delays = [c for c in net.centers if not c.queueing and c.demand > top.demand]
    largest_delay = min(delays, key=lambda c: (-c.demand, c.name)).name if delays else None
    if largest_delay is not None:
        logger.info("Delay center %s has more demand than bottleneck %s", largest_delay, top.name)
    return BottleneckReport(
        center=top.name,
        max_demand=top.demand,
        bounds=bounds,
        crossover_population=crossover,
        largest_delay_center=largest_delay,
    )


# ── Open solution ─────────────────────────────────────────────────────────────

def solve_open(net: QueueingNetwork, arrival_rate: float) -> SystemMetrics:
    """
    Open product-form solution.

    U_i = λD_i; queueing R_i = D_i/(1−U_i); delay R_i = D_i; Q_i = λR_i.

    Raises:
        ValueError:      If λ is not positive.
        SaturationError: If some queueing center reaches U_i ≥ 1.
    """
    if not arrival_rate > 0:
        raise ValueError(f"arrival rate must be positive, got {arrival_rate!r}")
    top = _bottleneck(net)
    per_center: dict[str, CenterMetrics] = {}
    for c in net.centers:
        u = arrival_rate * c.demand
        if c.queueing:
            if u >= 1.0:
                raise SaturationError(c.name, u, 1.0 / top.demand)
            r = c.demand / (1.0 - u)
        else:
            r = c.demand
        per_center[c.name] = CenterMetrics(utilization=u, residence_time=r, queue_length=arrival_rate * r)

    response = math.fsum(m.residence_time for m in per_center.values())
    logger.info("Open solution at λ=%g: R=%g, bottleneck %s", arrival_rate, response, top.name)
    return SystemMetrics(
        per_center=per_center,
        system_throughput=arrival_rate,
        system_response_time=response,
        bottleneck=top.name,
        bounds=_bounds(net),
        workload=OpenWorkload(arrival_rate=arrival_rate),
    )


# ── Closed solution (MVA) ─────────────────────────────────────────────────────

@dataclass(frozen=True)
class MvaStep:
    """State of the MVA recursion at population n."""

    population: int
    throughput: float
    response_time: float
    residence: dict[str, float]
    queue: dict[str, float]


def mva_trace(net: QueueingNetwork, population: int, think_time: float = 0.0) -> list[MvaStep]:
    """
    Run exact single-class MVA for n = 1..N and return every step.

    R_i(n) = D_i (1 + Q_i(n−1)) at queueing centers, D_i at delay centers;
    X(n) = n / (Z + Σ R_i(n)); Q_i(n) = X(n) R_i(n); Q_i(0) = 0.

    Raises:
        ValueError: If N < 1, Z < 0, or the cycle time is zero.
    """
    if population < 1:
        raise ValueError(f"population must be at least 1, got {population}")
    if think_time < 0:
        raise ValueError(f"think time must be non-negative, got {think_time}")

    queue = {c.name: 0.0 for c in net.centers}
    steps: list[MvaStep] = []
    for n in range(1, population + 1):
        residence = {
            c.name: c.demand * (1.0 + queue[c.name]) if c.queueing else c.demand
            for c in net.centers
        }
        response = math.fsum(residence.values())
        cycle = think_time + response
        if cycle == 0:
            raise NetworkError(EMPTY_CYCLE)
        throughput = n / cycle
        queue = {name: throughput * r for name, r in residence.items()}
        steps.append(MvaStep(n, throughput, response, residence, queue))
    return steps


def solve_closed(net: QueueingNetwork, population: int, think_time: float = 0.0) -> SystemMetrics:
    """Exact MVA solution at population N with think time Z."""
    last = mva_trace(net, population, think_time)[-1]
    per_center = {
        c.name: CenterMetrics(
            utilization=last.throughput * c.demand,
            residence_time=last.residence[c.name],
            queue_length=last.queue[c.name],
        )
        for c in net.centers
    }
    top = _bottleneck(net)
    logger.info(
        "Closed solution at N=%d, Z=%g: X=%g R=%g, bottleneck %s",
        population, think_time, last.throughput, last.response_time, top.name,
    )
    return SystemMetrics(
        per_center=per_center,
        system_throughput=last.throughput,
        system_response_time=last.response_time,
        bottleneck=top.name,
        bounds=_bounds(net, population, think_time),
        workload=ClosedWorkload(population=population, think_time=think_time),
    )


def solve(net: QueueingNetwork, w: Union[OpenWorkload, ClosedWorkload]) -> SystemMetrics:
    """Solve with the solver matching the workload type."""
    if isinstance(w, OpenWorkload):
        return solve_open(net, w.arrival_rate)
    return solve_closed(net, w.population, w.think_time)


# ── What-if analysis ──────────────────────────────────────────────────────────

class ScaleDemand(ResultModel):
    change: Literal["scaleDemand"] = "scaleDemand"
    center: str
    factor: float = Field(ge=0)


class SetScheduling(ResultModel):
    change: Literal["setScheduling"] = "setScheduling"
    center: str
    scheduling: Literal["fcfs", "ps", "delay"]


class AddCenter(ResultModel):
    change: Literal["addCenter"] = "addCenter"
    center: ServiceCenter


class RemoveCenter(ResultModel):
    change: Literal["removeCenter"] = "removeCenter"
    center: str


Change = Annotated[
    Union[ScaleDemand, SetScheduling, AddCenter, RemoveCenter],
    Field(discriminator="change"),
]


def apply_change(net: QueueingNetwork, change) -> QueueingNetwork:
    """
    Return a modified copy of the network; the original is untouched.

    Raises:
        NetworkError: On an unknown center, a duplicate added center, or a
                      change that leaves no center.
    """
    centers = list(net.centers)
    if isinstance(change, AddCenter):
        if any(c.name == change.center.name for c in centers):
            raise NetworkError(f"service center {change.center.name!r} already exists")
        centers.append(change.center)
    else:
        target = net.center(change.center)
        i = centers.index(target)
        if isinstance(change, ScaleDemand):
            centers[i] = target.model_copy(update={"demand": target.demand * change.factor})
        elif isinstance(change, SetScheduling):
            kind = "delay" if change.scheduling == "delay" else "queueing"
            centers[i] = target.model_copy(update={"scheduling": change.scheduling, "kind": kind})
        elif isinstance(change, RemoveCenter):
            del centers[i]
            if not centers:
                raise NetworkError(f"removing {change.center!r} would leave an empty network")
    return QueueingNetwork(centers=tuple(centers))


def what_if(
    net: QueueingNetwork,
    change,
    w: Union[OpenWorkload, ClosedWorkload],
) -> SystemMetrics:
    """Solve the network after one design change."""
    modified = apply_change(net, change)
    logger.info("What-if %s on %s", change.change, getattr(change.center, "name", change.center))
    return solve(modified, w)


# ── Deployment back-annotation ────────────────────────────────────────────────

def annotate_deployment(dep: DeploymentModel, metrics: SystemMetrics) -> list[NodePA]:
    """
    Attach solved utilization, throughput and residence time to every
    deployed device, grouped by processing node with its allocated components.
    """
    deployed = _deployed_devices(dep)
    names = _center_names(deployed)
    by_node: dict[str, list[DevicePA]] = {n.name: [] for n in dep.nodes}
    for x, name in zip(deployed, names):
        m = metrics.per_center.get(name)
        if m is None:
            continue
        by_node[x.node].append(DevicePA(
            device=x.device.name,
            center=name,
            scheduling=x.device.scheduling,
            utilization=m.utilization,
            throughput=metrics.system_throughput,
            residence_time=m.residence_time,
        ))
    return [
        NodePA(
            node=node.name,
            components=tuple(sorted(c for c, n in dep.allocation.items() if n == node.name)),
            devices=tuple(by_node[node.name]),
        )
        for node in dep.nodes
    ]
