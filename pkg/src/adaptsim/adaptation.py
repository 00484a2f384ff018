"""Observation, QoS evaluation, placement selection and the control loop.

One coordinator (on a full-tier host) periodically aggregates context from
every reachable host, scores the deployment, and reacts according to the
active adaptation mode: report only, alert the application, reconfigure
directly, or alert first and reconfigure after a grace period.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

from . import kernel
from .container import EventKind, PlatformEvent
from .context import (ContextInformation, ContextNature, Location, Quantity,
                      effective_confidence, stamp)
from .kernel import (ArchitectureModel, HostTier, Move, PlatformConfig)

EXHAUSTIVE_LIMIT = 10_000
AFFECTED_SCORE_FLOOR = 0.5


@dataclass
class HostObs:
    up: bool
    cpu_free: float
    mem_free: float
    battery: Optional[float]            # None when on mains
    confidence: float = 1.0             # decays while unreachable


@dataclass
class LinkObs:
    up: bool
    bandwidth: float
    bw_free: float


@dataclass
class CompObs:
    alive: bool
    fault: bool


@dataclass
class ConnObs:
    rate: float
    depth: int


@dataclass
class Observation:
    at: int
    hosts: dict = field(default_factory=dict)        # id -> HostObs
    links: dict = field(default_factory=dict)        # frozenset -> LinkObs
    components: dict = field(default_factory=dict)   # id -> CompObs
    connectors: dict = field(default_factory=dict)   # id -> ConnObs


@dataclass
class QoSReport:
    resource: dict              # component id -> r in [0, 1]
    link: dict                  # connector id -> l in [0, 1]
    battery: float
    global_score: float
    at: int


class Infeasible:
    """No placement gives every affected component an up, compatible host."""

    def __repr__(self):
        return "Infeasible"


INFEASIBLE = Infeasible()


@dataclass
class DeploymentPlan:
    commands: list              # of ReconfigurationCommand
    expected_qos: float
    assignment: dict            # affected component id -> host id


@dataclass
class CycleOutcome:
    kind: str                   # NoAction | EventsEmitted | PlanApplied | PlanDeferred
    events: int = 0
    plan: Optional[DeploymentPlan] = None


# -- observation -----------------------------------------------------------

def observe(world, now: int) -> Observation:
    """Aggregate every host's local context into one snapshot.

    Unreachable hosts appear with their last-known values, marked down,
    confidence aged by the decay half-life.
    """
    coord = world.coordinator_host
    half_life = world.platform_config().half_life
    obs = Observation(at=now)
    for hid in sorted(world.hosts):
        host = world.hosts[hid]
        reachable = host.desc.up and (
            hid == coord or coord is None
            or kernel.shortest_path(world, coord, hid) is not None)
        if reachable:
            load_cpu = load_mem = 0.0
            for c in host.containers.values():
                if c.lifecycle.name == "RUNNING":
                    load_cpu += c.active_variant.cpu_demand
                    load_mem += c.active_variant.mem_demand
            battery = host.desc.power.level if host.desc.power else None
            conf = 1.0
            latest = host.store.latest("battery.level")
            if latest is not None:
                conf = effective_confidence(latest, now, half_life)
            ho = HostObs(up=True,
                         cpu_free=host.desc.cpu_capacity - load_cpu,
                         mem_free=host.desc.mem_capacity - load_mem,
                         battery=battery, confidence=conf)
            for cid in sorted(host.containers):
                c = host.containers[cid]
                obs.components[cid] = CompObs(
                    alive=c.lifecycle.name == "RUNNING",
                    fault=c.fault is not None)
        else:
            prev = world.obs_cache.get(hid)
            if prev is not None:
                age = now - world.obs_cache_at.get(hid, now)
                conf = prev.confidence * math.pow(2.0, -age / half_life)
                ho = HostObs(up=False, cpu_free=prev.cpu_free,
                             mem_free=prev.mem_free, battery=prev.battery,
                             confidence=conf)
            else:
                ho = HostObs(up=False, cpu_free=0.0, mem_free=0.0,
                             battery=None, confidence=0.0)
            for cid in sorted(host.containers):
                obs.components[cid] = CompObs(alive=False, fault=False)
        obs.hosts[hid] = ho
        if reachable:
            world.obs_cache[hid] = ho
            world.obs_cache_at[hid] = now
    for pair in sorted(world.links, key=sorted):
        link = world.links[pair]
        obs.links[pair] = LinkObs(up=link.up, bandwidth=link.bandwidth,
                                  bw_free=link.bandwidth)
    # subtract flow demand along each connector's current route
    for kid in sorted(world.connectors):
        k = world.connectors[kid]
        obs.connectors[kid] = ConnObs(rate=k.take_rate(), depth=k.depth())
        src = world.host_of(k.source.component)
        for sink in k.sinks:
            dst = world.host_of(sink.component)
            if src is None or dst is None or src == dst:
                continue
            path = _obs_path(obs, src, dst)
            if path is None:
                continue
            for a, b in zip(path, path[1:]):
                obs.links[frozenset((a, b))].bw_free -= k.policy.bw_demand
    return obs


def _obs_path(obs: Observation, src: str, dst: str) -> Optional[list]:
    """Fewest-hop path over the observation's up hosts and links."""
    if src == dst:
        return [src]
    if not obs.hosts.get(src, HostObs(False, 0, 0, None)).up:
        return None
    heap = [(0, (src,))]
    seen = {}
    while heap:
        hops, path = heapq.heappop(heap)
        node = path[-1]
        if node == dst:
            return list(path)
        nbrs = []
        for pair, lo in obs.links.items():
            if node in pair and lo.up:
                other = next(iter(pair - {node}))
                if obs.hosts.get(other) and obs.hosts[other].up:
                    nbrs.append(other)
        for nxt in sorted(nbrs):
            if nxt in path:
                continue
            cand = (hops + 1, path + (nxt,))
            if nxt not in seen or cand < seen[nxt]:
                seen[nxt] = cand
                heapq.heappush(heap, cand)
    return None


# -- QoS heuristic ---------------------------------------------------------

def _demands(descriptors, cid: str, tier: str):
    v = descriptors[cid].variant_for(tier)
    return (v.cpu_demand, v.mem_demand) if v else (0.0, 0.0)


def evaluate_qos(model: ArchitectureModel, obs: Observation, descriptors,
                 weights=(0.4, 0.4, 0.2)) -> QoSReport:
    """Score the deployment: resource fit, link fit, battery margin.

    Per component, fit is how many times its demands still fit into the
    host's free capacity, capped at 1 (0 when the host is down).  Per
    connector, the bottleneck link's bandwidth margin (1 when fully local,
    0 when the route is broken).  Battery is the worst level among
    battery-powered hosts in use.
    """
    if not model.components:
        return QoSReport({}, {}, 1.0, 1.0, obs.at)
    resource = {}
    for cid in sorted(model.components):
        mc = model.components[cid]
        ho = obs.hosts.get(mc.host)
        if ho is None or not ho.up:
            resource[cid] = 0.0
            continue
        cpu_d, mem_d = _demands(descriptors, cid, mc.tier)
        fit = 1.0
        if cpu_d > 0:
            fit = min(fit, ho.cpu_free / cpu_d)
        if mem_d > 0:
            fit = min(fit, ho.mem_free / mem_d)
        resource[cid] = max(0.0, min(1.0, fit))
    link = {}
    for kid in sorted(model.connectors):
        mk = model.connectors[kid]
        src_c = model.components.get(mk.source.component)
        hosts = [model.components[s.component].host for s in mk.sinks
                 if s.component in model.components]
        if src_c is None or len(hosts) < len(mk.sinks):
            link[kid] = 0.0
            continue
        score = 1.0
        for dst in hosts:
            if dst == src_c.host:
                continue
            path = _obs_path(obs, src_c.host, dst)
            if path is None:
                score = 0.0
                break
            for a, b in zip(path, path[1:]):
                lo = obs.links[frozenset((a, b))]
                if not lo.up:
                    score = 0.0
                    break
                if mk.policy.bw_demand > 0:
                    score = min(score, max(
                        0.0, min(1.0, lo.bw_free / mk.policy.bw_demand)))
            if score == 0.0:
                break
        link[kid] = score
    used = {model.components[cid].host for cid in model.components}
    levels = [obs.hosts[h].battery for h in used
              if obs.hosts.get(h) and obs.hosts[h].up
              and obs.hosts[h].battery is not None]
    battery = min(levels) if levels else 1.0
    w_r, w_l, w_b = weights
    mean_r = sum(resource.values()) / len(resource)
    mean_l = sum(link.values()) / len(link) if link else 1.0
    g = w_r * mean_r + w_l * mean_l + w_b * battery
    return QoSReport(resource, link, battery, g, obs.at)


# -- placement search ------------------------------------------------------

def affected_components(model: ArchitectureModel, report: QoSReport,
                        obs: Observation) -> list:
    """Components worth re-placing: dead hosts, starved resources, or
    endpoints of throttled connectors."""
    hit = set()
    for cid, mc in model.components.items():
        ho = obs.hosts.get(mc.host)
        if ho is None or not ho.up:
            hit.add(cid)
        elif report.resource.get(cid, 1.0) < AFFECTED_SCORE_FLOOR:
            hit.add(cid)
    for kid, score in report.link.items():
        if score < AFFECTED_SCORE_FLOOR:
            mk = model.connectors[kid]
            hit.add(mk.source.component)
            hit.update(s.component for s in mk.sinks)
    return sorted(h for h in hit if h in model.components)


def select_deployment(model: ArchitectureModel, obs: Observation,
                      descriptors, host_tiers: dict,
                      weights=(0.4, 0.4, 0.2),
                      report: Optional[QoSReport] = None):
    """Choose the best re-placement of the affected components.

    Exhaustive over all candidate assignments when the space is small,
    greedy single-move hill climbing otherwise.  Ties fall to the fewest
    moves, then the lexicographically least assignment.  Returns a
    DeploymentPlan, INFEASIBLE when some component has no candidate host,
    or None when nothing is affected.
    """
    if report is None:
        report = evaluate_qos(model, obs, descriptors, weights)
    affected = affected_components(model, report, obs)
    if not affected:
        return None
    candidates = {}
    for cid in affected:
        desc = descriptors[cid]
        cands = []
        for hid in sorted(obs.hosts):
            if not obs.hosts[hid].up:
                continue
            tier = host_tiers[hid]
            if desc.variant_for(tier) is not None:
                cands.append(hid)
        if not cands:
            return INFEASIBLE
        candidates[cid] = cands

    def tiers_for(assignment):
        return {cid: host_tiers[hid] for cid, hid in assignment.items()}

    def score(assignment):
        return _score_assignment(model, obs, descriptors, affected,
                                 assignment, tiers_for(assignment), weights)

    def moves(assignment):
        return sum(1 for cid, hid in assignment.items()
                   if model.components[cid].host != hid)

    space = 1
    for cid in affected:
        space *= len(candidates[cid])
    best = None
    if space <= EXHAUSTIVE_LIMIT:
        for combo in itertools.product(*(candidates[c] for c in affected)):
            assignment = dict(zip(affected, combo))
            key = (-score(assignment), moves(assignment),
                   tuple(sorted(assignment.items())))
            if best is None or key < best[0]:
                best = (key, assignment)
        assignment = best[1]
        best_score = -best[0][0]
    else:
        assignment = {}
        for cid in affected:
            cur = model.components[cid].host
            assignment[cid] = cur if cur in candidates[cid] \
                else candidates[cid][0]
        best_score = score(assignment)
        improved = True
        while improved:
            improved = False
            step_best = None
            for cid in affected:
                for hid in candidates[cid]:
                    if hid == assignment[cid]:
                        continue
                    trial = dict(assignment)
                    trial[cid] = hid
                    key = (-score(trial), moves(trial),
                           tuple(sorted(trial.items())))
                    if step_best is None or key < step_best[0]:
                        step_best = (key, trial)
            if step_best is not None and -step_best[0][0] > best_score:
                assignment = step_best[1]
                best_score = -step_best[0][0]
                improved = True
    commands = [Move(cid, hid) for cid, hid in sorted(assignment.items())
                if model.components[cid].host != hid]
    return DeploymentPlan(commands=commands, expected_qos=best_score,
                          assignment=assignment)


def _score_assignment(model, obs, descriptors, affected, assignment,
                      tiers, weights):
    hyp = ArchitectureModel(
        components=dict(model.components),
        connectors=model.connectors, version=model.version)
    hyp_hosts = {hid: HostObs(ho.up, ho.cpu_free, ho.mem_free, ho.battery,
                              ho.confidence)
                 for hid, ho in obs.hosts.items()}
    for cid in affected:
        mc = model.components[cid]
        cpu_d, mem_d = _demands(descriptors, cid, mc.tier)
        old = hyp_hosts.get(mc.host)
        if old is not None and old.up:
            old.cpu_free += cpu_d
            old.mem_free += mem_d
    for cid, hid in assignment.items():
        mc = model.components[cid]
        tier = tiers[cid]
        cpu_d, mem_d = _demands(descriptors, cid, tier)
        hyp_hosts[hid].cpu_free -= cpu_d
        hyp_hosts[hid].mem_free -= mem_d
        hyp.components[cid] = kernel.ModelComponent(
            host=hid, tier=tier, behavior=mc.behavior,
            lifecycle=mc.lifecycle)
    hyp_obs = Observation(at=obs.at, hosts=hyp_hosts, links=obs.links,
                          components=obs.components,
                          connectors=obs.connectors)
    return evaluate_qos(hyp, hyp_obs, descriptors, weights).global_score


# -- control loop ----------------------------------------------------------

class Coordinator:
    """Evolution/adaptation manager pair living on one full-tier host."""

    def __init__(self, host_id: str, mode: str = "M3"):
        if mode not in ("M1", "M2", "M3", "M4"):
            raise ValueError(f"unknown adaptation mode {mode}")
        self.host = host_id
        self.mode = mode
        self.alert_since: Optional[int] = None
        self.infeasible_outstanding = False

    def run_cycle(self, world, now: int) -> CycleOutcome:
        cfg = world.platform_config()
        obs = observe(world, now)
        report = evaluate_qos(world.model, obs, world.descriptors,
                              cfg.qos_weights)
        world.last_qos = report
        mean_r = (sum(report.resource.values()) / len(report.resource)
                  if report.resource else 1.0)
        mean_l = (sum(report.link.values()) / len(report.link)
                  if report.link else 1.0)
        world.trace(self.host, "QOS",
                    f"global={report.global_score:.4f} rmean={mean_r:.4f} "
                    f"lmean={mean_l:.4f} b={report.battery:.4f}")
        self._store_report(world, report, now)
        triggered = (report.global_score < cfg.qos_threshold
                     or self._hard_violation(world.model, report, obs))
        if not triggered:
            self.alert_since = None
            self.infeasible_outstanding = False
            return CycleOutcome("NoAction")
        if self.mode == "M1":
            return CycleOutcome("NoAction")
        if self.mode == "M2":
            n = self._alert(world, report)
            return CycleOutcome("EventsEmitted", events=n)
        if self.mode == "M3":
            return self._plan_and_apply(world, obs, report, cfg)
        # M4: alert first, reconfigure only after the grace window
        n = self._alert(world, report)
        if self.alert_since is None:
            self.alert_since = now
        if now - self.alert_since >= cfg.grace:
            out = self._plan_and_apply(world, obs, report, cfg)
            if out.kind == "PlanApplied":
                self.alert_since = None
            out.events = n
            return out
        return CycleOutcome("EventsEmitted", events=n)

    def _alert(self, world, report: QoSReport) -> int:
        e = PlatformEvent(kind=EventKind.QOS_ALERT, payload=report,
                          priority=7)
        return kernel.emit_event(world, e, self.mode, from_host=self.host)

    def _hard_violation(self, model, report, obs) -> bool:
        for cid, mc in model.components.items():
            ho = obs.hosts.get(mc.host)
            if ho is None or not ho.up:
                return True
        return any(v == 0.0 for v in report.link.values())

    def _plan_and_apply(self, world, obs, report, cfg) -> CycleOutcome:
        host_tiers = {hid: world.hosts[hid].desc.tier.value
                      for hid in world.hosts}
        plan = select_deployment(world.model, obs, world.descriptors,
                                 host_tiers, cfg.qos_weights, report)
        if plan is INFEASIBLE:
            self.infeasible_outstanding = True
            world.trace(self.host, "CMD", "cmd=Plan result=Infeasible")
            return CycleOutcome("NoAction")
        self.infeasible_outstanding = False
        if plan is None or not plan.commands:
            return CycleOutcome("NoAction")
        deferred = False
        for cmd in plan.commands:
            stranded = (isinstance(cmd, Move) and
                        not world.hosts[
                            world.host_of(cmd.component) or cmd.target
                        ].desc.up)
            result = kernel.apply(world, cmd, origin="platform",
                                  forced=stranded)
            if result.status == "Deferred":
                deferred = True
            elif not result.applied:
                # retry next cycle with a fresh observation
                return CycleOutcome("NoAction")
        if deferred:
            return CycleOutcome("PlanDeferred", plan=plan)
        return CycleOutcome("PlanApplied", plan=plan)

    def _store_report(self, world, report: QoSReport, now: int) -> None:
        info = ContextInformation(
            nature=ContextNature.HARDWARE, key="qos.global",
            value=Quantity(report.global_score, ""), producer="adaptation")
        obj = stamp(info, now, Location(host=self.host),
                    owner="platform", base_confidence=1.0)
        world.hosts[self.host].store.put(obj)
