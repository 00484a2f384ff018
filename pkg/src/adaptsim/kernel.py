"""Per-host platform kernel.

Holds the tier/capability matrix, host descriptors, hop-count routing with
light-tier delegation, platform services, the reflexive architecture
model, and atomic execution of reconfiguration commands.  Functions here
take the world (the simulation substrate) as their first argument; the
world owns all mutable runtime state.
"""

from __future__ import annotations

import copy
import heapq
from dataclasses import dataclass, field, replace as dc_replace
from enum import Enum
from typing import Any, Optional

from .connector import ConnectorInstance, Endpoint, FlowPolicy
from .container import (ComponentDescriptor, ContainerInstance, EventKind,
                        Lifecycle, PlatformEvent)
from .context import ValidityPolicy
from .errors import (ServiceUnavailable, Unreachable, ValidationError)


class HostTier(Enum):
    FULL = "Full"
    LIGHT_STD = "LightStd"
    LIGHT_MIN = "LightMin"


class Service(Enum):
    CONTEXT_ACCESS = "ContextAccess"
    CONTEXT_DISTANT = "ContextDistant"
    PERSISTENCE = "Persistence"
    ROUTING = "Routing"
    QOS_MEASURE = "QoSMeasure"
    REFLEXIVITY = "Reflexivity"


# Capability matrix per tier.  Sensor-class hosts keep only the services a
# constrained device can afford; heavy ones are delegated to full hosts.
SERVICE_MATRIX = {
    HostTier.FULL: frozenset(Service),
    HostTier.LIGHT_STD: frozenset(Service),
    HostTier.LIGHT_MIN: frozenset({
        Service.CONTEXT_ACCESS, Service.CONTEXT_DISTANT,
        Service.QOS_MEASURE, Service.REFLEXIVITY}),
}


@dataclass
class Battery:
    level: float
    drain_per_tick: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.level <= 1.0:
            raise ValidationError("battery level outside [0, 1]")


@dataclass
class HostDescriptor:
    id: str
    tier: HostTier
    cpu_capacity: float
    mem_capacity: float
    power: Optional[Battery] = None       # None means mains
    location: tuple = (0.0, 0.0)
    up: bool = True

    def __post_init__(self):
        if self.cpu_capacity <= 0 or self.mem_capacity <= 0:
            raise ValidationError(f"host {self.id}: capacities must be > 0")


class IntrusionLevel(Enum):
    OPEN = "Open"
    GUARDED = "Guarded"
    LOCKED = "Locked"


@dataclass(frozen=True)
class Subscription:
    kinds: Optional[frozenset] = None     # of EventKind; None = all
    min_priority: int = 0
    filter: Optional[ValidityPolicy] = None


@dataclass
class PlatformConfig:
    subscriptions: dict = field(default_factory=dict)  # listener id -> Subscription
    intrusion: IntrusionLevel = IntrusionLevel.OPEN
    defer_window: int = 5                 # Guarded: ticks before a deferred command runs
    reporting_interval: int = 5
    qos_threshold: float = 0.7
    qos_weights: tuple = (0.4, 0.4, 0.2)  # resource, link, battery
    adaptation_interval: int = 5
    grace: int = 10                       # M4: ticks the application gets to react
    half_life: int = 32

    def __post_init__(self):
        if not 0.0 <= self.qos_threshold <= 1.0:
            raise ValidationError("qos_threshold outside [0, 1]")
        if self.reporting_interval < 1:
            raise ValidationError("reporting_interval must be >= 1")


# -- reconfiguration commands ----------------------------------------------

@dataclass(frozen=True)
class Add:
    descriptor: ComponentDescriptor
    host: str


@dataclass(frozen=True)
class Remove:
    component: str


@dataclass(frozen=True)
class Move:
    component: str
    target: str


@dataclass(frozen=True)
class Connect:
    connector: str
    source: Endpoint
    sinks: tuple
    policy: FlowPolicy


@dataclass(frozen=True)
class Disconnect:
    connector: str


@dataclass(frozen=True)
class ReplaceBusiness:
    component: str
    behavior: Optional[str] = None
    tier: Optional[str] = None


@dataclass(frozen=True)
class CommandResult:
    status: str                 # Applied | Aborted | Deferred
    reason: str = ""

    @property
    def applied(self):
        return self.status == "Applied"


APPLIED = CommandResult("Applied")
DEFERRED = CommandResult("Deferred")


def aborted(reason: str) -> CommandResult:
    return CommandResult("Aborted", reason)


class _Abort(Exception):
    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


# -- architecture model ----------------------------------------------------

@dataclass(frozen=True)
class ModelComponent:
    host: str
    tier: str
    behavior: str
    lifecycle: str


@dataclass(frozen=True)
class ModelConnector:
    source: Endpoint
    sinks: tuple
    policy: FlowPolicy


@dataclass
class ArchitectureModel:
    """Causally connected runtime view: updated in the same step as the
    deployment it mirrors."""

    components: dict = field(default_factory=dict)   # id -> ModelComponent
    connectors: dict = field(default_factory=dict)   # id -> ModelConnector
    version: int = 0

    def bump(self):
        self.version += 1

    def canonical(self):
        """Content form used for equality checks; version excluded."""
        comps = {cid: (m.host, m.tier, m.behavior, m.lifecycle)
                 for cid, m in sorted(self.components.items())}
        conns = {kid: (str(m.source), tuple(str(s) for s in m.sinks),
                       (m.policy.mode.value, m.policy.sync.value,
                        m.policy.loss.value, m.policy.capacity,
                        m.policy.bw_demand))
                 for kid, m in sorted(self.connectors.items())}
        return (comps, conns)


def reconstruct_model(world) -> ArchitectureModel:
    """Rebuild the model by walking every up host's registries."""
    m = ArchitectureModel()
    for hid in sorted(world.hosts):
        host = world.hosts[hid]
        if not host.desc.up:
            continue
        for cid in sorted(host.containers):
            c = host.containers[cid]
            m.components[cid] = ModelComponent(
                host=hid, tier=c.active_variant.tier,
                behavior=c.active_variant.behavior,
                lifecycle=c.lifecycle.value)
        for kid in sorted(host.connector_sources):
            k = world.connectors[kid]
            m.connectors[kid] = ModelConnector(
                source=k.source, sinks=tuple(k.sinks), policy=k.policy)
    return m


# -- routing ---------------------------------------------------------------

def link_up(world, a: str, b: str) -> bool:
    link = world.links.get(frozenset((a, b)))
    if link is None or not link.up:
        return False
    return world.hosts[a].desc.up and world.hosts[b].desc.up


def neighbors(world, hid: str) -> list:
    out = []
    for pair, link in world.links.items():
        if hid in pair and link.up:
            other = next(iter(pair - {hid}))
            if world.hosts[other].desc.up:
                out.append(other)
    return sorted(out)


def shortest_path(world, src: str, dst: str) -> Optional[list]:
    """Fewest hops over up links; ties to the lexicographically least path."""
    if src == dst:
        return [src] if world.hosts[src].desc.up else None
    if not world.hosts[src].desc.up or not world.hosts[dst].desc.up:
        return None
    heap = [(0, (src,))]
    best: dict = {}
    while heap:
        hops, path = heapq.heappop(heap)
        node = path[-1]
        if node == dst:
            return list(path)
        if node in best and best[node] < (hops, path):
            continue
        for nxt in neighbors(world, node):
            if nxt in path:
                continue
            cand = (hops + 1, path + (nxt,))
            if nxt not in best or cand < best[nxt]:
                best[nxt] = cand
                heapq.heappush(heap, cand)
    return None


def nearest_full_neighbor(world, src: str) -> Optional[str]:
    """Closest reachable full-tier host, by (hops, id)."""
    cands = []
    for hid in sorted(world.hosts):
        if hid == src or not world.hosts[hid].desc.up:
            continue
        if world.hosts[hid].desc.tier is not HostTier.FULL:
            continue
        path = shortest_path(world, src, hid)
        if path is not None:
            cands.append((len(path) - 1, hid))
    if not cands:
        return None
    return min(cands)[1]


def route(world, src: str, dst: str) -> Optional[list]:
    """Routing service; returns the path, or None when dst is unreachable.

    Sensor-class hosts know only their direct neighbourhood and delegate
    anything further to the nearest full host.
    """
    host = world.hosts[src]
    if host.desc.tier is not HostTier.LIGHT_MIN:
        return shortest_path(world, src, dst)
    if dst == src:
        return [src] if host.desc.up else None
    if dst in neighbors(world, src):
        return [src, dst]
    delegate = nearest_full_neighbor(world, src)
    if delegate is None:
        raise ServiceUnavailable(Service.ROUTING.value)
    world.trace(src, "NET", f"op=delegate to={delegate} what=route dst={dst}")
    return shortest_path(world, src, dst)


# -- services --------------------------------------------------------------

def service_call(world, host_id: str, service: Service, request: Any = None):
    host = world.hosts[host_id]
    if not host.desc.up:
        raise Unreachable(f"host {host_id} is down")
    if service not in SERVICE_MATRIX[host.desc.tier]:
        raise ServiceUnavailable(
            service.value, delegate_hint=nearest_full_neighbor(world, host_id))
    if service is Service.CONTEXT_ACCESS:
        return host.store.query(request, world.now)
    if service is Service.CONTEXT_DISTANT:
        remote_id, query = request
        if remote_id not in world.hosts:
            raise Unreachable(f"unknown host {remote_id}")
        if route(world, host_id, remote_id) is None:
            raise Unreachable(f"{remote_id} unreachable from {host_id}")
        world.trace(host_id, "NET",
                    f"op=query to={remote_id} what=context")
        return world.hosts[remote_id].store.query(query, world.now)
    if service is Service.PERSISTENCE:
        host.persist_log.append(f"tick={world.now} {request.trace_repr()}")
        return None
    if service is Service.QOS_MEASURE:
        return world.last_qos
    if service is Service.REFLEXIVITY:
        if host.desc.tier is HostTier.FULL:
            return world.model
        local = ArchitectureModel(version=world.model.version)
        for cid, mc in world.model.components.items():
            if mc.host == host_id:
                local.components[cid] = mc
        return local
    raise ServiceUnavailable(str(service))


def configure(world, host_id: str, cfg: PlatformConfig) -> None:
    world.hosts[host_id].config = cfg


# -- event emission (flow C) -----------------------------------------------

def emit_event(world, e: PlatformEvent, mode: str,
               from_host: Optional[str] = None) -> int:
    """Deliver a platform event to all matching listeners; returns count.

    Modes M1/M3 carry no event flow: nothing is delivered.
    """
    if mode in ("M1", "M3"):
        return 0
    delivered = 0
    for hid in sorted(world.hosts):
        host = world.hosts[hid]
        if not host.desc.up:
            continue
        if from_host is not None and route(world, from_host, hid) is None:
            continue
        for cid in sorted(host.containers):
            c = host.containers[cid]
            if not c.descriptor.listener:
                continue
            sub = host.config.subscriptions.get(cid, Subscription())
            if sub.kinds is not None and e.kind not in sub.kinds:
                continue
            if e.priority < sub.min_priority:
                continue
            if sub.filter is not None and hasattr(e.payload, "validity"):
                from .context import is_valid
                if not is_valid(e.payload, world.now, sub.filter):
                    continue
            if c.deliver_event(e):
                delivered += 1
                world.trace(hid, "EVT",
                            f"event={e.kind.value} prio={e.priority} "
                            f"listener={cid}")
    return delivered


# -- command execution -----------------------------------------------------

def apply(world, cmd, origin: str = "platform",
          forced: bool = False) -> CommandResult:
    """Run one reconfiguration command atomically.

    Platform-originated commands respect the intrusion level; forced
    recovery (component stranded on a dead host) overrides a lock.
    """
    cfg = world.platform_config()
    if origin == "platform" and not forced:
        if cfg.intrusion is IntrusionLevel.LOCKED:
            world.trace(world.coordinator_host or "-", "CMD",
                        f"cmd={_cmd_name(cmd)} {_cmd_args(cmd)} "
                        f"result=Deferred origin={origin}")
            world.deferred_commands.append((None, cmd, origin))
            return DEFERRED
        if cfg.intrusion is IntrusionLevel.GUARDED:
            due = world.now + cfg.defer_window
            world.trace(world.coordinator_host or "-", "CMD",
                        f"cmd={_cmd_name(cmd)} {_cmd_args(cmd)} "
                        f"result=Deferred due={due} origin={origin}")
            world.deferred_commands.append((due, cmd, origin))
            return DEFERRED
    return apply_now(world, cmd, origin)


def apply_now(world, cmd, origin: str = "platform") -> CommandResult:
    checkpoint = world.runtime_snapshot()
    try:
        _execute(world, cmd)
    except _Abort as a:
        world.runtime_restore(checkpoint)
        result = aborted(a.reason)
    except Exception as exc:     # defensive: never leave a half-applied step
        world.runtime_restore(checkpoint)
        result = aborted(f"internal: {exc!r}")
    else:
        _autostart(world)
        world.model.bump()
        result = APPLIED
    world.trace(world.coordinator_host or "-", "CMD",
                f"cmd={_cmd_name(cmd)} {_cmd_args(cmd)} "
                f"result={result.status}"
                + (f" reason={result.reason}" if result.reason else "")
                + f" origin={origin}")
    return result


def _cmd_name(cmd) -> str:
    return type(cmd).__name__


def _cmd_args(cmd) -> str:
    if isinstance(cmd, Add):
        return f"comp={cmd.descriptor.id} host={cmd.host}"
    if isinstance(cmd, Remove):
        return f"comp={cmd.component}"
    if isinstance(cmd, Move):
        return f"comp={cmd.component} target={cmd.target}"
    if isinstance(cmd, Connect):
        return f"conn={cmd.connector} src={cmd.source}"
    if isinstance(cmd, Disconnect):
        return f"conn={cmd.connector}"
    if isinstance(cmd, ReplaceBusiness):
        what = cmd.behavior or cmd.tier
        return f"comp={cmd.component} to={what}"
    return ""


def process_deferred(world) -> None:
    """Run deferred commands whose window elapsed or whose lock lifted."""
    cfg = world.platform_config()
    still = []
    for due, cmd, origin in world.deferred_commands:
        runnable = (cfg.intrusion is IntrusionLevel.OPEN
                    or (due is not None and world.now >= due
                        and cfg.intrusion is not IntrusionLevel.LOCKED))
        if runnable:
            apply_now(world, cmd, origin)
        else:
            still.append((due, cmd, origin))
    world.deferred_commands = still


def _find_component(world, cid: str):
    for hid in sorted(world.hosts):
        if cid in world.hosts[hid].containers:
            return hid, world.hosts[hid].containers[cid]
    return None, None


def _autostart(world) -> None:
    """Connected containers with all ports bound start running."""
    for hid in sorted(world.hosts):
        host = world.hosts[hid]
        if not host.desc.up:
            continue
        for cid in sorted(host.containers):
            c = host.containers[cid]
            if c.lifecycle is Lifecycle.CONNECTED and c.all_ports_bound():
                c.transition(Lifecycle.RUNNING)
            _sync_model_component(world, cid, hid, c)


def _sync_model_component(world, cid, hid, c) -> None:
    world.model.components[cid] = ModelComponent(
        host=hid, tier=c.active_variant.tier,
        behavior=c.active_variant.behavior, lifecycle=c.lifecycle.value)


def _connectors_touching(world, cid: str) -> list:
    out = []
    for kid in sorted(world.connectors):
        k = world.connectors[kid]
        if k.source.component == cid or any(
                s.component == cid for s in k.sinks):
            out.append(k)
    return out


def _execute(world, cmd) -> None:
    if isinstance(cmd, Add):
        _exec_add(world, cmd)
    elif isinstance(cmd, Remove):
        _exec_remove(world, cmd)
    elif isinstance(cmd, Move):
        _exec_move(world, cmd)
    elif isinstance(cmd, Connect):
        _exec_connect(world, cmd)
    elif isinstance(cmd, Disconnect):
        _exec_disconnect(world, cmd)
    elif isinstance(cmd, ReplaceBusiness):
        _exec_replace(world, cmd)
    else:
        raise _Abort(f"unknown command {type(cmd).__name__}")


def _exec_add(world, cmd: Add) -> None:
    if cmd.host not in world.hosts:
        raise _Abort("unknown id")
    host = world.hosts[cmd.host]
    if not host.desc.up:
        raise _Abort("host down")
    cid = cmd.descriptor.id
    if _find_component(world, cid)[0] is not None:
        raise _Abort("duplicate")
    variant = cmd.descriptor.variant_for(host.desc.tier.value)
    if variant is None:
        raise _Abort("variant")
    c = ContainerInstance(cmd.descriptor, host.desc.tier.value)
    c.transition(Lifecycle.CONNECTED)
    host.containers[cid] = c
    world.descriptors[cid] = cmd.descriptor
    _sync_model_component(world, cid, cmd.host, c)


def _exec_remove(world, cmd: Remove) -> None:
    hid, c = _find_component(world, cmd.component)
    if c is None:
        raise _Abort("unknown id")
    if _connectors_touching(world, cmd.component):
        raise _Abort("in use")
    if c.lifecycle is Lifecycle.RUNNING:
        c.transition(Lifecycle.STOPPED)
    if c.lifecycle is Lifecycle.STOPPED:
        c.transition(Lifecycle.DESTROYED)
    elif c.lifecycle is Lifecycle.CONNECTED:
        c.transition(Lifecycle.DESTROYED)
    del world.hosts[hid].containers[cmd.component]
    world.model.components.pop(cmd.component, None)
    world.descriptors.pop(cmd.component, None)


def _exec_move(world, cmd: Move) -> None:
    if cmd.target not in world.hosts:
        raise _Abort("unknown id")
    target = world.hosts[cmd.target]
    if not target.desc.up:
        raise _Abort("host down")
    src_hid, c = _find_component(world, cmd.component)
    if src_hid is None:
        # possibly stranded on a down host: forced recovery path
        for hid in sorted(world.hosts):
            if cmd.component in world.hosts[hid].containers:
                src_hid = hid
                c = world.hosts[hid].containers[cmd.component]
        if c is None:
            raise _Abort("unknown id")
    desc = c.descriptor
    variant = desc.variant_for(target.desc.tier.value)
    if variant is None:
        raise _Abort("variant")
    if src_hid == cmd.target:
        return
    src_up = world.hosts[src_hid].desc.up
    conns = _connectors_touching(world, cmd.component)
    for k in conns:
        k.pause()
    snap = None
    residues: dict = {}
    if src_up:
        if c.lifecycle is Lifecycle.RUNNING:
            c.transition(Lifecycle.STOPPED)
        if c.lifecycle is Lifecycle.STOPPED:
            c.transition(Lifecycle.MIGRATING)
        for k in conns:
            k.begin_drain()
            for sink, samples in k.drain().items():
                if samples:
                    residues[(k.id, sink)] = samples
        snap = c.snapshot()
        path = shortest_path(world, src_hid, cmd.target)
        if path is None:
            raise _Abort("unreachable")
        world.trace(src_hid, "NET",
                    f"op=transfer comp={cmd.component} to={cmd.target} "
                    f"hops={len(path) - 1}")
    new = ContainerInstance(desc, target.desc.tier.value)
    if snap is not None:
        new.restore(snap)
    new.transition(Lifecycle.CONNECTED)
    # carry the flow bindings to the new container
    for k in conns:
        if k.source.component == cmd.component:
            new.output_bindings[k.source.port] = k
        for s in k.sinks:
            if s.component == cmd.component:
                new.input_bindings[s.port] = k
    del world.hosts[src_hid].containers[cmd.component]
    target.containers[cmd.component] = new
    # source-side ownership follows the component's host
    for k in conns:
        if k.source.component == cmd.component:
            world.hosts[src_hid].connector_sources.discard(k.id)
            target.connector_sources.add(k.id)
    for (kid, sink), samples in sorted(
            residues.items(), key=lambda t: (t[0][0], str(t[0][1]))):
        world.connectors[kid].refill(sink, samples, world.now)
    for k in conns:
        k.resume()
    _sync_model_component(world, cmd.component, cmd.target, new)


def _exec_connect(world, cmd: Connect) -> None:
    if cmd.connector in world.connectors:
        raise _Abort("duplicate")
    src_hid, src_c = _find_component(world, cmd.source.component)
    if src_c is None:
        raise _Abort("unknown id")
    if cmd.source.port not in src_c.descriptor.out_ports:
        raise _Abort(f"unknown port {cmd.source}")
    if cmd.source.port in src_c.output_bindings:
        raise _Abort("port in use")
    sink_cs = []
    for s in cmd.sinks:
        hid, c = _find_component(world, s.component)
        if c is None:
            raise _Abort("unknown id")
        if s.port not in c.descriptor.in_ports:
            raise _Abort(f"unknown port {s}")
        if s.port in c.input_bindings:
            raise _Abort("port in use")
        sink_cs.append(c)
    k = world.make_connector(cmd.connector, cmd.source, list(cmd.sinks),
                             cmd.policy)
    world.connectors[cmd.connector] = k
    world.hosts[src_hid].connector_sources.add(cmd.connector)
    src_c.output_bindings[cmd.source.port] = k
    for s, c in zip(cmd.sinks, sink_cs):
        c.input_bindings[s.port] = k
    world.model.connectors[cmd.connector] = ModelConnector(
        source=cmd.source, sinks=tuple(cmd.sinks), policy=cmd.policy)


def _exec_disconnect(world, cmd: Disconnect) -> None:
    k = world.connectors.get(cmd.connector)
    if k is None:
        raise _Abort("unknown id")
    k.disconnect()
    endpoints = [k.source] + list(k.sinks)
    for ep in endpoints:
        hid, c = _find_component(world, ep.component)
        if c is None:
            continue
        c.output_bindings.pop(ep.port, None) if ep == k.source else \
            c.input_bindings.pop(ep.port, None)
        if c.lifecycle is Lifecycle.RUNNING and not c.all_ports_bound():
            c.transition(Lifecycle.STOPPED)
            _sync_model_component(world, ep.component, hid, c)
        world.hosts[hid].connector_sources.discard(cmd.connector)
    del world.connectors[cmd.connector]
    world.model.connectors.pop(cmd.connector, None)


def _exec_replace(world, cmd: ReplaceBusiness) -> None:
    hid, c = _find_component(world, cmd.component)
    if c is None:
        raise _Abort("unknown id")
    if cmd.tier is not None:
        variant = c.descriptor.variant_for(cmd.tier)
        if variant is None:
            raise _Abort("variant")
        c.active_variant = variant
    elif cmd.behavior is not None:
        from . import behaviors
        if cmd.behavior not in behaviors.known():
            raise _Abort("unknown behavior")
        c.active_variant = dc_replace(c.active_variant,
                                      behavior=cmd.behavior)
    else:
        raise _Abort("empty replacement")
    c.state = None
    _sync_model_component(world, cmd.component, hid, c)
