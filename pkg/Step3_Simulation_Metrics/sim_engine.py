# Deterministic discrete-event core: clock, event queue, range-gated delivery, traffic and detection loop

import dataclasses
import heapq
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd

from Step1_Topology_Clustering.clustering import (ClusterAssignment, GridPartition, assign_members,
                                                  clusters_from_dodag, collect_hello, elect_heads,
                                                  rotate_cluster_head)
from Step1_Topology_Clustering.core_model import (BROADCAST, ROOT_ID, STREAM_CHANNEL, STREAM_TRAFFIC,
                                                  DataPayload, Message, MessageKind, NodeId, ProbePayload,
                                                  ReleasePayload, Role, SimConfig, ThingState,
                                                  build_topology, spawn_streams)
from Step1_Topology_Clustering.dodag import Dodag, build_dodag, dodag_edges, repair_dodag, route_upward
from Step1_Topology_Clustering.radio_energy import RadioConstants, neighbor_matrix, rx_energy, tx_energy
from Step2_Attack_Detection.aco_detection import ClusterView, emit_warning
from Step2_Attack_Detection.attack_model import AttackerProfile, periodic_times
from Step2_Attack_Detection.quarantine import DetentionList, DetentionState, RttEstimate, detain, supervise
from Step3_Simulation_Metrics.metrics import DeliveryCounts, RunMetrics, confusion_counts

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ['time', 'kind', 'src', 'dst', 'outcome']
DETECTION_COLUMNS = ['time', 'head', 'members', 'counts', 'probabilities', 'threshold', 'accused']
DETENTION_COLUMNS = ['time', 'accused', 'theta', 'transition']
DODAG_COLUMNS = ['node', 'parent', 'rank']
FLOAT_FORMAT = '%.6g'


class EventKind(Enum):
    SEND_MESSAGE = 'SendMessage'
    DELIVER_MESSAGE = 'DeliverMessage'
    WINDOW_CLOSE = 'WindowClose'
    DETENTION_EXPIRY = 'DetentionExpiry'
    PROBE_TIMER = 'ProbeTimer'
    CBR_TICK = 'CbrTick'
    FLOOD_TICK = 'FloodTick'
    ROTATION_CHECK = 'RotationCheck'


class Outcome(Enum):
    DELIVERED = 'delivered'
    OUT_OF_RANGE = 'out_of_range'
    SENDER_DEAD = 'sender_dead'
    RECEIVER_DEAD = 'receiver_dead'
    LOST = 'lost'
    DETAINED = 'detained'
    CONGESTION = 'congestion'
    NO_ROUTE = 'no_route'


@dataclass(frozen=True, order=True)
class Event:
    at: float
    seq: int
    kind: EventKind = field(compare=False)
    data: Any = field(default=None, compare=False)


@dataclass
class Clock:
    now: float = 0.0

    def advance(self, to: float) -> None:
        if to < self.now:
            raise RuntimeError(f'clock can not run backwards ({to} < {self.now})')
        self.now = to


@dataclass
class Transit:
    '''
        a message on its way: the hops still ahead and the thing that originated it
    '''
    msg: Message
    path: Tuple[NodeId, ...]
    origin: NodeId
    index: int = 0
    logical: bool = False


@dataclass
class SimulationResult:
    config: SimConfig
    metrics: RunMetrics
    trace: pd.DataFrame
    detections: pd.DataFrame
    detentions: pd.DataFrame
    dodag: pd.DataFrame

    def trace_csv(self) -> str:
        return self.trace.to_csv(index=False, float_format=FLOAT_FORMAT)


def _label(msg: Message) -> str:
    return 'Flood' if msg.is_flood else msg.kind.value


class Simulation:
    '''
        one run: topology, hello round, election and DODAG at t = 0, then the
        steady-state loop of traffic, detection windows, quarantine and rotation
    '''

    def __init__(self, cfg: SimConfig, record_trace: bool = True,
                 things: Optional[Sequence[ThingState]] = None):
        self.cfg = cfg
        self.rc = RadioConstants.from_config(cfg)
        self.record_trace = record_trace
        streams = spawn_streams(cfg.rng_seed)
        self.traffic_rng = streams[STREAM_TRAFFIC]
        self.channel_rng = streams[STREAM_CHANNEL]

        self.things: List[ThingState] = list(things) if things is not None else build_topology(cfg)
        self.n = len(self.things)
        self.dist = neighbor_matrix([t.position for t in self.things])
        self.attackers = frozenset(t.node_id for t in self.things if t.is_attacker)
        self.consumed = np.zeros(self.n)
        self.dead: Set[NodeId] = set()

        self.clock = Clock()
        self._queue: List[Event] = []
        self._seq = 0
        self._msg_id = 0

        self.areas = GridPartition.from_config(cfg)
        self.area_of: Dict[NodeId, int] = {}
        self.clusters: List[ClusterAssignment] = []
        self.dodag: Optional[Dodag] = None
        self.views: Dict[NodeId, ClusterView] = {}
        self._routes: Dict[NodeId, Tuple[NodeId, ...]] = {}

        self.detention = DetentionList()
        self.rtt = RttEstimate(cfg.rtt_prior)
        self._pending_warnings: List[Tuple[NodeId, NodeId]] = []
        self._retry_warnings: List[Tuple[NodeId, NodeId]] = []
        self._lost: Set[NodeId] = set()
        self._reattach = False
        self._check_scheduled = False

        self.rx_load: Counter = Counter()
        self._rx_second = 0
        self.ledger_total = 0.0
        self.ledger_by_cause: Counter = Counter()
        self.sent: Counter = Counter()
        self.delivered: Counter = Counter()
        self.dropped: Counter = Counter()
        self.drop_reasons: Counter = Counter()
        self.rotations = 0
        self.accusations = 0
        self.ever_accused: Set[NodeId] = set()

        self.trace_rows: List[tuple] = []
        self.detection_rows: List[tuple] = []

    # ---- queue ----

    def schedule(self, at: float, kind: EventKind, data: Any = None) -> None:
        self._seq += 1
        heapq.heappush(self._queue, Event(at, self._seq, kind, data))

    def _events(self) -> Iterator[Event]:
        while self._queue:
            event = heapq.heappop(self._queue)
            self.clock.advance(event.at)
            yield event

    def _message(self, kind: MessageKind, src: NodeId, dst: NodeId, size: int, payload=None) -> Message:
        self._msg_id += 1
        return Message(kind, src, dst, size, self.clock.now, payload, self._msg_id)

    def _trace(self, kind: str, src: NodeId, dst: NodeId, outcome: str) -> None:
        if self.record_trace:
            self.trace_rows.append((self.clock.now, kind, src, dst, outcome))

    # ---- energy ----

    def alive(self, node: NodeId) -> bool:
        return node == ROOT_ID or node not in self.dead

    def residual(self, node: NodeId) -> float:
        return max(0.0, self.cfg.initial_energy - self.consumed[node])

    def _debit(self, node: NodeId, joules: float, cause: str) -> None:
        self.consumed[node] += joules
        self.ledger_total += joules
        self.ledger_by_cause[cause] += joules
        if node != ROOT_ID and node not in self.dead and self.consumed[node] >= self.cfg.initial_energy:
            self.dead.add(node)
            logger.info('t=%.6g thing %d ran out of energy', self.clock.now, node)
            self._lost.add(node)
            self._request_check()

    def snapshot(self) -> List[ThingState]:
        '''
            current ThingState of every thing, built from the engine's mutable tallies
        '''
        heads = set(self.dodag.heads) if self.dodag else set()
        states = []
        for t in self.things:
            role = t.role if t.is_root else (Role.CLUSTER_HEAD if t.node_id in heads else Role.MEMBER)
            rank = self.dodag[t.node_id].rank if self.dodag and t.node_id in self.dodag else None
            states.append(dataclasses.replace(
                t, role=role, rank=rank,
                energy=dataclasses.replace(t.energy, e_consumed=float(self.consumed[t.node_id])),
                detention=self.detention.get(t.node_id)))
        return states

    # ---- channel ----

    def deliver(self, msg: Message, hop: Tuple[NodeId, NodeId], origin: Optional[NodeId] = None,
                logical: bool = False) -> Outcome:
        '''
            one hop of msg: the sender pays tx whenever the message enters the channel,
            the receiver pays rx only when it accepts it
        '''
        sender, receiver = hop
        origin = msg.src if origin is None else origin
        label = _label(msg)
        if not self.alive(sender):
            return self._hop_result(label, hop, Outcome.SENDER_DEAD)

        d = float(self.dist[sender, receiver])
        self._debit(sender, tx_energy(msg.bits, d, self.rc), 'tx')
        if not logical and d > self.cfg.tx_range:
            return self._hop_result(label, hop, Outcome.OUT_OF_RANGE)
        if self.cfg.loss_prob > 0 and self.channel_rng.random() < self.cfg.loss_prob:
            return self._hop_result(label, hop, Outcome.LOST)
        if not self.alive(receiver):
            return self._hop_result(label, hop, Outcome.RECEIVER_DEAD)

        view = self.views.get(receiver)
        if view is not None and msg.kind is MessageKind.DATA and msg.dst == receiver:
            view.record(msg, origin)
        if self.detention.is_rejecting(origin) or self.detention.is_rejecting(sender):
            return self._hop_result(label, hop, Outcome.DETAINED)
        if receiver != ROOT_ID and self.cfg.rx_capacity:
            second = int(self.clock.now)
            if second != self._rx_second:
                # only the current second's load is kept
                self.rx_load.clear()
                self._rx_second = second
            if self.rx_load[receiver] >= self.cfg.rx_capacity:
                return self._hop_result(label, hop, Outcome.CONGESTION)
            self.rx_load[receiver] += 1
        self._debit(receiver, rx_energy(msg.bits, self.rc), 'rx')
        return self._hop_result(label, hop, Outcome.DELIVERED)

    def _hop_result(self, label: str, hop: Tuple[NodeId, NodeId], outcome: Outcome) -> Outcome:
        self._trace(label, hop[0], hop[1], outcome.value)
        return outcome

    def _delay(self, hop: Tuple[NodeId, NodeId]) -> float:
        return float(self.dist[hop]) / self.cfg.prop_speed + self.cfg.processing_delay

    def send(self, msg: Message, path: Sequence[NodeId], origin: Optional[NodeId] = None,
             logical: bool = False) -> None:
        label = _label(msg)
        self.sent[label] += 1
        origin = msg.src if origin is None else origin
        if not path:
            self._end(label, Outcome.NO_ROUTE)
            self._trace(label, msg.src, msg.dst, Outcome.NO_ROUTE.value)
            return
        self._hop(Transit(msg, tuple(path), origin, 0, logical), msg.src)

    def post(self, msg: Message, path: Sequence[NodeId], logical: bool = False) -> None:
        # queued behind the event being handled
        self.schedule(self.clock.now, EventKind.SEND_MESSAGE, (msg, tuple(path), logical))

    def _hop(self, transit: Transit, sender: NodeId) -> None:
        receiver = transit.path[transit.index]
        outcome = self.deliver(transit.msg, (sender, receiver), transit.origin, transit.logical)
        if outcome is Outcome.DELIVERED:
            self.schedule(self.clock.now + self._delay((sender, receiver)), EventKind.DELIVER_MESSAGE, transit)
        else:
            self._end(_label(transit.msg), outcome)
            if transit.msg.kind is MessageKind.WARNING:
                self._warning_lost(transit.msg)

    def _end(self, label: str, outcome: Outcome) -> None:
        if outcome is Outcome.DELIVERED:
            self.delivered[label] += 1
        else:
            self.dropped[label] += 1
            self.drop_reasons[outcome.value] += 1

    def _on_deliver(self, transit) -> None:
        if transit.path == (BROADCAST,):
            self._on_broadcast(transit.msg)
            return
        here = transit.path[transit.index]
        if transit.index + 1 < len(transit.path):
            transit.index += 1
            self._hop(transit, here)
            return
        self._end(_label(transit.msg), Outcome.DELIVERED)
        self._arrive(transit.msg, here)

    def _arrive(self, msg: Message, at: NodeId) -> None:
        if msg.kind is MessageKind.PROBE:
            ack = self._message(MessageKind.ACK, ROOT_ID, msg.src, self.cfg.control_size, msg.payload)
            self.post(ack, [msg.src], logical=True)
        elif msg.kind is MessageKind.ACK:
            self.rtt = self.rtt.add(self.clock.now - msg.payload.probe_sent_at)
        elif msg.kind in (MessageKind.WARNING, MessageKind.RELEASE):
            self._root_broadcast(msg)

    # ---- root broadcast ----

    def _root_broadcast(self, upward: Message) -> None:
        msg = self._message(upward.kind, ROOT_ID, BROADCAST, self.cfg.control_size, upward.payload)
        label = _label(msg)
        self.sent[label] += 1
        heads = [h for h in self.dodag.heads if self.alive(h)] if self.dodag else []
        if not heads:
            self._end(label, Outcome.RECEIVER_DEAD)
            self._trace(label, ROOT_ID, BROADCAST, Outcome.RECEIVER_DEAD.value)
            return
        reach = max(float(self.dist[ROOT_ID, h]) for h in heads)
        self._debit(ROOT_ID, tx_energy(msg.bits, reach, self.rc), 'tx')
        for h in heads:
            self._debit(h, rx_energy(msg.bits, self.rc), 'rx')
        self._trace(label, ROOT_ID, BROADCAST, 'broadcast')
        delay = reach / self.cfg.prop_speed + self.cfg.processing_delay
        self.schedule(self.clock.now + delay, EventKind.DELIVER_MESSAGE,
                      Transit(msg, (BROADCAST,), ROOT_ID, 0, True))

    def _on_broadcast(self, msg: Message) -> None:
        self._end(_label(msg), Outcome.DELIVERED)
        if msg.kind is MessageKind.WARNING:
            accused = msg.payload.accused
            if not self.alive(accused):
                return
            entry = self.detention.install(detain(accused, self.clock.now, self.rtt))
            if entry.state is not DetentionState.DETAINED:
                return
            if entry.detained_at == self.clock.now and entry.release_due <= self.cfg.sim_duration:
                self.schedule(entry.release_due, EventKind.DETENTION_EXPIRY, accused)
            self._lost.add(accused)
            self._request_check()
        elif msg.kind is MessageKind.RELEASE:
            logger.debug('t=%.6g release of %d known network-wide', self.clock.now, msg.payload.released)

    def _warning_lost(self, msg: Message) -> None:
        pair = (msg.src, msg.payload.accused)
        if pair in self._pending_warnings:
            self._pending_warnings.remove(pair)
            self._retry_warnings.append(pair)

    # ---- topology maintenance ----

    def _request_check(self) -> None:
        if not self._check_scheduled:
            self._check_scheduled = True
            self.schedule(self.clock.now, EventKind.ROTATION_CHECK)

    def _apply_dodag(self, dodag: Dodag) -> None:
        for dio in dodag.dios:
            self._broadcast_dio(dio.sender)
        self.dodag = dodag
        self._routes = {}
        self.clusters = clusters_from_dodag(dodag, self.area_of)
        old = self.views
        self.views = {}
        for c in self.clusters:
            view = ClusterView(c.head, tuple(c.members))
            previous = old.get(c.head)
            if previous is not None:
                for m in view.members:
                    view.entries[m].n_t = previous.count(m)
            self.views[c.head] = view

    def _broadcast_dio(self, sender: NodeId) -> None:
        self.sent['DIO'] += 1
        if not self.alive(sender):
            self._end('DIO', Outcome.SENDER_DEAD)
            return
        bits = self.cfg.control_size * 8
        self._debit(sender, tx_energy(bits, self.cfg.tx_range, self.rc), 'dio')
        hearers = [v for v in np.flatnonzero(self.dist[sender] <= self.cfg.tx_range).tolist()
                   if v != sender and self.alive(v)]
        for v in hearers:
            self._debit(v, rx_energy(bits, self.rc), 'dio')
        self._end('DIO', Outcome.DELIVERED if hearers else Outcome.OUT_OF_RANGE)
        self._trace('DIO', sender, BROADCAST, 'broadcast')

    def _rebuild(self, clusters: Sequence[ClusterAssignment]) -> None:
        dodag = build_dodag([c.head for c in clusters], self.snapshot(), self.cfg.tx_range,
                            clusters=clusters, leaf_only=self.detention.rejecting(), dist=self.dist)
        self._apply_dodag(dodag)

    def _on_rotation_check(self) -> None:
        self._check_scheduled = False
        if self.dodag is None:
            return
        states = {t.node_id: t for t in self.snapshot()}
        blocked = frozenset(self.detention.blocked())
        kept, changed = [], False
        for cluster in self.clusters:
            rotated = rotate_cluster_head(cluster, states, self.cfg, blocked)
            if rotated is None or rotated.head != cluster.head:
                changed = True
                self.rotations += 1
            if rotated is not None:
                kept.append(rotated)
                self.area_of[rotated.head] = rotated.area_index
        if changed:
            self._lost.clear()
            self._reattach = False
            self._rebuild(kept)
        elif self._lost or self._reattach:
            lost = sorted(self._lost)
            self._lost.clear()
            self._reattach = False
            dodag = repair_dodag(self.dodag, lost, self.snapshot(), self.cfg.tx_range,
                                 leaf_only=self.detention.rejecting(), dist=self.dist)
            self._apply_dodag(dodag)

    def route(self, node: NodeId) -> Tuple[NodeId, ...]:
        '''
            hops from node to its collection point: the cluster head for members,
            the root for heads; empty when node has no route
        '''
        if node in self._routes:
            return self._routes[node]
        path: Tuple[NodeId, ...] = ()
        if self.dodag is not None and node in self.dodag and node != ROOT_ID:
            if node in self.dodag.heads:
                path = (ROOT_ID,)
            else:
                head = self.dodag.cluster_of.get(node)
                chain = route_upward(node, self.dodag)
                if head in chain:
                    path = tuple(chain[:chain.index(head) + 1])
        self._routes[node] = path
        return path

    # ---- phases ----

    def _form_network(self) -> None:
        states = self.snapshot()
        ledger = collect_hello(states, self.cfg, self.rc, self.dist)
        for node, joules in sorted(ledger.debits.items()):
            self.sent['Hello'] += 1
            self._debit(node, joules, 'hello')
            if node in ledger.entries:
                self._debit(ROOT_ID, rx_energy(self.cfg.control_size * 8, self.rc), 'hello')
                self._end('Hello', Outcome.DELIVERED)
            else:
                self._end('Hello', Outcome.OUT_OF_RANGE)
        if not ledger.entries:
            logger.warning('No thing reached the root, the network stays unformed')
            return
        heads = elect_heads(ledger, self.cfg, self.rc)
        self.clusters = assign_members(heads, ledger, self.areas)
        self.area_of = {c.head: c.area_index for c in self.clusters}
        self._rebuild(self.clusters)
        logger.info('Network formed: %d clusters, %d ranked things', len(self.clusters), len(self.dodag))

    def _schedule_traffic(self) -> None:
        cfg = self.cfg
        profile = AttackerProfile.from_config(cfg)
        for node in range(1, self.n):
            start = float(self.traffic_rng.uniform(0.0, cfg.cbr_interval))
            gen = periodic_times(start, cfg.cbr_interval, cfg.sim_duration, cfg.jitter, self.traffic_rng)
            self._next_tick(EventKind.CBR_TICK, node, gen)
            if node in self.attackers:
                gen = periodic_times(profile.active_from, profile.flood_interval, cfg.sim_duration,
                                     cfg.jitter, self.traffic_rng)
                self._next_tick(EventKind.FLOOD_TICK, node, gen)

        k = 1
        while k * cfg.detection_window <= cfg.sim_duration:
            self.schedule(k * cfg.detection_window, EventKind.WINDOW_CLOSE)
            k += 1
        for t in periodic_times(cfg.probe_interval / 2.0, cfg.probe_interval, cfg.sim_duration):
            self.schedule(t, EventKind.PROBE_TIMER)

    def _next_tick(self, kind: EventKind, node: NodeId, gen: Iterator[float]) -> None:
        at = next(gen, None)
        if at is not None:
            self.schedule(at, kind, (node, gen))

    def _on_cbr_tick(self, node: NodeId) -> None:
        if not self.alive(node):
            return
        if self.dodag is not None and node in self.dodag.heads:
            msg = self._message(MessageKind.DATA, node, ROOT_ID, self.cfg.packet_size, DataPayload())
            self.send(msg, [ROOT_ID], logical=True)
            return
        if node in self.attackers:
            # an attacker member only floods
            return
        path = self.route(node)
        dst = path[-1] if path else ROOT_ID
        msg = self._message(MessageKind.DATA, node, dst, self.cfg.packet_size, DataPayload())
        self.send(msg, path)

    def _on_flood_tick(self, node: NodeId) -> None:
        if not self.alive(node) or (self.dodag is not None and node in self.dodag.heads):
            return
        path = self.route(node)
        dst = path[-1] if path else ROOT_ID
        msg = self._message(MessageKind.DATA, node, dst, self.cfg.flood_size, DataPayload(flood=True))
        self.send(msg, path)

    def _on_probe_timer(self) -> None:
        if self.dodag is None:
            return
        for h in self.dodag.heads:
            if self.alive(h):
                probe = self._message(MessageKind.PROBE, h, ROOT_ID, self.cfg.control_size,
                                      ProbePayload(self.clock.now))
                self.send(probe, [ROOT_ID], logical=True)

    def _send_warning(self, head: NodeId, accused: NodeId, retry: bool) -> None:
        msg = emit_warning(accused, head, self.clock.now, self.cfg.control_size, self._msg_id + 1)
        self._msg_id += 1
        if not retry:
            self._pending_warnings.append((head, accused))
        self.send(msg, [ROOT_ID], logical=True)

    def _conclude_supervision(self, now: float) -> None:
        blocked = self.detention.blocked()
        for node in self.detention.under_supervision():
            entry = self.detention.get(node)
            if entry.supervised_from >= now:
                continue
            head = self.dodag.cluster_of.get(node) if self.dodag else None
            view = self.views.get(head)
            peers = {}
            if view is not None:
                peers = {m: view.count(m) for m in view.members if m not in blocked}
            outcome = supervise(entry, view.count(node) if view else 0, self.cfg,
                                peer_counts=peers, now=now, rtt=self.rtt, alive=self.alive(node))
            self.detention.conclude(node, outcome, now)
            if outcome is None:
                continue
            if outcome.state is DetentionState.RELEASED:
                self._reattach = True
                self._request_check()
                if head is not None and self.alive(head):
                    notice = self._message(MessageKind.RELEASE, head, ROOT_ID, self.cfg.control_size,
                                           ReleasePayload(node))
                    self.post(notice, [ROOT_ID], logical=True)
            else:
                if outcome.release_due <= self.cfg.sim_duration:
                    self.schedule(outcome.release_due, EventKind.DETENTION_EXPIRY, node)
                self._lost.add(node)
                self._request_check()

    def _on_window_close(self) -> None:
        now = self.clock.now
        if self.cfg.detection_enabled:
            self._conclude_supervision(now)
            retries, self._retry_warnings = self._retry_warnings, []
            self._pending_warnings = []
            blocked = self.detention.blocked()
            for head in sorted(self.views):
                if not self.alive(head):
                    continue
                view = self.views[head]
                verdict = view.close_window(self.cfg, exclude=blocked)
                self.detection_rows.append((
                    now, head,
                    ' '.join(str(s.member) for s in verdict.scores),
                    ' '.join(str(s.n_t) for s in verdict.scores),
                    ' '.join(f'{s.probability:.6g}' for s in verdict.scores),
                    verdict.threshold,
                    -1 if verdict.accused is None else verdict.accused,
                ))
                if verdict.accused is not None:
                    self.accusations += 1
                    self.ever_accused.add(verdict.accused)
                    self._trace('WindowClose', head, verdict.accused, 'accused')
                    self._send_warning(head, verdict.accused, retry=False)
            for head, accused in retries:
                if self.alive(head) and not self.detention.is_rejecting(accused):
                    self._send_warning(head, accused, retry=True)
            if self.detention.start_supervision(now):
                self._reattach = True
        for view in self.views.values():
            view.reset()
        self._request_check()

    def run(self) -> SimulationResult:
        self._form_network()
        self._schedule_traffic()
        handlers = {
            EventKind.SEND_MESSAGE: lambda data: self.send(data[0], data[1], logical=data[2]),
            EventKind.DELIVER_MESSAGE: lambda data: self._on_deliver(data),
            EventKind.WINDOW_CLOSE: lambda data: self._on_window_close(),
            EventKind.DETENTION_EXPIRY: lambda data: self.detention.expire(data, self.clock.now),
            EventKind.PROBE_TIMER: lambda data: self._on_probe_timer(),
            EventKind.ROTATION_CHECK: lambda data: self._on_rotation_check(),
        }
        for event in self._events():
            if event.kind in (EventKind.CBR_TICK, EventKind.FLOOD_TICK):
                node, gen = event.data
                if event.kind is EventKind.CBR_TICK:
                    self._on_cbr_tick(node)
                else:
                    self._on_flood_tick(node)
                self._next_tick(event.kind, node, gen)
            else:
                handlers[event.kind](event.data)
        return self._result()

    # ---- results ----

    def tallies(self) -> Dict[str, Dict[str, int]]:
        labels = sorted(set(self.sent) | set(self.delivered) | set(self.dropped))
        return {k: {'sent': self.sent[k], 'delivered': self.delivered[k], 'dropped': self.dropped[k]}
                for k in labels}

    def _result(self) -> SimulationResult:
        cfg = self.cfg
        # a thing counts as accused from the head's verdict on, whether or not the warning got through
        accused = self.ever_accused | self.detention.ever_detained if cfg.detection_enabled else set()
        confusion = confusion_counts(range(1, self.n), self.attackers, accused)
        delivery = DeliveryCounts(self.sent['Data'], self.delivered['Data'])
        metrics = RunMetrics(confusion, delivery, self.tallies(), len(self.dead), self.rotations,
                             self.accusations, float(self.consumed.sum()))
        logger.info('Run done: seed %d, PDR %s, DR %s, FPR %s, FNR %s', cfg.rng_seed,
                    *(('n/a' if v is None else f'{v:.2f}') for v in metrics.rates().values()))
        return SimulationResult(
            config=cfg,
            metrics=metrics,
            trace=pd.DataFrame(self.trace_rows, columns=TRACE_COLUMNS),
            detections=pd.DataFrame(self.detection_rows, columns=DETECTION_COLUMNS),
            detentions=pd.DataFrame(self.detention.audit, columns=DETENTION_COLUMNS),
            dodag=pd.DataFrame(dodag_edges(self.dodag) if self.dodag else [], columns=DODAG_COLUMNS),
        )


def run(cfg: SimConfig, record_trace: bool = True) -> SimulationResult:
    return Simulation(cfg, record_trace).run()
