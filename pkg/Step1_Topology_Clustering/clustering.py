# Hello collection at the DODAG root, per-area candidate shortlist, cluster head election and rotation

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from Step1_Topology_Clustering.core_model import NodeId, Position, ROOT_ID, SimConfig, ThingState
from Step1_Topology_Clustering.radio_energy import (RadioConstants, aggregate_distance, distance,
                                                    neighbor_matrix, rssi, tx_energy)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HelloEntry:
    node: NodeId
    e_residual: float
    position: Position


@dataclass(frozen=True)
class HelloLedger:
    '''
        what the root learned from the hello round: one entry per alive, reachable thing,
        the ids that could not reach it and the tx energy every sender spent
    '''
    root_position: Position
    entries: Mapping[NodeId, HelloEntry]
    unreachable: FrozenSet[NodeId] = frozenset()
    debits: Mapping[NodeId, float] = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class Candidate:
    node: NodeId
    e_residual: float
    sum_distance: float
    mean_rssi: float


@dataclass(frozen=True)
class ClusterAssignment:
    head: NodeId
    members: FrozenSet[NodeId]
    area_index: int = 0

    def __post_init__(self):
        if self.head in self.members:
            raise ValueError(f'cluster head {self.head} listed among its own members')


@dataclass(frozen=True)
class GridPartition:
    '''
        uniform g x g grid over the deployment rectangle, cells numbered row-major
    '''
    g: int
    width: float
    height: float

    @classmethod
    def from_config(cls, cfg: SimConfig) -> 'GridPartition':
        g = cfg.grid_size or max(1, round(math.sqrt(cfg.n_nodes / cfg.nodes_per_cell)))
        return cls(g, cfg.area_width, cfg.area_height)

    @property
    def cells(self) -> int:
        return self.g * self.g

    def cell_of(self, pos: Position) -> int:
        col = min(self.g - 1, max(0, int(pos.x / self.width * self.g)))
        row = min(self.g - 1, max(0, int(pos.y / self.height * self.g)))
        return row * self.g + col


def reachable_from_root(nodes: Sequence[ThingState], tx_range: float,
                        dist: Optional[np.ndarray] = None,
                        excluded: Iterable[NodeId] = ()) -> FrozenSet[NodeId]:
    '''
        ids connected to the root through alive things within radio range (root included)
    '''
    if dist is None:
        dist = neighbor_matrix([n.position for n in nodes])
    blocked = set(excluded)
    usable = [n.alive and n.node_id not in blocked for n in nodes]
    seen = {ROOT_ID}
    queue = deque([ROOT_ID])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(dist[u] <= tx_range).tolist():
            if v not in seen and usable[v]:
                seen.add(v)
                queue.append(v)
    return frozenset(seen)


def collect_hello(nodes: Sequence[ThingState], cfg: SimConfig, rc: Optional[RadioConstants] = None,
                  dist: Optional[np.ndarray] = None) -> HelloLedger:
    if rc is None:
        rc = RadioConstants.from_config(cfg)
    if dist is None:
        dist = neighbor_matrix([n.position for n in nodes])
    reachable = reachable_from_root(nodes, cfg.tx_range, dist)
    root = nodes[ROOT_ID]

    entries, unreachable, debits = {}, set(), {}
    for n in nodes:
        if n.is_root or not n.alive:
            continue
        debits[n.node_id] = tx_energy(cfg.control_size * 8, float(dist[n.node_id, ROOT_ID]), rc)
        if n.node_id in reachable:
            entries[n.node_id] = HelloEntry(n.node_id, n.energy.e_residual, n.position)
        else:
            unreachable.add(n.node_id)
    if unreachable:
        logger.warning('%d things can not reach the root and are left out of clustering',
                       len(unreachable))
    logger.info('Hello round: %d entries at the root', len(entries))
    return HelloLedger(root.position, entries, frozenset(unreachable), debits)


def _mean_rssi(pos: Position, neighbors: Sequence[Position], rc: RadioConstants, tx_range: float) -> float:
    values = [rssi(d, rc) for d in (distance(pos, p) for p in neighbors) if d > 0]
    if not values:
        return rssi(tx_range, rc)
    return float(np.mean(values))


def shortlist_candidates(ledger: HelloLedger, areas: GridPartition, top_i: int,
                         rc: Optional[RadioConstants] = None,
                         tx_range: float = 60.0) -> Dict[int, List[Candidate]]:
    '''
        the top_i highest-energy things of every non-empty grid cell, with their
        aggregate distance and mean RSSI over in-range neighbours (root included)
    '''
    if not ledger.entries:
        raise ValueError('hello ledger is empty')
    if rc is None:
        rc = RadioConstants()
    by_cell: Dict[int, List[HelloEntry]] = {}
    for entry in ledger.entries.values():
        by_cell.setdefault(areas.cell_of(entry.position), []).append(entry)

    everyone = [(ROOT_ID, ledger.root_position)] + [(e.node, e.position) for e in ledger.entries.values()]
    shortlist = {}
    for cell in sorted(by_cell):
        ranked = sorted(by_cell[cell], key=lambda e: (-e.e_residual, e.node))[:top_i]
        cands = []
        for entry in ranked:
            neighbors = [p for v, p in everyone
                         if v != entry.node and distance(entry.position, p) <= tx_range]
            cands.append(Candidate(
                node=entry.node,
                e_residual=entry.e_residual,
                sum_distance=aggregate_distance(entry.node, neighbors, entry.position),
                mean_rssi=_mean_rssi(entry.position, neighbors, rc, tx_range),
            ))
        shortlist[cell] = cands
    return shortlist


def _min_max(values: np.ndarray) -> np.ndarray:
    span = values.max() - values.min()
    if span == 0:
        return np.zeros_like(values)
    return (values - values.min()) / span


def election_scores(cands: Sequence[Candidate],
                    weights: Tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)) -> np.ndarray:
    w_e, w_r, w_d = weights
    energy = _min_max(np.array([c.e_residual for c in cands], dtype=float))
    signal = _min_max(np.array([c.mean_rssi for c in cands], dtype=float))
    spread = _min_max(np.array([c.sum_distance for c in cands], dtype=float))
    return w_e * energy + w_r * signal - w_d * spread


def elect_cluster_head(cands: Sequence[Candidate],
                       weights: Tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)) -> NodeId:
    if not cands:
        raise ValueError('can not elect a cluster head from an empty candidate list')
    scores = election_scores(cands, weights)
    best = max(range(len(cands)), key=lambda i: (scores[i], -cands[i].node))
    return cands[best].node


def elect_heads(ledger: HelloLedger, cfg: SimConfig, rc: Optional[RadioConstants] = None) -> List[NodeId]:
    '''
        one elected head per non-empty area
    '''
    areas = GridPartition.from_config(cfg)
    shortlist = shortlist_candidates(ledger, areas, cfg.top_i, rc or RadioConstants.from_config(cfg),
                                     cfg.tx_range)
    weights = (cfg.w_energy, cfg.w_rssi, cfg.w_distance)
    heads = sorted(elect_cluster_head(c, weights) for c in shortlist.values() if c)
    logger.info('Elected %d cluster heads over a %dx%d grid', len(heads), areas.g, areas.g)
    return heads


def assign_members(heads: Sequence[NodeId], ledger: HelloLedger,
                   areas: Optional[GridPartition] = None) -> List[ClusterAssignment]:
    '''
        every reachable non-head joins the nearest elected head, ties to the lowest head id
    '''
    if not heads:
        return []
    members: Dict[NodeId, set] = {h: set() for h in heads}
    ordered = sorted(heads)
    for node, entry in sorted(ledger.entries.items()):
        if node in members:
            continue
        nearest = min(ordered, key=lambda h: (distance(entry.position, ledger.entries[h].position), h))
        members[nearest].add(node)
    return [ClusterAssignment(h, frozenset(members[h]),
                              areas.cell_of(ledger.entries[h].position) if areas else 0)
            for h in ordered]


def needs_rotation(cluster: ClusterAssignment, states: Mapping[NodeId, ThingState], cfg: SimConfig,
                   ineligible: FrozenSet[NodeId] = frozenset()) -> bool:
    head = states[cluster.head]
    if not head.alive or cluster.head in ineligible:
        return True
    return head.energy.e_residual < cfg.ch_energy_floor * head.energy.e_initial


def rotate_cluster_head(cluster: ClusterAssignment, states: Mapping[NodeId, ThingState], cfg: SimConfig,
                        ineligible: FrozenSet[NodeId] = frozenset()) -> Optional[ClusterAssignment]:
    '''
        hand the head role to the member with most residual energy, then lowest rank,
        then lowest id; ineligible holds detained and supervised things.
        Returns None when the cluster dissolves.
    '''
    if not needs_rotation(cluster, states, cfg, ineligible):
        return cluster

    eligible = [states[m] for m in cluster.members
                if states[m].alive and m not in ineligible]
    if not eligible:
        if states[cluster.head].alive and cluster.head not in ineligible:
            return cluster
        logger.info('Cluster of head %d dissolved, no eligible member left', cluster.head)
        return None

    def key(t: ThingState):
        rank = t.rank if t.rank is not None else math.inf
        return (t.energy.e_residual, -rank, -t.node_id)

    new_head = max(eligible, key=key).node_id
    members = {m for m in cluster.members if m != new_head}
    if states[cluster.head].alive:
        members.add(cluster.head)
    logger.info('Cluster head rotated from %d to %d', cluster.head, new_head)
    return ClusterAssignment(new_head, frozenset(members), cluster.area_index)


def clusters_from_dodag(dodag, area_index: Mapping[NodeId, int] = None) -> List[ClusterAssignment]:
    '''
        regroup the ranked things by the head their upward route passes through
    '''
    area_index = area_index or {}
    groups: Dict[NodeId, set] = {h: set() for h in dodag.heads}
    for node, head in dodag.cluster_of.items():
        if node != head:
            groups.setdefault(head, set()).add(node)
    return [ClusterAssignment(h, frozenset(groups[h]), area_index.get(h, 0)) for h in sorted(groups)]
