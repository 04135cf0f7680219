# DODAG construction by DIO propagation, upward routes and local repair

import logging
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np

from Step1_Topology_Clustering.clustering import ClusterAssignment
from Step1_Topology_Clustering.core_model import NodeId, ROOT_ID, ThingState
from Step1_Topology_Clustering.radio_energy import neighbor_matrix

logger = logging.getLogger(__name__)


class NoRouteError(LookupError):
    pass


@dataclass(frozen=True)
class RankedNode:
    node: NodeId
    rank: int
    parent: Optional[NodeId] = None


@dataclass(frozen=True)
class DioMessage:
    sender: NodeId
    sender_rank: int


class Dodag(Mapping):
    '''
        immutable snapshot: NodeId -> RankedNode for every ranked thing, plus the DIOs
        sent while building it, the things left unranked and the head each ranked
        thing routes through
    '''

    def __init__(self, ranked: Dict[NodeId, RankedNode], heads: Sequence[NodeId],
                 cluster_of: Dict[NodeId, NodeId], dios: Sequence[DioMessage],
                 unranked: Iterable[NodeId]):
        self._ranked = dict(ranked)
        self.heads: Tuple[NodeId, ...] = tuple(sorted(heads))
        self.cluster_of: Dict[NodeId, NodeId] = dict(cluster_of)
        self.dios: Tuple[DioMessage, ...] = tuple(dios)
        self.unranked: FrozenSet[NodeId] = frozenset(unranked)

    def __getitem__(self, node: NodeId) -> RankedNode:
        return self._ranked[node]

    def __iter__(self) -> Iterator[NodeId]:
        return iter(sorted(self._ranked))

    def __len__(self) -> int:
        return len(self._ranked)

    def children(self, node: NodeId) -> List[NodeId]:
        return sorted(v for v, r in self._ranked.items() if r.parent == node)

    def descendants(self, node: NodeId) -> Set[NodeId]:
        kids: Dict[NodeId, List[NodeId]] = {}
        for v, r in self._ranked.items():
            if r.parent is not None:
                kids.setdefault(r.parent, []).append(v)
        found, stack = set(), [node]
        while stack:
            for child in kids.get(stack.pop(), ()):
                if child not in found:
                    found.add(child)
                    stack.append(child)
        return found


def _propagate(ranked: Dict[NodeId, RankedNode], cluster_of: Dict[NodeId, NodeId], pending: Set[NodeId],
               dist: np.ndarray, tx_range: float, home: Dict[NodeId, NodeId],
               leaf_only: Set[NodeId]) -> Set[NodeId]:
    '''
        level-synchronous DIO rounds: at level r every relaying thing ranked r advertises,
        and each pending thing in range of one of them takes rank r + 1, so every thing
        joins at its minimum hop count. Among same-level advertisers the thing prefers its
        own cluster, then the closest one (highest RSSI), then the lowest id. Returns the
        parents used.
    '''
    parents = set()
    level = 1
    while pending:
        advertisers = sorted(v for v, r in ranked.items()
                             if r.rank == level and v != ROOT_ID and v not in leaf_only)
        if not advertisers:
            if level > max(r.rank for r in ranked.values()):
                break
            level += 1
            continue
        adopted = {}
        for u in sorted(pending):
            options = [a for a in advertisers if dist[u, a] <= tx_range]
            if options:
                adopted[u] = min(options, key=lambda a: (home.get(u) != cluster_of[a], dist[u, a], a))
        for u, parent in adopted.items():
            ranked[u] = RankedNode(u, level + 1, parent)
            cluster_of[u] = cluster_of[parent]
            parents.add(parent)
        pending -= set(adopted)
        level += 1
    return parents


def _nearest_head(nodes: Sequence[ThingState], heads: Sequence[NodeId], dist: np.ndarray) -> Dict[NodeId, NodeId]:
    if not heads:
        return {}
    return {n.node_id: min(heads, key=lambda h: (dist[n.node_id, h], h)) for n in nodes if not n.is_root}


def build_dodag(heads: Sequence[NodeId], nodes: Sequence[ThingState], tx_range: float,
                clusters: Optional[Sequence[ClusterAssignment]] = None,
                excluded: Iterable[NodeId] = (), leaf_only: Iterable[NodeId] = (),
                dist: Optional[np.ndarray] = None) -> Dodag:
    '''
        heads are seeded at rank 1 under the root; excluded things stay out of the
        DODAG, leaf_only things may join but never become parents
    '''
    if dist is None:
        dist = neighbor_matrix([n.position for n in nodes])
    blocked = set(excluded)
    leaves = set(leaf_only)
    usable = {n.node_id for n in nodes if n.alive and n.node_id not in blocked}
    live_heads = sorted(h for h in heads if h in usable and h not in leaves and h != ROOT_ID)

    ranked = {ROOT_ID: RankedNode(ROOT_ID, 0, None)}
    cluster_of = {}
    for h in live_heads:
        ranked[h] = RankedNode(h, 1, ROOT_ID)
        cluster_of[h] = h

    if clusters is not None:
        home = {m: c.head for c in clusters for m in c.members}
    else:
        home = _nearest_head(nodes, live_heads, dist)

    pending = {v for v in usable if v not in ranked}
    parents = _propagate(ranked, cluster_of, pending, dist, tx_range, home, leaves)

    dios = [DioMessage(v, ranked[v].rank) for v in sorted(set(live_heads) | parents)]
    unranked = {n.node_id for n in nodes if n.node_id not in ranked}
    logger.info('DODAG built: %d ranked, %d unranked, %d DIO broadcasts',
                len(ranked), len(unranked), len(dios))
    return Dodag(ranked, live_heads, cluster_of, dios, unranked)


def repair_dodag(dodag: Dodag, lost: Iterable[NodeId], nodes: Sequence[ThingState], tx_range: float,
                 excluded: Iterable[NodeId] = (), leaf_only: Iterable[NodeId] = (),
                 dist: Optional[np.ndarray] = None) -> Dodag:
    '''
        lost things can no longer relay: their subtrees detach and, with the previously
        unranked things, re-select parents among the remaining ranked ones. A lost thing
        that is alive and leaf_only keeps its own place as a leaf.
    '''
    if dist is None:
        dist = neighbor_matrix([n.position for n in nodes])
    lost = {v for v in lost if v != ROOT_ID}
    blocked = set(excluded)
    leaves = set(leaf_only) | lost
    usable = {n.node_id for n in nodes if n.alive and n.node_id not in blocked}

    detached = {v for v in lost if v not in usable or v in dodag.heads}
    for v in lost:
        if v in dodag:
            detached |= dodag.descendants(v)
    ranked = {v: r for v, r in dodag.items() if v not in detached}
    cluster_of = {v: h for v, h in dodag.cluster_of.items() if v in ranked}
    heads = [h for h in dodag.heads if h in ranked]

    pending = {v for v in (detached | set(dodag.unranked)) if v in usable}
    home = dict(dodag.cluster_of)
    parents = _propagate(ranked, cluster_of, pending, dist, tx_range, home, leaves)

    dios = [DioMessage(v, ranked[v].rank) for v in sorted(parents)]
    unranked = {n.node_id for n in nodes if n.node_id not in ranked}
    logger.debug('DODAG repaired around %s: %d re-attached', sorted(lost),
                 sum(1 for v in detached if v in ranked))
    return Dodag(ranked, heads, cluster_of, dios, unranked)


def route_upward(src: NodeId, dodag: Dodag) -> List[NodeId]:
    if src not in dodag:
        raise NoRouteError(f'thing {src} is not ranked in the DODAG')
    path = []
    node = dodag[src]
    while node.parent is not None:
        path.append(node.parent)
        node = dodag[node.parent]
    return path


def dodag_edges(dodag: Dodag) -> List[Tuple[NodeId, NodeId, int]]:
    return [(v, r.parent, r.rank) for v, r in dodag.items() if r.parent is not None]
