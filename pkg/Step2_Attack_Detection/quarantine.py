# Detention list and reconsideration of accused things: detain for 4*RTT, supervise one window, release or re-detain

import dataclasses
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Set, Tuple

from Step1_Topology_Clustering.core_model import NodeId, ROOT_ID, SimConfig
from Step2_Attack_Detection.aco_detection import MemberLedgerEntry, exceeds_threshold

logger = logging.getLogger(__name__)

THETA_RTT_FACTOR = 4.0


class InvalidTransition(ValueError):
    pass


class DetentionState(Enum):
    DETAINED = 'Detained'
    UNDER_SUPERVISION = 'UnderSupervision'
    RELEASED = 'Released'


@dataclass(frozen=True)
class DetentionEntry:
    accused: NodeId
    detained_at: float
    theta: float
    state: DetentionState = DetentionState.DETAINED
    supervised_from: Optional[float] = None

    @property
    def release_due(self) -> float:
        return self.detained_at + self.theta


@dataclass(frozen=True)
class RttEstimate:
    '''
        running mean of root round trips; the prior stands in until the first sample
    '''
    prior: float = 0.25
    total: float = 0.0
    samples: int = 0

    @property
    def rtt(self) -> float:
        return self.total / self.samples if self.samples else self.prior

    def add(self, sample: float) -> 'RttEstimate':
        if sample < 0:
            raise ValueError(f'negative round trip {sample}')
        return dataclasses.replace(self, total=self.total + sample, samples=self.samples + 1)


def measure_rtt(samples: Iterable[float], prior: float = 0.25) -> RttEstimate:
    estimate = RttEstimate(prior)
    for sample in samples:
        estimate = estimate.add(sample)
    return estimate


def detain(accused: NodeId, now: float, rtt: RttEstimate) -> DetentionEntry:
    if accused == ROOT_ID:
        raise ValueError('the DODAG root is never detained')
    return DetentionEntry(accused, now, THETA_RTT_FACTOR * rtt.rtt)


def begin_supervision(entry: DetentionEntry, now: float) -> DetentionEntry:
    if entry.state is not DetentionState.DETAINED:
        raise InvalidTransition(f'{entry.accused}: {entry.state.value} -> UnderSupervision')
    if now < entry.release_due:
        raise InvalidTransition(f'{entry.accused}: detention runs until {entry.release_due:.6g}')
    return dataclasses.replace(entry, state=DetentionState.UNDER_SUPERVISION, supervised_from=now)


def supervise(entry: DetentionEntry, window_counts: int, cfg: SimConfig, *,
              peer_counts: Optional[Mapping[NodeId, int]] = None, now: Optional[float] = None,
              rtt: Optional[RttEstimate] = None, alive: bool = True) -> Optional[DetentionEntry]:
    '''
        close the supervision round of entry. The round is judged with the detector's
        own threshold over the cluster peers' counts of the same window: a thing that
        would not be accused is Released, otherwise it is Detained again with a fresh
        theta. A thing that died meanwhile is dropped (None).
    '''
    if now is None:
        now = entry.release_due
    if entry.state is DetentionState.DETAINED:
        entry = begin_supervision(entry, now)
    if entry.state is not DetentionState.UNDER_SUPERVISION:
        raise InvalidTransition(f'{entry.accused}: can not supervise a {entry.state.value} entry')
    if not alive:
        return None

    ledger = [MemberLedgerEntry(m, n) for m, n in sorted((peer_counts or {}).items()) if m != entry.accused]
    ledger.append(MemberLedgerEntry(entry.accused, window_counts))
    if exceeds_threshold(entry.accused, ledger, cfg):
        return detain(entry.accused, now, rtt or RttEstimate(cfg.rtt_prior))
    return dataclasses.replace(entry, state=DetentionState.RELEASED)


class DetentionList:
    '''
        network-wide detention table with an audit trail of every transition
    '''

    def __init__(self):
        self.entries: Dict[NodeId, DetentionEntry] = {}
        self.eligible: Set[NodeId] = set()
        self.ever_detained: Set[NodeId] = set()
        self.audit: List[Tuple[float, NodeId, float, str]] = []

    def __contains__(self, node: NodeId) -> bool:
        return node in self.entries

    def get(self, node: NodeId) -> Optional[DetentionEntry]:
        return self.entries.get(node)

    def _log(self, now: float, entry: DetentionEntry, transition: str) -> None:
        self.audit.append((now, entry.accused, entry.theta, transition))
        logger.info('t=%.6g thing %d %s (theta=%.6g)', now, entry.accused, transition, entry.theta)

    def install(self, entry: DetentionEntry) -> DetentionEntry:
        previous = self.entries.get(entry.accused)
        if previous is not None and previous.state is DetentionState.UNDER_SUPERVISION:
            # an accusation arriving during supervision is not a new detention
            return previous
        self.entries[entry.accused] = entry
        self.eligible.discard(entry.accused)
        self.ever_detained.add(entry.accused)
        self._log(entry.detained_at, entry, 'refreshed' if previous else 'detained')
        return entry

    def is_rejecting(self, node: NodeId) -> bool:
        entry = self.entries.get(node)
        return entry is not None and entry.state is DetentionState.DETAINED

    def is_supervised(self, node: NodeId) -> bool:
        entry = self.entries.get(node)
        return entry is not None and entry.state is DetentionState.UNDER_SUPERVISION

    def rejecting(self) -> Set[NodeId]:
        return {n for n in self.entries if self.is_rejecting(n)}

    def blocked(self) -> Set[NodeId]:
        return set(self.entries)

    def expire(self, node: NodeId, now: float) -> bool:
        '''
            theta elapsed: the thing waits for the next window boundary to be supervised
        '''
        entry = self.entries.get(node)
        if entry is None or entry.state is not DetentionState.DETAINED or now < entry.release_due:
            return False
        self.eligible.add(node)
        self._log(now, entry, 'expired')
        return True

    def start_supervision(self, now: float) -> List[NodeId]:
        started = []
        for node in sorted(self.eligible):
            entry = self.entries.get(node)
            if entry is None or entry.state is not DetentionState.DETAINED:
                continue
            self.entries[node] = begin_supervision(entry, now)
            self._log(now, self.entries[node], 'supervision')
            started.append(node)
        self.eligible.clear()
        return started

    def under_supervision(self) -> List[NodeId]:
        return sorted(n for n in self.entries if self.is_supervised(n))

    def conclude(self, node: NodeId, outcome: Optional[DetentionEntry], now: float) -> None:
        entry = self.entries[node]
        if outcome is None:
            del self.entries[node]
            self._log(now, entry, 'dropped')
        elif outcome.state is DetentionState.RELEASED:
            del self.entries[node]
            self._log(now, outcome, 'released')
        else:
            self.entries[node] = outcome
            self._log(now, outcome, 'redetained')

    def drop(self, node: NodeId, now: float) -> None:
        entry = self.entries.pop(node, None)
        self.eligible.discard(node)
        if entry is not None:
            self._log(now, entry, 'dropped')
