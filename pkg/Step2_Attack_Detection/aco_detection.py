# Per cluster head ant-colony flooding detector: pheromone, fitness, maliciousness probability

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from Step1_Topology_Clustering.core_model import (Message, MessageKind, NodeId, ROOT_ID, SimConfig,
                                                  WarningPayload)

logger = logging.getLogger(__name__)


@dataclass
class MemberLedgerEntry:
    '''
        per-member request counter of the current window; the last sender address,
        protocol kind and destination are kept for the audit log only
    '''
    member: NodeId
    n_t: int = 0
    last_src: Optional[NodeId] = None
    last_kind: Optional[str] = None
    last_dst: Optional[NodeId] = None


@dataclass(frozen=True)
class AcoScore:
    member: NodeId
    n_t: int
    pheromone: float
    fitness: float
    probability: float = 0.0


@dataclass(frozen=True)
class WindowVerdict:
    scores: Tuple[AcoScore, ...]
    threshold: float
    accused: Optional[NodeId] = None


def pheromone(n_t: int, f0: float, alpha: float, n_max: float) -> float:
    if n_max <= 0:
        raise ValueError(f'n_max must be positive, got {n_max}')
    return max(0.0, f0 * (1.0 - alpha * n_t / n_max))


def fitness(pheromone: float) -> float:
    return 1.0 / (1.0 + pheromone)


def maliciousness_probabilities(scores: Sequence[AcoScore]) -> List[Tuple[NodeId, float]]:
    if not scores:
        raise ValueError('no scores to normalise')
    fits = np.array([s.fitness for s in scores], dtype=float)
    probs = fits / fits.sum()
    return [(s.member, float(p)) for s, p in zip(scores, probs)]


def score_window(ledger: Iterable[MemberLedgerEntry], cfg: SimConfig,
                 exclude: Iterable[NodeId] = ()) -> List[AcoScore]:
    skip = set(exclude)
    raw = []
    for entry in sorted(ledger, key=lambda e: e.member):
        if entry.member in skip:
            continue
        f = pheromone(entry.n_t, cfg.f0, cfg.alpha, cfg.n_max)
        raw.append(AcoScore(entry.member, entry.n_t, f, fitness(f)))
    if not raw:
        return []
    probs = dict(maliciousness_probabilities(raw))
    return [AcoScore(s.member, s.n_t, s.pheromone, s.fitness, probs[s.member]) for s in raw]


def evaluate_window(ledger: Iterable[MemberLedgerEntry], cfg: SimConfig,
                    exclude: Iterable[NodeId] = ()) -> WindowVerdict:
    '''
        accuse the most probable member iff its probability clears flag_factor / m;
        ties go to the larger count, then the lower id
    '''
    scores = score_window(ledger, cfg, exclude)
    if not scores:
        return WindowVerdict((), float('inf'), None)
    threshold = cfg.flag_factor / len(scores)
    best = max(scores, key=lambda s: (s.probability, s.n_t, -s.member))
    accused = best.member if best.probability > threshold else None
    return WindowVerdict(tuple(scores), threshold, accused)


def detect(ledger: Iterable[MemberLedgerEntry], cfg: SimConfig,
           exclude: Iterable[NodeId] = ()) -> Optional[NodeId]:
    return evaluate_window(ledger, cfg, exclude).accused


def exceeds_threshold(member: NodeId, ledger: Iterable[MemberLedgerEntry], cfg: SimConfig) -> bool:
    '''
        whether member alone clears the accusation threshold of its window
    '''
    verdict = evaluate_window(ledger, cfg)
    return any(s.member == member and s.probability > verdict.threshold for s in verdict.scores)


def emit_warning(accused: NodeId, head: NodeId, now: float = 0.0, size: int = 64,
                 msg_id: int = 0) -> Message:
    return Message(MessageKind.WARNING, head, ROOT_ID, size, now, WarningPayload(accused), msg_id)


@dataclass
class ClusterView:
    head: NodeId
    members: Tuple[NodeId, ...] = ()
    entries: Dict[NodeId, MemberLedgerEntry] = field(default_factory=dict)
    last_verdict: Optional[WindowVerdict] = None

    def __post_init__(self):
        self.members = tuple(sorted(self.members))
        for m in self.members:
            self.entries.setdefault(m, MemberLedgerEntry(m))

    def record(self, msg: Message, origin: NodeId) -> None:
        entry = self.entries.get(origin)
        if entry is None:
            return
        entry.n_t += 1
        entry.last_src = msg.src
        entry.last_kind = msg.kind.value
        entry.last_dst = msg.dst

    def ledger(self) -> List[MemberLedgerEntry]:
        return [self.entries[m] for m in self.members]

    def count(self, member: NodeId) -> int:
        entry = self.entries.get(member)
        return entry.n_t if entry else 0

    def close_window(self, cfg: SimConfig, exclude: Iterable[NodeId] = ()) -> WindowVerdict:
        verdict = evaluate_window(self.ledger(), cfg, exclude)
        self.last_verdict = verdict
        logger.debug('Head %d window: %s', self.head,
                     ' '.join(f'{s.member}:{s.n_t}/{s.probability:.3f}' for s in verdict.scores))
        if verdict.accused is not None:
            logger.info('Head %d accuses %d (p=%.4f > %.4f)', self.head, verdict.accused,
                        next(s.probability for s in verdict.scores if s.member == verdict.accused),
                        verdict.threshold)
        return verdict

    def reset(self) -> None:
        for entry in self.entries.values():
            entry.n_t = 0
