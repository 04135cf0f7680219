# Flooding attacker behaviour: high-rate Data injection toward the cluster head

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, List, Optional

import numpy as np

from Step1_Topology_Clustering.core_model import DataPayload, Message, MessageKind, NodeId, SimConfig


class FloodTarget(Enum):
    CLUSTER_HEAD = 'cluster_head'


@dataclass(frozen=True)
class AttackerProfile:
    flood_interval: float
    active_from: float = 0.0
    target: FloodTarget = FloodTarget.CLUSTER_HEAD
    size: int = 64

    @classmethod
    def from_config(cls, cfg: SimConfig) -> 'AttackerProfile':
        # SimConfig.validate already enforces flood_interval < cbr_interval
        return cls(flood_interval=cfg.flood_interval, active_from=cfg.attack_start, size=cfg.flood_size)


def periodic_times(start: float, interval: float, until: float, jitter: float = 0.0,
                   rng: Optional[np.random.Generator] = None) -> Iterator[float]:
    '''
        send instants start, start + interval, ... strictly before until; with jitter each
        gap is scaled by a uniform factor in [1 - jitter, 1 + jitter]
    '''
    if interval <= 0:
        raise ValueError(f'interval must be positive, got {interval}')
    if jitter and rng is None:
        raise ValueError('a jittered schedule needs a random generator')
    if not jitter:
        # index arithmetic keeps long schedules free of accumulated float error
        count = max(0, math.ceil((until - start) / interval - 1e-9))
        for i in range(count):
            yield start + i * interval
        return
    t = start
    while t < until:
        yield t
        t += interval * rng.uniform(1.0 - jitter, 1.0 + jitter)


def schedule_flood(node: NodeId, profile: AttackerProfile, until: float, head: NodeId,
                   jitter: float = 0.0, rng: Optional[np.random.Generator] = None) -> List[Message]:
    return [Message(MessageKind.DATA, node, head, profile.size, t, DataPayload(flood=True))
            for t in periodic_times(profile.active_from, profile.flood_interval, until, jitter, rng)]
