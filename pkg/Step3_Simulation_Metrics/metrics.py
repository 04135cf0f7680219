# Evaluation measures of a run (PDR, DR, FPR, FNR) and aggregation over sweep repetitions

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ('pdr', 'dr', 'fpr', 'fnr')
GROUP_COLUMNS = ['scenario', 'n_nodes', 'intruder_ratio', 'detection']


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fn: int = 0
    fp: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fn, self.fp, self.tn) < 0:
            raise ValueError('confusion counts are non-negative')

    @property
    def attackers(self) -> int:
        return self.tp + self.fn

    @property
    def normals(self) -> int:
        return self.fp + self.tn

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    @classmethod
    def from_labels(cls, y_true: Sequence[int], y_pred: Sequence[int]) -> 'ConfusionCounts':
        if len(y_true) == 0:
            return cls()
        tn, fp, fn, tp = confusion_matrix(y_true, y_pred, labels=[0, 1]).ravel()
        return cls(int(tp), int(fn), int(fp), int(tn))


def confusion_counts(nodes: Iterable[int], attackers: Iterable[int], accused: Iterable[int]) -> ConfusionCounts:
    '''
        node level counts: a thing accused at least once during the run counts once
    '''
    attackers, accused = set(attackers), set(accused)
    ids = sorted(nodes)
    y_true = np.array([int(n in attackers) for n in ids], dtype=int)
    y_pred = np.array([int(n in accused) for n in ids], dtype=int)
    return ConfusionCounts.from_labels(y_true, y_pred)


@dataclass(frozen=True)
class DeliveryCounts:
    sent: int
    received: int

    def __post_init__(self):
        if self.received > self.sent:
            raise ValueError(f'received {self.received} exceeds sent {self.sent}')


def packet_delivery_rate(runs: Iterable[DeliveryCounts]) -> Optional[float]:
    '''
        mean of the per-run delivery ratios, in percent; runs that sent nothing are left out
    '''
    ratios = []
    for run in runs:
        if run.sent == 0:
            logger.warning('Run with no data packets sent excluded from PDR')
            continue
        ratios.append(run.received / run.sent)
    if not ratios:
        return None
    return float(np.mean(ratios)) * 100.0


def detection_rate(c: ConfusionCounts) -> Optional[float]:
    if c.attackers == 0:
        return None
    return 100.0 * c.tp / c.attackers


def false_positive_rate(c: ConfusionCounts) -> Optional[float]:
    if c.normals == 0:
        return None
    return 100.0 * c.fp / c.normals


def false_negative_rate(c: ConfusionCounts) -> Optional[float]:
    if c.attackers == 0:
        return None
    return 100.0 * c.fn / c.attackers


def rates_exact(c: ConfusionCounts, delivery: Optional[DeliveryCounts] = None) -> Dict[str, Optional[Fraction]]:
    rates = {
        'dr': Fraction(100 * c.tp, c.attackers) if c.attackers else None,
        'fpr': Fraction(100 * c.fp, c.normals) if c.normals else None,
        'fnr': Fraction(100 * c.fn, c.attackers) if c.attackers else None,
        'pdr': None,
    }
    if delivery is not None and delivery.sent:
        rates['pdr'] = Fraction(100 * delivery.received, delivery.sent)
    return rates


def _fraction_text(value: Optional[Fraction]) -> Optional[str]:
    return None if value is None else f'{value.numerator}/{value.denominator}'


@dataclass
class RunMetrics:
    confusion: ConfusionCounts
    delivery: DeliveryCounts
    tallies: Dict[str, Dict[str, int]] = field(default_factory=dict)
    dead_nodes: int = 0
    rotations: int = 0
    accusations: int = 0
    energy_consumed: float = 0.0

    @property
    def pdr(self) -> Optional[float]:
        return packet_delivery_rate([self.delivery]) if self.delivery.sent else None

    @property
    def dr(self) -> Optional[float]:
        return detection_rate(self.confusion)

    @property
    def fpr(self) -> Optional[float]:
        return false_positive_rate(self.confusion)

    @property
    def fnr(self) -> Optional[float]:
        return false_negative_rate(self.confusion)

    def rates(self) -> Dict[str, Optional[float]]:
        return {name: getattr(self, name) for name in METRIC_COLUMNS}

    def to_dict(self) -> dict:
        exact = rates_exact(self.confusion, self.delivery)
        return {
            **self.rates(),
            'exact': {name: _fraction_text(exact[name]) for name in METRIC_COLUMNS},
            'confusion': {'tp': self.confusion.tp, 'fn': self.confusion.fn,
                          'fp': self.confusion.fp, 'tn': self.confusion.tn},
            'delivery': {'sent': self.delivery.sent, 'received': self.delivery.received},
            'tallies': self.tallies,
            'dead_nodes': self.dead_nodes,
            'rotations': self.rotations,
            'accusations': self.accusations,
            'energy_consumed': self.energy_consumed,
        }


def aggregate_sweep(rows: pd.DataFrame) -> pd.DataFrame:
    '''
        mean and sample stdev of every metric per (scenario, n_nodes, intruder_ratio, detection)
    '''
    ok = rows[rows['error'].isna()] if 'error' in rows else rows
    ok = ok.astype({name: float for name in METRIC_COLUMNS})
    spec = {'runs': ('seed', 'size')}
    for name in METRIC_COLUMNS:
        spec[f'{name}_mean'] = (name, 'mean')
        spec[f'{name}_std'] = (name, 'std')
    agg = ok.groupby(GROUP_COLUMNS, sort=True).agg(**spec).reset_index()
    return agg
