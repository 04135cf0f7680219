# First order radio energy model and RF geometry of the things

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from Step1_Topology_Clustering.core_model import EnergyState, Position, SimConfig


@dataclass(frozen=True)
class RadioConstants:
    e_elec: float = 50e-9
    e_amp: float = 100e-12
    gain_rx: float = 1.0
    gain_tx: float = 1.0
    freq: float = 2.4e9
    prop_speed: float = 3e8

    def __post_init__(self):
        for name in ('e_elec', 'e_amp', 'gain_rx', 'gain_tx', 'freq', 'prop_speed'):
            if getattr(self, name) <= 0:
                raise ValueError(f'{name} must be strictly positive')

    @property
    def wavelength(self) -> float:
        return self.prop_speed / self.freq

    @classmethod
    def from_config(cls, cfg: SimConfig) -> 'RadioConstants':
        return cls(e_elec=cfg.e_elec, e_amp=cfg.e_amp, gain_rx=cfg.gain_rx,
                   gain_tx=cfg.gain_tx, freq=cfg.freq, prop_speed=cfg.prop_speed)


def residual_energy(e: EnergyState) -> float:
    return e.e_residual


def tx_energy(k: int, d: float, rc: RadioConstants) -> float:
    '''
        energy spent sending k bits over d meters, free space amplifier term
    '''
    if d < 0:
        raise ValueError(f'distance must be non-negative, got {d}')
    return k * rc.e_elec + k * rc.e_amp * d * d


def rx_energy(k: int, rc: RadioConstants) -> float:
    return k * rc.e_elec


def distance(a: Position, b: Position) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def aggregate_distance(v: int, neighbors: Sequence[Position], pos: Position) -> float:
    # v is the owner of pos; its own position is never in neighbors
    return float(sum(distance(pos, p) for p in neighbors))


def rssi(d: float, rc: RadioConstants) -> float:
    '''
        Friis received/transmitted power ratio in dB
    '''
    if d <= 0:
        raise ValueError('rssi is undefined for co-located things (d = 0)')
    ratio = rc.gain_rx * rc.gain_tx * (rc.wavelength / (4.0 * math.pi * d)) ** 2
    return 10.0 * math.log10(ratio)


def neighbor_matrix(positions: Sequence[Position]) -> np.ndarray:
    '''
        pairwise euclidean distances, shape (n, n)
    '''
    xy = np.array([(p.x, p.y) for p in positions], dtype=float).reshape(-1, 2)
    diff = xy[:, None, :] - xy[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])
