# Shared domain types, configuration and message vocabulary of the simulator

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any, Optional, Union, get_type_hints

import numpy as np

if TYPE_CHECKING:
    from Step2_Attack_Detection.quarantine import DetentionEntry

logger = logging.getLogger(__name__)

NodeId = int
ROOT_ID: NodeId = 0
BROADCAST: NodeId = -1

# child streams spawned from SimConfig.rng_seed
STREAM_TOPOLOGY = 0
STREAM_TRAFFIC = 1
STREAM_CHANNEL = 2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Position:
    x: float
    y: float


class Role(Enum):
    ROOT = 'root'
    CLUSTER_HEAD = 'cluster_head'
    MEMBER = 'member'


@dataclass(frozen=True)
class EnergyState:
    '''
        Initial and consumed energy in joules; the residual is floored at zero
    '''
    e_initial: float
    e_consumed: float = 0.0

    @property
    def e_residual(self) -> float:
        return max(0.0, self.e_initial - self.e_consumed)

    @property
    def dead(self) -> bool:
        return self.e_residual <= 0.0


@dataclass(frozen=True)
class ThingState:
    node_id: NodeId
    position: Position
    role: Role
    energy: EnergyState
    is_attacker: bool = False
    rank: Optional[int] = None
    detention: Optional['DetentionEntry'] = None

    @property
    def is_root(self) -> bool:
        return self.role is Role.ROOT

    @property
    def alive(self) -> bool:
        # the root is mains powered
        return self.is_root or not self.energy.dead


class MessageKind(Enum):
    HELLO = 'Hello'
    DIO = 'DIO'
    DATA = 'Data'
    WARNING = 'Warning'
    ACK = 'Ack'
    PROBE = 'Probe'
    RELEASE = 'Release'


@dataclass(frozen=True)
class HelloPayload:
    residual_energy: float
    position: Position


@dataclass(frozen=True)
class DioPayload:
    rank: int


@dataclass(frozen=True)
class DataPayload:
    flood: bool = False


@dataclass(frozen=True)
class WarningPayload:
    accused: NodeId


@dataclass(frozen=True)
class ProbePayload:
    probe_sent_at: float


@dataclass(frozen=True)
class ReleasePayload:
    released: NodeId


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    src: NodeId
    dst: NodeId
    size: int
    sent_at: float
    payload: Any = None
    msg_id: int = 0

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError(f'message size must be positive, got {self.size}')
        if self.sent_at < 0:
            raise ValueError(f'sent_at must be non-negative, got {self.sent_at}')
        if self.kind is MessageKind.WARNING:
            if not isinstance(self.payload, WarningPayload):
                raise ValueError('Warning messages carry a WarningPayload')
            if self.payload.accused == ROOT_ID:
                raise ValueError('the DODAG root can not be accused')

    @property
    def bits(self) -> int:
        return self.size * 8

    @property
    def is_flood(self) -> bool:
        return isinstance(self.payload, DataPayload) and self.payload.flood


_TRUE = {'true', 'yes', 'on', '1'}
_FALSE = {'false', 'no', 'off', '0'}


def _parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in _TRUE:
        return True
    if value in _FALSE:
        return False
    raise ConfigError(f'not a boolean: {text!r}')


@dataclass(frozen=True)
class SimConfig:
    # topology
    n_nodes: int = 100
    area_width: float = 300.0
    area_height: float = 300.0
    tx_range: float = 60.0
    intruder_ratio: float = 0.10
    rng_seed: int = 1
    # traffic
    packet_size: int = 512
    control_size: int = 64
    flood_size: int = 64
    sim_duration: float = 2000.0
    cbr_interval: float = 1.0
    flood_interval: float = 0.1
    jitter: float = 0.10
    attack_start: float = 10.0
    # radio
    e_elec: float = 50e-9
    e_amp: float = 100e-12
    initial_energy: float = 0.5
    gain_rx: float = 1.0
    gain_tx: float = 1.0
    freq: float = 2.4e9
    prop_speed: float = 3e8
    # clustering
    top_i: int = 3
    grid_size: int = 0
    nodes_per_cell: int = 20
    w_energy: float = 1.0 / 3.0
    w_rssi: float = 1.0 / 3.0
    w_distance: float = 1.0 / 3.0
    ch_energy_floor: float = 0.10
    # detection
    f0: float = 1.0
    alpha: float = 1.0
    n_max: int = 50
    flag_factor: float = 1.5
    detection_window: float = 5.0
    detection_enabled: bool = True
    # quarantine
    rtt_prior: float = 0.25
    probe_interval: float = 5.0
    # channel
    processing_delay: float = 0.001
    loss_prob: float = 0.0
    rx_capacity: int = 50
    # sweeps
    workers: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.n_nodes < 2:
            raise ConfigError(f'n_nodes must be at least 2, got {self.n_nodes}')
        if self.tx_range <= 0:
            raise ConfigError(f'tx_range must be positive, got {self.tx_range}')
        if self.area_width <= 0 or self.area_height <= 0:
            raise ConfigError('area dimensions must be positive')
        if not 0.0 <= self.intruder_ratio <= 1.0:
            raise ConfigError(f'intruder_ratio must lie in [0, 1], got {self.intruder_ratio}')
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f'alpha must lie in [0, 1], got {self.alpha}')
        if not 0.0 <= self.ch_energy_floor < 1.0:
            raise ConfigError('ch_energy_floor must lie in [0, 1)')
        if not 0.0 <= self.jitter < 1.0:
            raise ConfigError('jitter must lie in [0, 1)')
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ConfigError('loss_prob must lie in [0, 1]')
        positive = ('e_elec', 'e_amp', 'initial_energy', 'gain_rx', 'gain_tx', 'freq',
                    'prop_speed', 'packet_size', 'control_size', 'flood_size', 'sim_duration',
                    'cbr_interval', 'flood_interval', 'detection_window', 'rtt_prior',
                    'probe_interval', 'f0', 'n_max', 'flag_factor', 'top_i', 'nodes_per_cell')
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f'{name} must be positive, got {getattr(self, name)}')
        for name in ('grid_size', 'rx_capacity', 'workers', 'processing_delay', 'attack_start'):
            if getattr(self, name) < 0:
                raise ConfigError(f'{name} must be non-negative, got {getattr(self, name)}')
        if min(self.w_energy, self.w_rssi, self.w_distance) < 0:
            raise ConfigError('election weights must be non-negative')
        if self.flood_interval >= self.cbr_interval:
            raise ConfigError('flood_interval must be shorter than cbr_interval')

    @property
    def area(self) -> tuple:
        return (self.area_width, self.area_height)

    @property
    def attacker_count(self) -> int:
        # 0.29 * 100 is 28.999999999999996 in floats
        return math.floor(round(self.intruder_ratio * (self.n_nodes - 1), 9))

    def with_overrides(self, **overrides) -> 'SimConfig':
        unknown = sorted(set(overrides) - {f.name for f in dataclasses.fields(self)})
        if unknown:
            raise ConfigError(f'unknown config keys: {", ".join(unknown)}')
        return dataclasses.replace(self, **overrides)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> 'SimConfig':
        return cls().with_overrides(**parse_config_text(Path(path).read_text()))


def _coerce(name: str, raw: str, hint: Any) -> Any:
    try:
        if hint is bool:
            return _parse_bool(raw)
        if hint is int:
            return int(raw)
        if hint is float:
            return float(raw)
    except ValueError as err:
        raise ConfigError(f'bad value for {name}: {raw!r}') from err
    return raw


def parse_config_text(text: str) -> dict:
    '''
        parse flat "key = value" lines into typed SimConfig overrides
    '''
    hints = get_type_hints(SimConfig)
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f'line {lineno}: expected key = value, got {line!r}')
        key, raw = (part.strip() for part in line.split('=', 1))
        if key == 'area':
            width, _, height = raw.lower().partition('x')
            values['area_width'] = _coerce('area', width, float)
            values['area_height'] = _coerce('area', height, float)
            continue
        if key not in hints:
            raise ConfigError(f'line {lineno}: unknown config key {key!r}')
        values[key] = _coerce(key, raw, hints[key])
    return values


def spawn_streams(seed: int, count: int = 3) -> list:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def build_topology(cfg: SimConfig) -> list:
    '''
        N things with seeded positions, the root in the middle of the area and
        floor(intruder_ratio * (N - 1)) attackers drawn without replacement
    '''
    rng = spawn_streams(cfg.rng_seed)[STREAM_TOPOLOGY]
    xs = rng.uniform(0.0, cfg.area_width, size=cfg.n_nodes)
    ys = rng.uniform(0.0, cfg.area_height, size=cfg.n_nodes)
    xs[ROOT_ID] = cfg.area_width / 2.0
    ys[ROOT_ID] = cfg.area_height / 2.0

    candidates = np.arange(1, cfg.n_nodes)
    attackers = set(rng.choice(candidates, size=cfg.attacker_count, replace=False).tolist())

    nodes = []
    for i in range(cfg.n_nodes):
        role = Role.ROOT if i == ROOT_ID else Role.MEMBER
        nodes.append(ThingState(
            node_id=i,
            position=Position(float(xs[i]), float(ys[i])),
            role=role,
            energy=EnergyState(cfg.initial_energy),
            is_attacker=i in attackers,
        ))
    logger.info('Topology: %d things, %d attackers, area %gx%g m, range %g m',
                cfg.n_nodes, len(attackers), cfg.area_width, cfg.area_height, cfg.tx_range)
    return nodes
