# Run a single simulation or a sweep grid and write the result tables

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from Step1_Topology_Clustering.core_model import ConfigError, SimConfig
from Step3_Simulation_Metrics.metrics import METRIC_COLUMNS, aggregate_sweep
from Step3_Simulation_Metrics.sim_engine import FLOAT_FORMAT, Simulation

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_REPLAY_MISMATCH = 1
EXIT_CONFIG_ERROR = 2
EXIT_IO_ERROR = 3

SWEEP_COLUMNS = ['scenario', 'n_nodes', 'intruder_ratio', 'seed', 'detection',
                 'pdr', 'dr', 'fpr', 'fnr', 'error']


@dataclass(frozen=True)
class SweepSpec:
    ratios: Tuple[float, ...]
    seeds: Tuple[int, ...]
    base: SimConfig = field(default_factory=SimConfig)
    detection: Tuple[bool, ...] = (True,)
    nodes: Tuple[int, ...] = ()
    scenario: str = 'sweep'

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError('a sweep needs at least one seed')
        if not self.ratios:
            raise ConfigError('a sweep needs at least one intruder ratio')
        if any(not 0.0 <= r <= 1.0 for r in self.ratios):
            raise ConfigError('intruder ratios must lie in [0, 1]')
        if any(n < 2 for n in self.nodes):
            raise ConfigError('node counts must be at least 2')

    def points(self) -> List[Tuple[SimConfig, bool]]:
        '''
            every (config, detection) pair in deterministic (nodes, ratio, detection, seed) order
        '''
        points = []
        for n in self.nodes or (self.base.n_nodes,):
            for ratio in self.ratios:
                for detection in self.detection:
                    for seed in self.seeds:
                        cfg = self.base.with_overrides(n_nodes=n, intruder_ratio=ratio, rng_seed=seed,
                                                       detection_enabled=detection)
                        points.append((cfg, detection))
        return points


def _number_list(text: str, cast) -> Tuple:
    values = []
    for part in text.split(','):
        part = part.strip()
        if not part:
            continue
        if cast is int and '-' in part[1:]:
            lo, hi = part.split('-', 1)
            values.extend(range(int(lo), int(hi) + 1))
        else:
            values.append(cast(part))
    return tuple(values)


def parse_sweep_text(text: str, base_dir: Path = Path('.'),
                     overrides: Optional[Dict] = None, scenario: str = 'sweep') -> SweepSpec:
    '''
        read a sweep file: config, ratios, seeds, nodes, detection (on/off/both), duration
    '''
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f'sweep line {lineno}: expected key = value, got {line!r}')
        key, value = (part.strip() for part in line.split('=', 1))
        raw[key] = value
    unknown = sorted(set(raw) - {'config', 'ratios', 'seeds', 'nodes', 'detection', 'duration'})
    if unknown:
        raise ConfigError(f'unknown sweep keys: {", ".join(unknown)}')

    base = SimConfig()
    if 'config' in raw:
        base = SimConfig.from_file(base_dir / raw['config'])
    if 'duration' in raw:
        try:
            base = base.with_overrides(sim_duration=float(raw['duration']))
        except ValueError as err:
            raise ConfigError(f'bad sweep duration: {raw["duration"]!r}') from err
    if overrides:
        base = base.with_overrides(**overrides)

    modes = {'on': (True,), 'off': (False,), 'both': (True, False)}
    detection = raw.get('detection', 'on').lower()
    if detection not in modes:
        raise ConfigError(f'detection must be one of on/off/both, got {detection!r}')
    try:
        ratios = _number_list(raw.get('ratios', str(base.intruder_ratio)), float)
        seeds = _number_list(raw.get('seeds', str(base.rng_seed)), int)
        nodes = _number_list(raw.get('nodes', ''), int)
    except ValueError as err:
        raise ConfigError(f'bad number in sweep file: {err}') from err
    return SweepSpec(ratios, seeds, base, modes[detection], nodes, scenario)


def _sig6(value):
    if value is None or isinstance(value, (bool, int, str)):
        return value
    if isinstance(value, float):
        return float(f'{value:.6g}')
    if isinstance(value, dict):
        return {k: _sig6(v) for k, v in value.items()}
    return value


def _sweep_point(cfg: SimConfig, detection: bool, scenario: str) -> dict:
    row = {'scenario': scenario, 'n_nodes': cfg.n_nodes, 'intruder_ratio': cfg.intruder_ratio,
           'seed': cfg.rng_seed, 'detection': 'on' if detection else 'off', 'error': None}
    try:
        rates = Simulation(cfg, record_trace=False).run().metrics.rates()
    except Exception as err:
        logger.warning('Sweep point n=%d ratio=%g seed=%d failed: %s',
                       cfg.n_nodes, cfg.intruder_ratio, cfg.rng_seed, err)
        rates = {name: None for name in METRIC_COLUMNS}
        row['error'] = f'{type(err).__name__}: {err}'
    for name in METRIC_COLUMNS:
        row[name] = np.nan if rates[name] is None else rates[name]
    return row


def run_sweep(spec: SweepSpec, out_dir: Path, workers: int = 0) -> Tuple[pd.DataFrame, pd.DataFrame]:
    points = spec.points()
    logger.info('Sweep %s: %d points on %s workers', spec.scenario, len(points), workers or 'all')
    rows = Parallel(n_jobs=workers or -1)(
        delayed(_sweep_point)(cfg, detection, spec.scenario) for cfg, detection in points)
    table = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    agg = aggregate_sweep(table)

    out_dir.mkdir(parents=True, exist_ok=True)
    table.to_csv(out_dir / 'sweep.csv', index=False, float_format=FLOAT_FORMAT)
    agg.to_csv(out_dir / 'sweep_agg.csv', index=False, float_format=FLOAT_FORMAT)
    logger.info('Wrote %d rows and %d aggregate rows to %s', len(table), len(agg), out_dir)
    return table, agg


def run_single(cfg: SimConfig, out_dir: Path, replay: bool = False) -> int:
    started = time.perf_counter()
    result = Simulation(cfg).run()
    wall = time.perf_counter() - started

    out_dir.mkdir(parents=True, exist_ok=True)
    trace_csv = result.trace_csv()
    (out_dir / 'trace.csv').write_text(trace_csv)
    result.detections.to_csv(out_dir / 'detections.csv', index=False, float_format=FLOAT_FORMAT)
    result.detentions.to_csv(out_dir / 'detentions.csv', index=False, float_format=FLOAT_FORMAT)
    result.dodag.to_csv(out_dir / 'dodag.csv', index=False)

    summary = {
        'config': cfg.to_dict(),
        'metrics': _sig6(result.metrics.to_dict()),
        'wall_time': round(wall, 3),
    }
    code = EXIT_OK
    if replay:
        again = Simulation(cfg).run().trace_csv()
        summary['replay_identical'] = again == trace_csv
        if again != trace_csv:
            logger.error('Replay produced a different trace')
            code = EXIT_REPLAY_MISMATCH
    (out_dir / 'run.json').write_text(json.dumps(summary, indent=2))

    for name, value in result.metrics.rates().items():
        logger.info('%s: %s', name.upper(), 'n/a' if value is None else f'{value:.6g}')
    return code


def config_overrides(args) -> Dict:
    overrides = {}
    if args.seed is not None:
        overrides['rng_seed'] = args.seed
    if args.nodes is not None:
        overrides['n_nodes'] = args.nodes
    if args.intruder_ratio is not None:
        overrides['intruder_ratio'] = args.intruder_ratio
    if args.area is not None:
        width, _, height = args.area.lower().partition('x')
        try:
            overrides['area_width'], overrides['area_height'] = float(width), float(height)
        except ValueError as err:
            raise ConfigError(f'--area expects WxH, got {args.area!r}') from err
    if args.range is not None:
        overrides['tx_range'] = args.range
    if args.duration is not None:
        overrides['sim_duration'] = args.duration
    if args.no_detection:
        overrides['detection_enabled'] = False
    if args.workers is not None:
        overrides['workers'] = args.workers
    return overrides


def main(args) -> int:
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    logger.info('Arguments: %s', vars(args))
    try:
        overrides = config_overrides(args)
        if args.sweep is not None:
            spec = parse_sweep_text(args.sweep.read_text(), args.sweep.parent, overrides, args.sweep.stem)
            run_sweep(spec, args.out, spec.base.workers)
            return EXIT_OK
        cfg = SimConfig.from_file(args.config) if args.config is not None else SimConfig()
        cfg = cfg.with_overrides(**overrides)
        return run_single(cfg, args.out, args.replay)
    except ConfigError as err:
        print(f'config error: {err}', file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except OSError as err:
        print(f'I/O error: {err}', file=sys.stderr)
        return EXIT_IO_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    parser.add_argument(
        "--config",
        default=None,
        type=Path,
        help="key = value config file",
    )
    parser.add_argument(
        "--sweep",
        default=None,
        type=Path,
        help="sweep file; runs the grid instead of a single simulation",
    )
    parser.add_argument(
        "--out",
        default=Path('results'),
        type=Path,
        help="output directory",
    )
    parser.add_argument(
        "--seed",
        default=None,
        type=int,
        help="rng_seed override",
    )
    parser.add_argument(
        "--nodes",
        default=None,
        type=int,
        help="n_nodes override",
    )
    parser.add_argument(
        "--intruder-ratio",
        default=None,
        type=float,
        help="fraction of non-root things that flood",
    )
    parser.add_argument(
        "--area",
        default=None,
        type=str,
        help="deployment area as WxH meters",
    )
    parser.add_argument(
        "--range",
        default=None,
        type=float,
        help="radio range in meters",
    )
    parser.add_argument(
        "--duration",
        default=None,
        type=float,
        help="simulated seconds",
    )
    parser.add_argument(
        "--no-detection",
        action='store_true',
        help="baseline run: attackers are never detained",
    )
    parser.add_argument(
        "--workers",
        default=None,
        type=int,
        help="sweep worker pool size, 0 uses every core",
    )
    parser.add_argument(
        "--replay",
        action='store_true',
        help="run twice and fail when the traces differ",
    )
    parser.add_argument(
        "--verbose",
        action='store_true',
        help="debug logging",
    )
    return parser


if __name__ == "__main__":
    args = build_parser().parse_args()
    sys.exit(main(args))
