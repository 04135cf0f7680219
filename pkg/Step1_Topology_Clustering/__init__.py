from .core_model import ConfigError, SimConfig, ThingState, build_topology
