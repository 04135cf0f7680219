from .sim_engine import Simulation, run
