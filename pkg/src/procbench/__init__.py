"""Process-control simulation benchmarks.

Five episodic manufacturing environments behind one contract, classical
controller baselines (PID, tracking/economic MPC, steady-state economic
optimization, GP-EI Bayesian optimization), and offline-dataset tooling.
"""

from .envs import ENVIRONMENTS, make_env

__version__ = "0.1.0"

__all__ = ["ENVIRONMENTS", "make_env", "__version__"]
