"""Fluid limits, simulation, and capacity planning for time-varying
many-server loss queues.

Subpackages:

* ``model`` - arrival rates, service distributions, system configs, grids
* ``vie_zero`` / ``vie_finite`` - fluid solvers for the zero- and
  finite-buffer systems
* ``simulator`` - seeded discrete-event simulation of the scaled systems
* ``validate`` - simulation-versus-fluid comparison harness
* ``optimize`` - staffing and joint staffing/buffer capacity planning
* ``cli`` - command-line front end with reproducible file outputs
"""

__version__ = "0.1.0"

from .model import Grid, RateFunction, ServiceDistribution, SystemConfig, load_config

__all__ = [
    "Grid",
    "RateFunction",
    "ServiceDistribution",
    "SystemConfig",
    "load_config",
    "__version__",
]
