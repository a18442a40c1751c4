from commands.degrade import DegradeCommand
from commands.estimate_maps import EstimateMapsCommand
from commands.estimator_bench import EstimatorBenchCommand
from commands.fixture import FixtureCommand
from commands.metrics import MetricsCommand
from commands.prox_check import ProxCheckCommand
from commands.restore import RestoreCommand

COMMANDS = {
    "degrade": DegradeCommand,
    "estimate-maps": EstimateMapsCommand,
    "restore": RestoreCommand,
    "prox-check": ProxCheckCommand,
    "estimator-bench": EstimatorBenchCommand,
    "metrics": MetricsCommand,
    "fixture": FixtureCommand,
}

__all__ = ["COMMANDS"]
