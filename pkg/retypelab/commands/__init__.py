# retypelab/commands/__init__.py
from . import build, eval, mine, predict, report, select, synth, train, tune

# registration order is the order shown in --help
SUBCOMMANDS = [synth, build, select, tune, train, eval, mine, predict, report]

__all__ = ["SUBCOMMANDS"]
