"""Experiment harness: config files, run/sweep drivers, plot data, CLI."""

from .config import RunConfig, parse_config
from .runner import cmd_run, cmd_sweep, execute_run

__all__ = ["RunConfig", "parse_config", "cmd_run", "cmd_sweep", "execute_run"]
