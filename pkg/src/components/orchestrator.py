"""Core orchestration logic for the cell-process toolkit."""

import logging
from pathlib import Path
from typing import Dict, Optional

from commands.analysis import DriftCommand, TailsCommand
from commands.base import BaseCommand, RunContext
from commands.oracle import CompareCommand, PdeCommand
from commands.simulate import SimulateCommand
from commands.validate import ValidateCommand
from components.reporter import Reporter
from errors import CellProcessError
from models import CommandResult, RunConfig

logger = logging.getLogger("pipeline_orchestrator")


def default_commands() -> Dict[str, BaseCommand]:
    commands = [ValidateCommand(), SimulateCommand(), DriftCommand(), TailsCommand(), PdeCommand(), CompareCommand()]
    return {command.name: command for command in commands}


class PipelineOrchestrator:
    """Runs one subcommand and turns toolkit errors into exit codes."""

    def __init__(self, command_map: Optional[Dict[str, BaseCommand]] = None):
        self.commands = command_map if command_map is not None else default_commands()

    def run(
        self,
        command: str,
        config: RunConfig,
        output_dir: Optional[Path] = None,
        force: bool = False,
    ) -> CommandResult:
        if command not in self.commands:
            raise ValueError(f"Unsupported command: {command}")
        output_dir = Path(output_dir or config.output_dir)
        reporter = Reporter(config, output_dir)
        context = RunContext(output_dir=output_dir, reporter=reporter, force=force)
        logger.info(f"running {command} for '{config.name}' (seed {config.seed}, config {reporter.config_hash[:12]})")

        try:
            result = self.commands[command].run(config, context)
        except CellProcessError as e:
            logger.error(f"{command} failed: {e}")
            result = CommandResult(
                command=command,
                exit_code=e.exit_code,
                summary=f"{type(e).__name__}: {e}",
            )

        logger.debug(reporter.generate_summary(result))
        return result
