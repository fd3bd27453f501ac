"""pde and compare: the finite-volume steady state and its cross-check against the samples."""

import logging
from typing import List, Tuple

import numpy as np

from commands.base import BaseCommand, PreparedModel, RunContext, prepare_model
from commands.simulate import load_or_simulate
from errors import AcceptanceError
from models import CommandResult, PdeSection, RunConfig
from pde import DensityField, GrowthFragmentationSolver, SizeGrid, compare_distributions, steady_state
from rates import PointMassKernel


logger = logging.getLogger("oracle_command")

PROFILE_FILE = "pde_profile.csv"
PROFILE_ARRAY = "pde_profile.npy"
RESIDUAL_FILE = "pde_residuals.csv"
METADATA_FILE = "pde.json"


def build_grid(section: PdeSection) -> SizeGrid:
    if section.per_octave:
        return SizeGrid.dyadic(section.x_min, section.x_max, section.per_octave)
    return SizeGrid.log_spaced(section.x_min, section.x_max, section.cells)


def solve(config: RunConfig, context: RunContext, prepared: PreparedModel) -> Tuple[DensityField, List[str], dict]:
    """Steady state on the configured grid; writes the profile, residual history and metadata."""
    section = config.pde
    grid = build_grid(section)
    field, history = steady_state(
        prepared.model,
        prepared.kernel,
        grid,
        tol=section.tol,
        max_steps=section.max_steps,
        check_every=section.check_every,
        marching=section.marching,
        cfl=section.cfl,
        classification=prepared.classification,
        force=context.force,
    )
    leak_rate = GrowthFragmentationSolver(prepared.model, prepared.kernel, grid, section.cfl).leak_rate(field.values)
    report = {
        "cells": grid.size,
        "x_min": grid.x_min,
        "x_max": grid.x_max,
        "marching": section.marching,
        "checks": len(history),
        "final_residual": history[-1] if history else None,
        "mass": field.mass(),
        "mean": field.moment(lambda x: x),
        "second_moment": field.moment(lambda x: x**2),
        "leak_rate": leak_rate,
    }
    reporter = context.reporter
    artifacts = [
        str(reporter.write_json(METADATA_FILE, "pde", report)),
        str(reporter.write_csv(PROFILE_FILE, "pde", ("x_center", "G"), field.rows())),
        str(reporter.write_csv(RESIDUAL_FILE, "pde", ("check", "residual"), enumerate(history, start=1))),
        str(reporter.write_array(PROFILE_ARRAY, field.values)),
    ]
    logger.info(f"steady state on {grid.size} cells, E[X^2]={report['second_moment']:.6g}, leak rate {leak_rate:.3g}")
    return field, artifacts, report


def load_or_solve(config: RunConfig, context: RunContext, prepared: PreparedModel) -> DensityField:
    cached = context.reporter.cached(PROFILE_ARRAY, METADATA_FILE)
    if cached is None:
        return solve(config, context, prepared)[0]
    logger.info(f"reusing steady state from {cached}")
    return DensityField(grid=build_grid(config.pde), values=np.load(cached))


class PdeCommand(BaseCommand):
    name = "pde"

    def run(self, config: RunConfig, context: RunContext) -> CommandResult:
        prepared = prepare_model(config)
        field, artifacts, report = solve(config, context, prepared)
        return CommandResult(
            command=self.name,
            summary=f"steady state on {report['cells']} cells, residual {report['final_residual']}, "
            f"E[X^2]={report['second_moment']:.6g}",
            artifacts=artifacts,
            report=report,
            notes=list(prepared.notes),
        )


class CompareCommand(BaseCommand):
    """AcceptanceError (exit 4) when the L1 distance exceeds the configured bound."""

    name = "compare"

    def run(self, config: RunConfig, context: RunContext) -> CommandResult:
        prepared = prepare_model(config)
        field = load_or_solve(config, context, prepared)
        dist = load_or_simulate(config, context, prepared)
        section = config.compare
        distance = compare_distributions(field, dist, section.x_lo, section.x_hi, section.bins)
        notes = list(prepared.notes)
        if isinstance(prepared.kernel, PointMassKernel):
            notes.append("kernel has no density: both sides are compared as histograms on shared bins")
        passed = distance <= section.bound
        report = {"distance": distance, "bound": section.bound, "passed": passed, "x_lo": section.x_lo, "x_hi": section.x_hi, "bins": section.bins}
        path = context.reporter.write_json("compare.json", self.name, {**report, "notes": notes})
        if not passed:
            raise AcceptanceError(f"L1 distance {distance:.4g} > {section.bound:g} (report in {path})")
        return CommandResult(
            command=self.name,
            summary=f"L1 distance {distance:.4g} <= {section.bound:g}",
            artifacts=[str(path)],
            report=report,
            notes=notes,
        )
