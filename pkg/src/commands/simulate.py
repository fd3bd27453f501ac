"""simulate: pooled stationary samples, histogram and a sample trajectory."""

import json
import logging
from typing import List, Tuple

import numpy as np

from commands.base import BaseCommand, PreparedModel, RunContext, prepare_model
from models import CommandResult, Provenance, RunConfig
from pdmp import EmpiricalDistribution, sample_stationary, simulate_trajectory
from rates import PointMassKernel
from tails import empirical_moment, is_stable, running_moment
from utils.random_streams import child_sequences


logger = logging.getLogger("simulate_command")

SAMPLES_FILE = "samples.npy"
METADATA_FILE = "simulate.json"
HISTOGRAM_FILE = "pi_hat_histogram.csv"
TRAJECTORY_FILE = "trajectory.csv"


def simulate(config: RunConfig, context: RunContext, prepared: PreparedModel) -> Tuple[EmpiricalDistribution, List[str], List[str]]:
    """Run the chains and write every simulate artifact; returns (dist, artifacts, notes)."""
    sim = config.simulation
    reporter = context.reporter
    dist = sample_stationary(
        prepared.model,
        prepared.kernel,
        horizon=sim.horizon,
        seed=config.seed,
        burn_in=sim.burn_in,
        stride=sim.stride,
        n_chains=sim.n_chains,
        x0=sim.x0,
        sampler=sim.jump_sampler,
        classification=prepared.classification,
        force=context.force,
    )
    notes = list(prepared.notes)
    if isinstance(prepared.kernel, PointMassKernel):
        notes.append("kernel has no density: the histogram smooths a law that may be singular")
    if context.force and not prepared.classification.positive_recurrent:
        notes.append("forced run: the model is not positive recurrent, samples describe a transient regime")

    edges, mass = dist.histogram(bins=sim.histogram_bins)
    artifacts = [
        str(reporter.write_array(SAMPLES_FILE, dist.samples)),
        str(
            reporter.write_csv(
                HISTOGRAM_FILE,
                "simulate",
                ("bin_left", "bin_right", "mass"),
                zip(edges[:-1].tolist(), edges[1:].tolist(), mass.tolist()),
            )
        ),
    ]

    if sim.trajectory_span > 0:
        seq = child_sequences(config.seed, dist.provenance.n_chains + 2)[-1]
        path = simulate_trajectory(
            prepared.model,
            prepared.kernel,
            sim.x0,
            sim.trajectory_span,
            np.random.default_rng(seq),
            sampler=sim.jump_sampler,
        )
        artifacts.append(
            str(reporter.write_csv(TRAJECTORY_FILE, "simulate", ("t", "x_pre", "y", "x_post"), path.rows()))
        )

    second = running_moment(dist, lambda x: x**2)
    report = {
        "provenance": dist.provenance,
        "count": dist.count,
        "mean": empirical_moment(dist, lambda x: x),
        "second_moment": empirical_moment(dist, lambda x: x**2),
        "mean_log": empirical_moment(dist, np.log),
        "second_moment_stable": is_stable(second),
        "classification": prepared.classification,
        "notes": notes,
    }
    artifacts.insert(0, str(reporter.write_json(METADATA_FILE, "simulate", report)))
    logger.info(f"{dist.count} samples, E[X]={report['mean']:.6g}, E[X^2]={report['second_moment']:.6g}")
    return dist, artifacts, notes


def load_or_simulate(config: RunConfig, context: RunContext, prepared: PreparedModel) -> EmpiricalDistribution:
    """Samples written by an earlier simulate run of the same config, or a fresh run."""
    cached = context.reporter.cached(SAMPLES_FILE, METADATA_FILE)
    if cached is None:
        return simulate(config, context, prepared)[0]
    logger.info(f"reusing samples from {cached}")
    meta = json.loads((context.output_dir / METADATA_FILE).read_text(encoding="utf-8"))
    provenance = Provenance.model_validate(meta["report"]["provenance"])
    return EmpiricalDistribution.from_samples(np.load(cached), provenance)


class SimulateCommand(BaseCommand):
    """Refuses unless the model is positive recurrent (or force is set)."""

    name = "simulate"

    def run(self, config: RunConfig, context: RunContext) -> CommandResult:
        prepared = prepare_model(config)
        dist, artifacts, notes = simulate(config, context, prepared)
        mean = empirical_moment(dist, lambda x: x)
        return CommandResult(
            command=self.name,
            summary=f"{dist.count} pooled samples from {dist.provenance.n_chains} chains, mean {mean:.6g}",
            artifacts=artifacts,
            report={"count": dist.count, "mean": mean, "provenance": dist.provenance},
            notes=notes,
        )
