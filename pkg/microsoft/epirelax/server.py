# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

"""epirelax MCP server implementation."""

import asyncio
import sys
from mcp.server.fastmcp import FastMCP
from microsoft.epirelax import __version__
from microsoft.epirelax.cli import OutputWriter, compute_energies, recover
from microsoft.epirelax.config import describe_validation_error, load_experiment, load_table
from microsoft.epirelax.envelope import surface_density_from_config, subadditive_convex_envelope
from microsoft.epirelax.errors import EpirelaxError
from microsoft.epirelax.models import (
    EnergyResponse,
    EnvelopeSummary,
    RecoveryResponse,
    SurfaceDensityConfig,
    SurfaceDensityKind,
)
from pathlib import Path
from pydantic import Field, ValidationError
from typing import List, Optional


mcp = FastMCP(
    'epirelax-mcp-server',
    dependencies=['pydantic', 'numpy', 'scipy', 'matplotlib'],
    log_level='ERROR',
    instructions="""epirelax MCP Server - Relaxed free energies of strained epitaxial films with adatoms.

Workflow:
1. Use compute_envelope to get the threshold s0 and recession coefficient theta of a surface density.
2. Use evaluate_energy with an experiment configuration (TOML) to get the unrelaxed and relaxed energies of its target.
3. Use run_recovery to build and verify a recovery sequence; CSV and SVG reports go to the output directory.

Surface densities: constant, quadratic (alpha + beta s^2) or a CSV table with a tail slope.""",
)


def _error(model, exc: Exception):
    if isinstance(exc, ValidationError):
        return model(status='error', message=describe_validation_error(exc))
    return model(status='error', message=str(exc))


@mcp.tool(name='compute_envelope')
async def mcp_compute_envelope(
    kind: str = Field(
        ...,
        description='Surface density kind. Options: constant, quadratic, table.',
    ),
    c: Optional[float] = Field(default=None, description='Value of a constant density.'),
    alpha: Optional[float] = Field(
        default=None, description='Constant term of a quadratic density alpha + beta s^2.'
    ),
    beta: Optional[float] = Field(default=None, description='Quadratic coefficient.'),
    table: Optional[str] = Field(
        default=None, description='Path of a CSV table with header s,value for table densities.'
    ),
    tail_slope: Optional[float] = Field(
        default=None, description='Slope of a table density past its last row.'
    ),
    samples: Optional[List[float]] = Field(
        default=None, description='Optional densities s >= 0 at which to report psi~(s).'
    ),
):
    """Compute the convex sub-additive envelope of a surface density."""
    try:
        config = SurfaceDensityConfig(
            kind=kind.lower(), c=c, alpha=alpha, beta=beta, table=table, tail_slope=tail_slope
        )
        rows = load_table(config.table) if config.kind is SurfaceDensityKind.TABLE else None
        env = subadditive_convex_envelope(
            surface_density_from_config(config, rows), config.s_max, config.points
        )
        pairs = None
        if samples:
            pairs = [(float(s), float(env(s))) for s in samples]
        result = EnvelopeSummary(
            status='success',
            message=env.provenance,
            s0=env.s0 if env.s0 != float('inf') else None,
            theta=env.theta,
            psi_tilde_samples=pairs,
        )
    except (EpirelaxError, ValidationError) as exc:
        result = _error(EnvelopeSummary, exc)
    return result.model_dump()


@mcp.tool(name='evaluate_energy')
async def mcp_evaluate_energy(
    config_path: str = Field(
        ...,
        description='Path of an experiment configuration (TOML) describing the target.',
    ),
):
    """Evaluate the relaxed energy G of a target, and F when the target is regular."""
    try:
        experiment = await asyncio.to_thread(load_experiment, config_path)
        F, G = await asyncio.to_thread(compute_energies, experiment)
        result = EnergyResponse(
            status='success',
            message='F not evaluated: target is not regular' if F is None else 'F and G evaluated',
            unrelaxed=F,
            relaxed=G,
        )
    except (EpirelaxError, ValidationError) as exc:
        result = _error(EnergyResponse, exc)
    return result.model_dump()


@mcp.tool(name='run_recovery')
async def mcp_run_recovery(
    config_path: str = Field(
        ...,
        description='Path of an experiment configuration (TOML) with a [recovery] block.',
    ),
    output_dir: str = Field(
        ...,
        description='Directory for the CSV and SVG reports.',
    ),
    threads: int = Field(default=1, description='Worker threads over k (1-64).'),
):
    """Build a recovery sequence for a target, verify it and write the reports."""
    if not isinstance(threads, int) or not 1 <= threads <= 64:
        threads = 1
    try:
        experiment = await asyncio.to_thread(load_experiment, config_path)
        writer = OutputWriter(Path(output_dir), experiment.loaded.config_hash)
        report = await asyncio.to_thread(recover, experiment, writer, threads)
        passed = report.verdict.passed
        result = RecoveryResponse(
            status='success',
            message='all verdict flags passed' if passed else 'verdict failed',
            output_dir=str(writer.directory),
            exit_code=0 if passed else 4,
            verdict=report.verdict,
        )
    except (EpirelaxError, ValidationError) as exc:
        result = _error(RecoveryResponse, exc)
        result.exit_code = getattr(exc, 'exit_code', 2)
    return result.model_dump()


def main():
    """Run the MCP server with CLI argument support."""
    if '--help' in sys.argv or '-h' in sys.argv:
        print(f'epirelax MCP Server v{__version__}')
        print()
        print('An MCP server for relaxed film energies and recovery sequences.')
        print()
        print('Usage:')
        print('  This is an MCP stdio server. It communicates via JSON-RPC over')
        print('  stdin/stdout and is meant to be launched by an MCP client.')
        print()
        print('  For batch runs use the epirelax command instead.')
        sys.exit(0)

    if '--version' in sys.argv or '-v' in sys.argv:
        print(f'microsoft.epirelax-mcp-server {__version__}')
        sys.exit(0)

    if sys.stdin.isatty():
        print(f'epirelax MCP Server v{__version__}')
        print()
        print('This is an MCP stdio server. Do not run it directly.')
        print('It communicates via JSON-RPC over stdin/stdout and must be')
        print('launched by an MCP client.')
        print()
        print('Run with --help for more info.')
        sys.exit(1)

    mcp.run()


if __name__ == '__main__':
    main()
