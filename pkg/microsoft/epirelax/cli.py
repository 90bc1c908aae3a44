# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

"""Command-line surface: `epirelax envelope|energy|recover --config <path> --out <dir>`.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure, 4 a recovery
verdict failed (its report is still written).
"""

import argparse
import logging
import numpy as np
import os
import sys
from enum import Enum
from microsoft.epirelax import __version__
from microsoft.epirelax.adatom import cell_table, density_runs
from microsoft.epirelax.config import Experiment, load_experiment
from microsoft.epirelax.convergence import Tolerances, verify_sequence
from microsoft.epirelax.elastic import equilibrium, export_mesh, mesh_film
from microsoft.epirelax.energy import RegularConfiguration, total_energy_F, total_energy_G
from microsoft.epirelax.envelope import EnvelopeTable, subadditive_convex_envelope
from microsoft.epirelax.errors import ConfigError, EpirelaxError, InputError
from microsoft.epirelax.models import ConvergenceReport, EnergyBreakdown
from microsoft.epirelax.plots import plot_convergence, plot_envelope, plot_profiles
from microsoft.epirelax.recovery import RecoverySequence, build_recovery_sequence
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence, Tuple


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_VERDICT = 4

ENVELOPE_SAMPLES = 1025


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def format_value(value: Any) -> str:
    """Render a CSV cell: floats with 17 significant digits, booleans in lower case."""
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, (float, np.floating)):
        return format(float(value), '.17g')
    return str(value)


class OutputWriter:
    """Writes CSV files that start with a provenance comment.

    SVG files carry the same provenance, without the comment marker, in their metadata.

    Attributes:
        directory: Output directory, created on first use.
        header: Comment line `# epirelax <version> config-sha256=<hash>`.
    """

    def __init__(self, directory: Path, config_hash: str, seed: Optional[int] = None):
        """Initialize the writer."""
        self.directory = directory
        self.header = f'# epirelax {__version__} config-sha256={config_hash}'
        if seed is not None:
            self.header += f' seed={seed}'
        self.written: List[Path] = []

    @property
    def provenance(self) -> str:
        """The header line without its leading `# `."""
        return self.header[2:]

    def path(self, name: str) -> Path:
        """Path of an output file, creating the directory if needed."""
        self.directory.mkdir(parents=True, exist_ok=True)
        return self.directory / name

    def csv(self, name: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """Write one CSV file with LF line endings."""
        path = self.path(name)
        lines = [self.header, ','.join(columns)]
        lines.extend(','.join(format_value(v) for v in row) for row in rows)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write('\n'.join(lines) + '\n')
        self.written.append(path)
        logger.debug('wrote %s', path)
        return path


def _output_dir(args: argparse.Namespace, experiment: Experiment) -> Path:
    if args.out:
        return Path(args.out)
    if experiment.config.output:
        out = Path(experiment.config.output)
        return out if out.is_absolute() else experiment.loaded.base_dir / out
    raise ConfigError('no output directory: pass --out or set `output` in the config')


def _envelope(experiment: Experiment) -> EnvelopeTable:
    block = experiment.config.surface_density
    return subadditive_convex_envelope(experiment.psi, block.s_max, block.points)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_envelope(experiment: Experiment, writer: OutputWriter, args: argparse.Namespace) -> int:
    """Tabulate psi, psi^cvx, psi~ and psi_c, plot them and print s0 and theta."""
    env = _envelope(experiment)
    s = np.linspace(0.0, experiment.config.surface_density.s_max, ENVELOPE_SAMPLES)
    columns = np.column_stack([s, env.density(s), env.convex(s), env(s), env.psi_c(s)])
    writer.csv('envelope.csv', ['s', 'psi', 'psi_cvx', 'psi_tilde', 'psi_c'], columns.tolist())
    plot_envelope(env, s, writer.path('envelope.svg'), writer.provenance)
    print(f's0={format_value(env.s0)}')
    print(f'theta={format_value(env.theta)}')
    if env.nonlinear_tail:
        print('warning: envelope has a nonlinear tail', file=sys.stderr)
    return EXIT_OK


# The leading column names the energy; bulk is left empty when it was not evaluated
ENERGY_COLUMNS = [
    'energy',
    'bulk',
    'surface_regular',
    'surface_jump',
    'surface_cut',
    'singular',
    'total',
]


def _energy_row(name: str, e: EnergyBreakdown) -> list:
    return [
        name,
        e.bulk if e.bulk_evaluated else None,
        e.surface_regular,
        e.surface_jump,
        e.surface_cut,
        e.singular_part,
        e.total,
    ]


def compute_energies(
    experiment: Experiment, writer: Optional[OutputWriter] = None
) -> Tuple[Optional[EnergyBreakdown], EnergyBreakdown]:
    """F (None unless the target is regular) and G, with the bulk term if configured.

    When a writer is given, the mesh and displacement tables are written too.
    """
    env = _envelope(experiment)
    profile, measure, tensor = experiment.profile, experiment.measure, experiment.tensor
    mesh = displacement = None
    el = experiment.config.elasticity
    if el is not None and tensor is not None and profile.is_lipschitz:
        mesh = mesh_film(profile, el.depth or profile.width, el.nx, el.ny)
        displacement = equilibrium(mesh, tensor, el.bc)
        if writer is not None:
            for name, (columns, rows) in export_mesh(mesh, displacement).items():
                writer.csv(f'mesh_{name}.csv', columns, rows)
    F = None
    if profile.is_lipschitz and not measure.atoms:
        cfg = RegularConfiguration(profile, measure, mesh, displacement)
        F = total_energy_F(cfg, experiment.psi, tensor)
    G = total_energy_G(profile, measure, experiment.psi, tensor, mesh, displacement, envelope=env)
    return F, G


def cmd_energy(experiment: Experiment, writer: OutputWriter, args: argparse.Namespace) -> int:
    """Evaluate G, and F when the target is regular, with the bulk term if configured."""
    F, G = compute_energies(experiment, writer)
    rows = [_energy_row('F', F)] if F is not None else []
    rows.append(_energy_row('G', G))
    writer.csv('energy.csv', ENERGY_COLUMNS, rows)
    print(f'G={format_value(G.total)}')
    return EXIT_OK


def _write_sequence(sequence: RecoverySequence, writer: OutputWriter) -> None:
    for member in sequence.members:
        cfg = member.configuration
        writer.csv(f'profile_k{member.k}.csv', ['x', 'y'], cfg.profile.polyline().tolist())
        writer.csv(
            f'density_k{member.k}.csv',
            ['x0', 'x1', 'value'],
            [tuple(run) for run in density_runs(cfg.measure)],
        )
        if cfg.mesh is not None:
            for name, (columns, rows) in export_mesh(cfg.mesh, cfg.displacement).items():
                writer.csv(f'mesh_{name}_k{member.k}.csv', columns, rows)
    rows = [row.model_dump(by_alias=True) for row in sequence.rows]
    columns = list(rows[0]) if rows else []
    writer.csv('stages.csv', columns, [list(row.values()) for row in rows])
    cells = cell_table(sequence.projected, sequence.grid)
    writer.csv('cells.csv', list(cells[0]._fields) if cells else ['i', 'j'], [tuple(c) for c in cells])


def _write_report(report: ConvergenceReport, writer: OutputWriter) -> None:
    columns = list(type(report.rows[0]).model_fields)
    writer.csv('convergence.csv', columns, [list(row.model_dump().values()) for row in report.rows])
    verdict = report.verdict.model_dump()
    verdict['passed'] = report.verdict.passed
    writer.csv('verdict.csv', ['flag', 'value'], list(verdict.items()))
    plot_convergence(report, writer.path('convergence.svg'), writer.provenance)


def recover(experiment: Experiment, writer: OutputWriter, threads: int = 1) -> ConvergenceReport:
    """Build the recovery sequence, verify it against the target and write every report.

    Raises:
        ConfigError: The configuration has no [recovery] block.
    """
    recovery = experiment.config.recovery
    if recovery is None:
        raise ConfigError('the recover command needs a [recovery] block')
    env = _envelope(experiment)
    elasticity = experiment.config.elasticity if recovery.evaluate_bulk else None
    sequence = build_recovery_sequence(
        experiment.profile,
        experiment.measure,
        experiment.psi,
        recovery.ks,
        recovery.cell,
        envelope=env,
        max_offset_tries=recovery.max_offset_tries,
        max_refinements=recovery.max_refinements,
        density_scale=recovery.density_scale,
        hausdorff_resolution=recovery.hausdorff_resolution,
        elasticity=elasticity,
        threads=threads,
    )
    _write_sequence(sequence, writer)
    plot_profiles(
        [('target', experiment.profile)]
        + [(f'k={m.k}', m.configuration.profile) for m in sequence.members],
        writer.path('profiles.svg'),
        writer.provenance,
    )
    report = verify_sequence(
        sequence.configurations,
        (experiment.profile, experiment.measure),
        experiment.psi,
        sequence.elasticity,
        Tolerances(recovery.limsup_tolerance, recovery.liminf_tolerance, recovery.constraint_tolerance),
        ks=sequence.ks,
        hausdorff_resolution=recovery.hausdorff_resolution,
        envelope=env,
    )
    _write_report(report, writer)
    return report


def cmd_recover(experiment: Experiment, writer: OutputWriter, args: argparse.Namespace) -> int:
    """Build the recovery sequence, verify it and write every report."""
    verdict = recover(experiment, writer, args.threads).verdict
    print(f'final_relative_gap={format_value(verdict.final_relative_gap)}')
    print(f'passed={format_value(verdict.passed)}')
    if not verdict.passed:
        failed = [k for k, v in verdict.model_dump().items() if v is False]
        print(f'verdict failed: {", ".join(failed)}', file=sys.stderr)
        return EXIT_VERDICT
    return EXIT_OK


COMMANDS = {
    'envelope': cmd_envelope,
    'energy': cmd_energy,
    'recover': cmd_recover,
}


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per experiment."""
    parser = argparse.ArgumentParser(
        prog='epirelax',
        description='Relaxed free energies of strained epitaxial films with adatoms.',
    )
    parser.add_argument('--version', action='version', version=f'epirelax {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)
    for name, fn in COMMANDS.items():
        cmd = sub.add_parser(name, help=fn.__doc__.splitlines()[0] if fn.__doc__ else None)
        cmd.add_argument('--config', required=True, help='Experiment configuration (TOML).')
        cmd.add_argument('--out', default=None, help='Output directory; overrides the config.')
        cmd.add_argument('--seed', type=int, default=None, help='Recorded in output headers.')
        cmd.add_argument('--threads', type=int, default=1, help='Worker threads over k.')
    return parser


def _configure_logging() -> None:
    level = os.environ.get('EPIRELAX_LOG_LEVEL', 'WARNING').upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format='%(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
    )


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise InputError(f'--threads must be at least 1, got {args.threads}')
        if args.seed is not None and args.seed < 0:
            raise InputError(f'--seed must be non-negative, got {args.seed}')
        experiment = load_experiment(args.config)
        writer = OutputWriter(_output_dir(args, experiment), experiment.loaded.config_hash, args.seed)
        return COMMANDS[args.command](experiment, writer, args)
    except InputError as exc:
        print(f'error: {exc}', file=sys.stderr)
        return EXIT_INPUT
    except EpirelaxError as exc:
        print(f'numerical failure: {exc}', file=sys.stderr)
        return EXIT_NUMERICAL


def main():
    """Console entry point."""
    _configure_logging()
    sys.exit(run())


if __name__ == '__main__':
    main()
