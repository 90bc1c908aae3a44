# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

"""Tests for the command-line surface of epirelax."""

import pytest
from microsoft.epirelax.cli import EXIT_INPUT, EXIT_OK, EXIT_VERDICT, format_value, run
from pathlib import Path


QUADRATIC = """\
profile = "profile.toml"
output = "out"

[surface_density]
kind = "quadratic"
alpha = 1.0
beta = 1.0

[[measure.density]]
tag = "regular"
value = 2.0

[recovery]
ks = [8, 16, 32, 64]
"""

CONSTANT = """\
profile = "profile.toml"
output = "out"

[surface_density]
kind = "constant"
c = 1.0
"""

NEEDLE = """\
domain = [0.0, 1.0]

[[arc]]
x = [0.0, 0.5]
y = [1.0, 1.0]

[[arc]]
x = [0.5, 1.0]
y = [1.0, 1.0]

[[node]]
x = 0.5
value = 0.0
"""


def printed(output: str) -> dict:
    """Parse `key=value` lines from stdout."""
    return dict(line.split('=', 1) for line in output.splitlines() if '=' in line)


def read_rows(path: Path) -> list:
    """CSV rows after the provenance and column lines."""
    lines = path.read_text(encoding='utf-8').splitlines()
    return [line.split(',') for line in lines[2:]]


class TestFormatting:
    """Tests for CSV cell formatting."""

    def test_values(self):
        """Verify floats, booleans and missing values."""
        assert format_value(0.1) == '0.10000000000000001'
        assert format_value(True) == 'true'
        assert format_value(None) == ''
        assert format_value(3) == '3'


class TestEnvelopeCommand:
    """Tests for `epirelax envelope`."""

    def test_quadratic(self, write_experiment, capsys):
        """Verify the threshold and recession coefficient of 1 + s^2."""
        path = write_experiment(QUADRATIC)
        assert run(['envelope', '--config', str(path)]) == EXIT_OK
        values = printed(capsys.readouterr().out)
        assert float(values['s0']) == pytest.approx(1.0, abs=1e-6)
        assert float(values['theta']) == pytest.approx(2.0, abs=1e-6)
        out = path.parent / 'out'
        assert (out / 'envelope.svg').exists()
        header, columns = (out / 'envelope.csv').read_text(encoding='utf-8').splitlines()[:2]
        assert header.startswith('# epirelax 0.1.0 config-sha256=')
        assert columns == 's,psi,psi_cvx,psi_tilde,psi_c'

    def test_constant(self, write_experiment, capsys):
        """Verify theta = 0 and an infinite threshold for a constant density."""
        path = write_experiment(CONSTANT)
        assert run(['envelope', '--config', str(path)]) == EXIT_OK
        values = printed(capsys.readouterr().out)
        assert float(values['theta']) == 0.0
        assert values['s0'] == 'inf'

    def test_deterministic(self, write_experiment, temp_workspace_dir):
        """Verify byte-identical outputs for two runs of one configuration."""
        path = write_experiment(QUADRATIC)
        first = Path(temp_workspace_dir) / 'first'
        second = Path(temp_workspace_dir) / 'second'
        assert run(['envelope', '--config', str(path), '--out', str(first)]) == EXIT_OK
        assert run(['envelope', '--config', str(path), '--out', str(second)]) == EXIT_OK
        for name in ('envelope.csv', 'envelope.svg'):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_seed_in_header(self, write_experiment):
        """Verify that the seed is recorded in the provenance line."""
        path = write_experiment(QUADRATIC)
        assert run(['envelope', '--config', str(path), '--seed', '7']) == EXIT_OK
        header = (path.parent / 'out' / 'envelope.csv').read_text(encoding='utf-8').splitlines()[0]
        assert header.endswith(' seed=7')

    def test_svg_provenance(self, write_experiment):
        """Verify that the plot carries the provenance line of the tables."""
        path = write_experiment(QUADRATIC)
        assert run(['envelope', '--config', str(path)]) == EXIT_OK
        out = path.parent / 'out'
        header = (out / 'envelope.csv').read_text(encoding='utf-8').splitlines()[0]
        svg = (out / 'envelope.svg').read_text(encoding='utf-8')
        assert '<dc:description>' in svg
        assert header[2:] in svg


class TestInputErrors:
    """Tests for exit code 2."""

    def test_missing_table(self, write_experiment, capsys):
        """Verify that a missing density table names its path."""
        body = 'profile = "profile.toml"\noutput = "out"\n[surface_density]\nkind = "table"\ntable = "psi.csv"\ntail_slope = 1.0\n'
        path = write_experiment(body)
        assert run(['envelope', '--config', str(path)]) == EXIT_INPUT
        assert 'psi.csv' in capsys.readouterr().err

    def test_empty_ks(self, write_experiment):
        """Verify that an empty index list is rejected."""
        path = write_experiment(QUADRATIC.replace('[8, 16, 32, 64]', '[]'))
        assert run(['recover', '--config', str(path)]) == EXIT_INPUT

    def test_no_output_directory(self, write_experiment, capsys):
        """Verify that an output directory is required."""
        path = write_experiment(QUADRATIC.replace('output = "out"\n', ''))
        assert run(['envelope', '--config', str(path)]) == EXIT_INPUT
        assert 'output' in capsys.readouterr().err

    def test_threads(self, write_experiment):
        """Verify that at least one thread is required."""
        path = write_experiment(QUADRATIC)
        assert run(['recover', '--config', str(path), '--threads', '0']) == EXIT_INPUT

    def test_negative_seed(self, write_experiment):
        """Verify that seeds must be non-negative."""
        path = write_experiment(QUADRATIC)
        assert run(['envelope', '--config', str(path), '--seed', '-1']) == EXIT_INPUT

    def test_missing_recovery_block(self, write_experiment):
        """Verify that `recover` needs a recovery block."""
        path = write_experiment(CONSTANT)
        assert run(['recover', '--config', str(path)]) == EXIT_INPUT


class TestEnergyCommand:
    """Tests for `epirelax energy`."""

    def test_needle(self, write_experiment, capsys):
        """Verify the cut term 2 psi(0) of a needle under psi = 1."""
        path = write_experiment(CONSTANT, profile=NEEDLE)
        assert run(['energy', '--config', str(path)]) == EXIT_OK
        assert float(printed(capsys.readouterr().out)['G']) == pytest.approx(3.0)
        columns = (path.parent / 'out' / 'energy.csv').read_text(encoding='utf-8').splitlines()[1]
        assert columns == 'energy,bulk,surface_regular,surface_jump,surface_cut,singular,total'
        rows = read_rows(path.parent / 'out' / 'energy.csv')
        assert [row[0] for row in rows] == ['G']
        assert rows[0][1] == ''
        assert float(rows[0][4]) == pytest.approx(2.0)
        assert float(rows[0][6]) == pytest.approx(3.0)

    def test_flat_regular(self, write_experiment):
        """Verify that a regular target reports F and G."""
        path = write_experiment(QUADRATIC)
        assert run(['energy', '--config', str(path)]) == EXIT_OK
        rows = read_rows(path.parent / 'out' / 'energy.csv')
        assert [row[0] for row in rows] == ['F', 'G']
        assert float(rows[0][6]) == pytest.approx(5.0)
        assert float(rows[1][6]) == pytest.approx(4.0, abs=1e-6)


@pytest.mark.slow
class TestRecoverCommand:
    """Tests for `epirelax recover`."""

    def test_flat_target(self, write_experiment, capsys):
        """Verify a passing verdict and the report files for a flat target."""
        path = write_experiment(QUADRATIC)
        assert run(['recover', '--config', str(path)]) == EXIT_OK
        values = printed(capsys.readouterr().out)
        assert values['passed'] == 'true'
        assert float(values['final_relative_gap']) <= 0.05
        out = path.parent / 'out'
        for name in ('stages.csv', 'cells.csv', 'convergence.csv', 'verdict.csv', 'convergence.svg', 'profiles.svg'):
            assert (out / name).exists()
        for k in (8, 16, 32, 64):
            assert (out / f'profile_k{k}.csv').exists()
            assert (out / f'density_k{k}.csv').exists()
        columns = (out / 'stages.csv').read_text(encoding='utf-8').splitlines()[1]
        assert columns.startswith('k,stage,area,mass,H1_regular,H1_jump,H1_cut,F_surface,F_bulk,G_surface,')

    def test_scaled_density_fails(self, write_experiment, capsys):
        """Verify exit code 4 and a written report when the mass constraint is broken."""
        body = QUADRATIC + 'density_scale = 2.0\n'
        path = write_experiment(body)
        assert run(['recover', '--config', str(path)]) == EXIT_VERDICT
        assert 'constraints' in capsys.readouterr().err
        rows = read_rows(path.parent / 'out' / 'verdict.csv')
        assert ['constraints', 'false'] in rows
        assert ['passed', 'false'] in rows
