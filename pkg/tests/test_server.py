# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

"""Tests for the server module of the epirelax MCP server."""

import pytest
from microsoft.epirelax.errors import SolverDivergence
from microsoft.epirelax.server import mcp_compute_envelope, mcp_evaluate_energy, mcp_run_recovery
from pathlib import Path
from unittest.mock import patch


EXPERIMENT = """\
profile = "profile.toml"

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


async def envelope(**kwargs):
    """Call compute_envelope with every optional argument spelled out."""
    args = dict(c=None, alpha=None, beta=None, table=None, tail_slope=None, samples=None)
    args.update(kwargs)
    return await mcp_compute_envelope(**args)


class TestMcpComputeEnvelope:
    """Tests for the mcp_compute_envelope tool function."""

    @pytest.mark.asyncio
    async def test_quadratic(self):
        """Verify s0 = 1, theta = 2 and the requested samples."""
        result = await envelope(kind='quadratic', alpha=1.0, beta=1.0, samples=[0.5, 2.0])
        assert result['status'] == 'success'
        assert result['s0'] == pytest.approx(1.0, abs=1e-6)
        assert result['theta'] == pytest.approx(2.0, abs=1e-6)
        assert result['psi_tilde_samples'][0] == pytest.approx((0.5, 1.25))
        assert result['psi_tilde_samples'][1] == pytest.approx((2.0, 4.0), abs=1e-6)

    @pytest.mark.asyncio
    async def test_constant(self):
        """Verify that an infinite threshold is reported as None."""
        result = await envelope(kind='CONSTANT', c=1.0)
        assert result['status'] == 'success'
        assert result['s0'] is None
        assert result['theta'] == 0.0

    @pytest.mark.asyncio
    async def test_invalid_kind(self):
        """Verify that an unknown kind is an error response."""
        result = await envelope(kind='cubic')
        assert result['status'] == 'error'
        assert 'kind' in result['message']

    @pytest.mark.asyncio
    async def test_missing_parameters(self):
        """Verify that a quadratic density needs both coefficients."""
        result = await envelope(kind='quadratic', alpha=1.0)
        assert result['status'] == 'error'
        assert 'beta' in result['message']

    @pytest.mark.asyncio
    async def test_table(self, temp_workspace_dir):
        """Verify a table density read from CSV."""
        path = Path(temp_workspace_dir) / 'psi.csv'
        path.write_text('s,value\n0,1\n1,2\n2,5\n', encoding='utf-8')
        result = await envelope(kind='table', table=str(path), tail_slope=4.0)
        assert result['status'] == 'success'
        assert result['theta'] is not None


class TestMcpEvaluateEnergy:
    """Tests for the mcp_evaluate_energy tool function."""

    @pytest.mark.asyncio
    async def test_flat_target(self, write_experiment):
        """Verify F = psi(2) and G = psi~(2) for a flat film."""
        result = await mcp_evaluate_energy(config_path=str(write_experiment(EXPERIMENT)))
        assert result['status'] == 'success'
        assert result['unrelaxed']['total'] == pytest.approx(5.0)
        assert result['relaxed']['total'] == pytest.approx(4.0, abs=1e-6)

    @pytest.mark.asyncio
    async def test_missing_config(self, temp_workspace_dir):
        """Verify an error response for a missing file."""
        result = await mcp_evaluate_energy(config_path=str(Path(temp_workspace_dir) / 'absent.toml'))
        assert result['status'] == 'error'
        assert result['relaxed'] is None


class TestMcpRunRecovery:
    """Tests for the mcp_run_recovery tool function."""

    @pytest.mark.asyncio
    async def test_flat_target(self, write_experiment, temp_workspace_dir):
        """Verify a passing run and its reports."""
        out = Path(temp_workspace_dir) / 'reports'
        result = await mcp_run_recovery(
            config_path=str(write_experiment(EXPERIMENT)), output_dir=str(out), threads=1
        )
        assert result['status'] == 'success'
        assert result['exit_code'] == 0
        assert result['verdict']['constraints'] is True
        assert (out / 'verdict.csv').exists()

    @pytest.mark.asyncio
    async def test_missing_config(self, temp_workspace_dir):
        """Verify exit code 2 for a missing configuration."""
        result = await mcp_run_recovery(
            config_path=str(Path(temp_workspace_dir) / 'absent.toml'),
            output_dir=temp_workspace_dir,
            threads=1,
        )
        assert result['status'] == 'error'
        assert result['exit_code'] == 2

    @pytest.mark.asyncio
    @patch('microsoft.epirelax.server.recover')
    async def test_numerical_failure(self, mock_recover, write_experiment, temp_workspace_dir):
        """Verify exit code 3 when the solver fails."""
        mock_recover.side_effect = SolverDivergence('cg did not converge')
        result = await mcp_run_recovery(
            config_path=str(write_experiment(EXPERIMENT)), output_dir=temp_workspace_dir, threads=8
        )
        assert result['status'] == 'error'
        assert result['exit_code'] == 3
        assert 'cg did not converge' in result['message']
        assert mock_recover.call_args.args[2] == 8

    @pytest.mark.asyncio
    @patch('microsoft.epirelax.server.recover')
    async def test_threads_clamped(self, mock_recover, write_experiment, temp_workspace_dir):
        """Verify that an out-of-range thread count falls back to one."""
        mock_recover.side_effect = SolverDivergence('stop')
        await mcp_run_recovery(
            config_path=str(write_experiment(EXPERIMENT)), output_dir=temp_workspace_dir, threads=500
        )
        assert mock_recover.call_args.args[2] == 1
