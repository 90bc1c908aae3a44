# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

"""epirelax package.

Numerical toolkit for the relaxed free energy of epitaxially strained thin films with
adatom densities: surface-density envelopes, extended graphs of BV profiles, linear-elastic
bulk energy and explicit recovery sequences, with a CLI and an MCP server on top.
"""

__version__ = '0.1.0'
