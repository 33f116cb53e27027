"""Modules for core functionality.

A reconstruction consists of a number of stages,
with each stage separated into its own module or package:

1. The scenario and configuration are read (from a file, overridden by the CLI)
2. The domain is meshed and both forward problems are factorized (``fem``)
3. For a direction and level, an oscillating-decaying probe is built on a slice (``od``)
4. The probe is extended to a solution on the whole domain (``runge``)
5. The indicator is sampled over a range of ``tau`` and classified (``indicator``)
6. Levels are scanned per direction and the hull is intersected (``reconstruct``)
7. Results are written to a run directory (``artifacts``)
"""
