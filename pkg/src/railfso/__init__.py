"""Simulation and planning toolkit for rail-side free-space-optical access.

Subpackages by concern: :mod:`railfso.specfun` (double-precision special
functions), :mod:`railfso.geometry` (track, station, and mirror-array
layout), :mod:`railfso.channel` (per-link fade models and closed-form
densities), :mod:`railfso.montecarlo` (scenario assembly and sampling),
:mod:`railfso.stats` (closed-form moments, distributions, outage),
:mod:`railfso.planner` (QoS-driven deployment planning), and
:mod:`railfso.cli` (experiment runner).
"""

__version__ = "0.1.0"

from . import channel, geometry, montecarlo, planner, specfun, stats  # noqa: E402,F401

__all__ = [
    "__version__",
    "channel",
    "geometry",
    "montecarlo",
    "planner",
    "specfun",
    "stats",
]
