"""starflow: normalized curvature flows for star-shaped hypersurfaces.

The package evolves the log-radial profile γ = log ρ of a hypersurface given
as a graph over the unit sphere until the prescribed-curvature residual dies,
and ships the grids, geometry, speed laws, and diagnostics that the solver is
built from.  See the individual modules:

- :mod:`starflow.symfunc`     symmetric polynomials, cones, speed functions F
- :mod:`starflow.spheregrid`  lat-long grids, pole-wrapped stencils, field I/O
- :mod:`starflow.geometry`    radial-graph geometry and principal curvatures
- :mod:`starflow.speed`       forcing terms G, admissibility validators
- :mod:`starflow.flow`        the time stepper and run loop
- :mod:`starflow.diagnostics` monitored estimates, history records, fits
- :mod:`starflow.cli`         command-line front end
"""

__version__ = "0.1.0"
