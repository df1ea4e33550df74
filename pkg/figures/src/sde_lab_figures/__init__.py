"""Paper-style figures from adaptive-sde-lab harness CSVs.

The renderer never recomputes statistics: every plotted point is taken
verbatim from its CSV source, with analytic oracle rows drawn as dashed
overlays.
"""

from sde_lab_figures.render import PLOT_KINDS, PlotSpec, load_plot_spec, render

__all__ = ["PLOT_KINDS", "PlotSpec", "load_plot_spec", "render"]

__version__ = "0.1.0"
