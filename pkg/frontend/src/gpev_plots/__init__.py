"""Render experiment CSV artifacts as the standard figure types."""

from gpev_plots.render import render_boxplots, render_fit, render_traces

__all__ = ["render_fit", "render_boxplots", "render_traces"]

__version__ = "0.1.0"
