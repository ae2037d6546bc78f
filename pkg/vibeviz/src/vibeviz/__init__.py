"""Figure renderer for kernel-tuning run exports (CSV in, images out)."""

from .plots import (
    MissingColumn,
    MissingInput,
    PlotResult,
    VibevizError,
    plot_budget,
    plot_performance,
    plot_tokens,
    render_all,
)

__version__ = "0.1.0"

__all__ = [
    "MissingColumn",
    "MissingInput",
    "PlotResult",
    "VibevizError",
    "plot_budget",
    "plot_performance",
    "plot_tokens",
    "render_all",
    "__version__",
]
