"""Figure rendering for sybilsim run directories: consumes only the
documented CSV schemas, writes one image per result figure."""

from .figures import (FIGURE_IDS, FigureSpec, RenderReport, SchemaError,
                      render, render_all)

__version__ = "0.1.0"
