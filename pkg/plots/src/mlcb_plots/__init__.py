"""Figure generation over mlcb experiment summaries."""

__version__ = "0.1.0"

from .render import (  # noqa: F401
    PANELS,
    EmptySummaryError,
    SchemaMismatchError,
    build_figure,
    load_summary,
    render,
)
