"""Figure rendering for simulator trace files (CSV + manifest interface only)."""

from .aggregate import EXPECTED_COLUMNS, GROUP_KEYS, PlotJob, aggregate, load_manifest, load_rows

__all__ = ["EXPECTED_COLUMNS", "GROUP_KEYS", "PlotJob", "aggregate",
           "load_manifest", "load_rows"]
__version__ = "0.1.0"
