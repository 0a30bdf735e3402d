"""Structural-analysis toolkit for daily financial and blockchain flow series.

Submodules
----------
ingest     transaction / market CSV parsing, cleaning, daily aggregation
series     the DailySeries container and shared transforms
unitroot   augmented Dickey-Fuller testing
breaks     Bai-Perron mean-shift breaks and the sup-F test
hht        empirical mode decomposition and Hilbert-spectrum events
surrogate  FT/AAFT surrogates and significance harnesses
svar       two-variable structural VAR and the Wald regime test
pipeline   end-to-end batch run, reports, and plot data
"""

from .series import DailySeries, SeriesSplit, Transform

__version__ = "0.1.0"

__all__ = ["DailySeries", "SeriesSplit", "Transform", "__version__"]
