"""Noise- and jump-robust realized range volatility with quantile-based density forecasts."""

__version__ = "0.1.0"

from . import (  # noqa: F401
    benchmark,
    density,
    evaluate,
    features,
    ingest,
    pipeline,
    quantreg,
    rangevol,
    simulate,
)
