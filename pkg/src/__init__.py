"""
Sea-fog station forecasting toolkit.

Interpolates NWP grids to coastal stations, selects lagged predictors by correlation,
trains a focal-loss gradient-boosted ensemble on resampled subsets and verifies
categorical fog forecasts by lead time.
"""

__version__ = "1.0.0"
