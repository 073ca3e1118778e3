"""Statistical comparison forecasters: SLR, GAM, ARIMA and a Prophet-style trend model."""

from .arima import ArimaFit, fit_arima, forecast_arima
from .gam import GamFit, fit_gam, forecast_gam
from .slr import SlrFit, fit_slr, forecast_slr
from .trendcast import TrendCastConfig, TrendCastFit, fit_trendcast, forecast_trendcast

__all__ = [
    "ArimaFit", "fit_arima", "forecast_arima",
    "GamFit", "fit_gam", "forecast_gam",
    "SlrFit", "fit_slr", "forecast_slr",
    "TrendCastConfig", "TrendCastFit", "fit_trendcast", "forecast_trendcast",
]
