# src/handlers/__init__.py
from .simulate_handler import SimulateHandler
from .fit_handler import FitHandler
from .residuals_handler import ResidualsHandler
from .gof_handler import GofHandler
from .calibrate_handler import CalibrateHandler

__all__ = [
    'SimulateHandler',
    'FitHandler',
    'ResidualsHandler',
    'GofHandler',
    'CalibrateHandler'
]
