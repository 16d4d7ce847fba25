"""Rigorous blow-up validation for polynomial ODE initial value problems."""

from .intervals import Interval, IntervalMatrix, IntervalVector

__all__ = ["Interval", "IntervalVector", "IntervalMatrix"]

__version__ = "0.1.0"
