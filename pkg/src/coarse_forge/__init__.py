"""Concave metric reshaping for coarse geometry, checked on finite lattices."""

from .plfun import PiecewiseLinearFn, analyze, inverse_or_zero, log_correct, scale
from .flatten import build_schedule, build_schedule_multi, verify_flattening
from .qirepair import build_lsl_schedule, build_qi_schedules

__version__ = "0.1.0"
