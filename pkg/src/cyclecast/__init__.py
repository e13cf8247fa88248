"""Synthetic menstrual-cycle series and from-scratch forecasters."""
from .datagen import CaseId, CycleRecord, CycleSeries, GeneratorConfig, case_preset, generate, summarize
from .evaluation import EvalConfig, MetricReport, compare_models, compute_metrics, rolling_eval
from .features import SupervisedWindows, make_windows
from .forecasters import build_forecaster

__version__ = "0.1.0"
