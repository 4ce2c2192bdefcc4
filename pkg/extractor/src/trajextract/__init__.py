"""Trajectory extraction: causal-LM forward passes to distribution summaries."""

from .extract import Extractor, distribution_summaries, extract
from .jobs import COT_LEAD_IN, ExtractionItem, ExtractionJob, JobError
from .records import TokenSummary, TrajectoryRecord, write_records

__version__ = "0.1.0"
