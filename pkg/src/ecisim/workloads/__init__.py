"""Near-memory operators, their cost model and the discrete-event harness."""

from .costmodel import DEFAULT, CostModel
from .kvs import KvResult, kv_cpu, kv_offload
from .locality import LocalityResult, locality_run, locality_sweep
from .regex_filter import cpu_regex_scan, regex_scan, regex_table
from .select import ScanResult, cpu_select_scan, select_scan
from .tables import KeyNotFound, KvStore, select_table
from .tinyregex import UnsupportedPattern

__all__ = [
    "DEFAULT", "CostModel", "KvResult", "kv_cpu", "kv_offload", "LocalityResult", "locality_run",
    "locality_sweep", "cpu_regex_scan", "regex_scan", "regex_table", "ScanResult", "cpu_select_scan",
    "select_scan", "KeyNotFound", "KvStore", "select_table", "UnsupportedPattern",
]
