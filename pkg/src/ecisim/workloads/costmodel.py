"""Closed-form throughput model for the near-memory operators.

All rates are per second; times are nanoseconds. The offload side is an
FPGA with its own DRAM behind the coherent link; the CPU side runs the
same operator over its local DRAM.
"""

from dataclasses import asdict, dataclass
from typing import Optional


@dataclass(frozen=True)
class CostModel:
    dram_latency_ns: float = 100.0
    dram_width_bits: int = 512
    link_to_dram_ratio: float = 1 / 6
    line_bytes: int = 128
    link_latency_ns: float = 160.0
    # FPGA DRAM: 2 channels x 2400 MT/s x 8 B
    fpga_dram_bytes_s: float = 2 * 2400e6 * 8
    # CPU DRAM: 2 channels x 2133 MT/s x 8 B
    cpu_dram_bytes_s: float = 2 * 2133e6 * 8
    cpu_dram_latency_ns: float = 100.0
    fpga_clock_hz: float = 300e6
    cpu_threads: int = 48
    cpu_scan_ns_per_row: float = 16.0
    cpu_ns_per_step: float = 1.0
    kvs_units: int = 32
    regex_units: int = 48

    def to_json(self):
        return asdict(self)

    # -- derived rates -----------------------------------------------------

    @property
    def unit_dram_bytes_s(self) -> float:
        """One operator with one outstanding DRAM access of one interface word."""
        return (self.dram_width_bits / 8) / (self.dram_latency_ns * 1e-9)

    @property
    def link_bytes_s(self) -> float:
        return self.fpga_dram_bytes_s * self.link_to_dram_ratio

    @property
    def dram_rows_s(self) -> float:
        return self.fpga_dram_bytes_s / self.line_bytes

    @property
    def link_rows_s(self) -> float:
        return self.link_bytes_s / self.line_bytes

    @property
    def cpu_dram_rows_s(self) -> float:
        return self.cpu_dram_bytes_s / self.line_bytes

    @property
    def serialize_ns(self) -> float:
        """Time one line occupies the link."""
        return 1e9 / self.link_rows_s

    @property
    def round_trip_ns(self) -> float:
        """Request out, line back (including its serialization)."""
        return 2 * self.link_latency_ns + self.serialize_ns

    # -- SELECT ------------------------------------------------------------

    def select_scan_rate(self, selectivity: float, threads: int) -> float:
        """Rows scanned per second by the offloaded filter."""
        bounds = [self.dram_rows_s]
        if selectivity > 0:
            bounds.append(self.link_rows_s / selectivity)
            bounds.append(threads / (self.round_trip_ns * 1e-9) / selectivity)
        return min(bounds)

    def select_cpu_scan_rate(self, threads: int) -> float:
        per_thread = 1e9 / (1e9 / self.cpu_dram_rows_s + self.cpu_scan_ns_per_row)
        return min(self.cpu_dram_rows_s, threads * per_thread)

    def select_results_rate(self, selectivity: float, threads: int, cpu: bool = False) -> float:
        scan = self.select_cpu_scan_rate(threads) if cpu else self.select_scan_rate(selectivity, threads)
        return selectivity * scan

    # -- KVS ---------------------------------------------------------------

    def kvs_lookup_ns(self, chain: int) -> float:
        return chain * self.dram_latency_ns

    def kvs_rate(self, chain: int, threads: int, units: Optional[int] = None) -> float:
        """Keys per second for blocking threads over ``units`` parallel chasers."""
        units = units or self.kvs_units
        per = self.kvs_lookup_ns(chain)
        return min(threads / ((per + self.round_trip_ns) * 1e-9),
                   units / (per * 1e-9),
                   self.link_rows_s)

    def kvs_cpu_rate(self, chain: int, threads: int) -> float:
        return threads / (chain * self.cpu_dram_latency_ns * 1e-9)

    def kvs_dram_bytes_s(self, chain: int, threads: int) -> float:
        return self.kvs_rate(chain, threads) * chain * self.line_bytes

    # -- regex -------------------------------------------------------------

    def regex_scan_rate(self, selectivity: float, threads: int, mean_chars: float) -> float:
        compute = self.regex_units * self.fpga_clock_hz / max(mean_chars, 1.0)
        return min(self.select_scan_rate(selectivity, threads), compute)

    def regex_cpu_scan_rate(self, threads: int, mean_steps: float) -> float:
        per_thread = 1e9 / (1e9 / self.cpu_dram_rows_s + mean_steps * self.cpu_ns_per_step)
        return min(self.cpu_dram_rows_s, threads * per_thread)


DEFAULT = CostModel()
