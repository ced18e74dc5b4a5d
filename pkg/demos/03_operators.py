# %% [markdown]
# # Near-memory operators under the cost model
# SELECT, key-value lookup, regex filtering and result reuse, each
# compared with the same work done by CPU threads on local memory.

# %%
from ecisim.workloads import DEFAULT, kvs, locality, regex_filter, select, tables

print(f"DRAM {DEFAULT.dram_rows_s / 1e6:.0f}M rows/s, link {DEFAULT.link_rows_s / 1e6:.0f}M rows/s, "
      f"round trip {DEFAULT.round_trip_ns:.0f} ns")

# %% [markdown]
# SELECT scan rate against thread count: at low selectivity the filter
# runs at DRAM speed once enough readers keep the pipeline busy; at full
# selectivity the link caps it at one sixth of that.

# %%
print("threads " + " ".join(f"{s:>8.0%}" for s in (0.01, 0.1, 1.0)))
tabs = {s: tables.select_table(51_200, s) for s in (0.01, 0.1, 1.0)}
for threads in (1, 2, 4, 8, 16, 32, 48):
    rates = [select.select_scan(tabs[s], threads=threads).scan_rate / 1e6 for s in tabs]
    print(f"{threads:7} " + " ".join(f"{r:8.1f}" for r in rates))

# %% [markdown]
# Pointer chasing: every hop costs a full DRAM latency and the CPU is
# close to memory too, so offloading never wins.

# %%
for chain in (1, 4, 16, 64, 128):
    store = tables.KvStore(256, chain)
    off = kvs.kv_offload(store, 48, 3000).keys_per_s
    cpu = kvs.kv_cpu(store, 48, 3000).keys_per_s
    print(f"L={chain:3}  offload {off / 1e6:7.2f}M keys/s   cpu {cpu / 1e6:7.2f}M keys/s")

# %%
pattern = "qzx[0-9]+k"
table = regex_filter.regex_table(20_000, [pattern], 0.1)
flags, steps = regex_filter.reference_matches(pattern, table)
for threads in (1, 4, 16, 48):
    fpga = regex_filter.regex_scan(pattern, table, threads).scan_rate
    cpu = regex_filter.cpu_regex_scan(pattern, table, threads, steps=steps, flags=flags).scan_rate
    print(f"{threads:2} threads  offload {fpga / 1e6:6.1f}M rows/s   cpu {cpu / 1e6:6.1f}M rows/s")

# %% [markdown]
# Re-reading recent results: with reuse degree R each result is fetched
# over the link once and then served from the remote cache R-1 times.

# %%
for run in locality.locality_sweep((1, 2, 4, 8, 16, 32, 64), results=2048):
    print(f"R={run.reuse:3}  reads {run.reads:6}  fetches {run.interconnect_fetches:5}  miss rate {run.miss_rate:.3f}")
