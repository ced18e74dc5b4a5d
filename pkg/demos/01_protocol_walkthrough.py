# %% [markdown]
# # Walking one line through the protocol
# A home node (memory owner) and a remote node (caching CPU) share one
# cache line. We look at the joint state ordering, then drive a few
# operations through the simulated link and print the messages.

# %%
from ecisim import HomeAgent, JointState, RemoteAgent, System, classify_transition, compare_distance
from ecisim.protocol import EDGES

J = JointState
for lower, upper, local in EDGES:
    print(f"{lower.value} < {upper.value}" + ("   (one node only)" if local else ""))

# %%
for src, dst in [(J.II, J.IS), (J.IS, J.II), (J.MI, J.IS), (J.IM, J.IE), (J.IE, J.IM)]:
    print(f"{src.value} -> {dst.value}: {classify_transition(src, dst).value}")
print("MI vs IM:", compare_distance(J.MI, J.IM).value)

# %% [markdown]
# A remote read miss, a silent upgrade from E to M, then a home read
# that has to pull the dirty copy back.

# %%
s = System(HomeAgent(), RemoteAgent())
s.remote_write(0)       # miss: ReadExclusive
s.drain()
s.remote_write(0)       # E -> M, no message
s.home_read(0)          # home downgrades the remote to shared
s.drain()
print("joint state:", s.home.joint_view(0))
for r in s.records:
    print(f"{r.seq:2} {r.dir.value:13} vc={r.vc:<2} {r.role.value:8} {r.kind.value:28} "
          f"id={r.id} payload={r.payload}")

# %% [markdown]
# Dirty forwarding: the home writes, then the remote reads. Under HiddenO
# the home keeps the dirty line in an owned state and skips the memory
# write; under WriteBackOnShare it writes memory first. The remote cannot
# tell the two apart.

# %%
from ecisim import HomeStrategy
from ecisim.trace import encode_jsonl

traces = {}
for strategy in HomeStrategy:
    s = System(HomeAgent(strategy), RemoteAgent())
    s.home_write(1)
    s.remote_read(1)
    s.drain()
    traces[strategy] = encode_jsonl(s.records)
    print(f"{strategy.value:17} memory writes={s.home.store.writes} home state={s.home.entry(1).home.value}")
print("traces identical:", len(set(traces.values())) == 1)

# %% [markdown]
# A longer randomized run with cross-VC reordering; the ghost checker
# watches single-writer and data-value rules at every step.

# %%
from ecisim import healthy_run

run = healthy_run(seed=3, steps=2000)
print("messages:", len(run.records), "violations:", run.ghost.violations)
