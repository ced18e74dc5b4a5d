# %% [markdown]
# # Protocol subsets and trace checking
# A read-only remote paired with a home that keeps no per-line state,
# checked statically and then by running both homes on one schedule.

# %%
from ecisim import subsetting as sb

for home, remote in [(sb.full_home(), sb.full_remote()),
                     (sb.stateless_home(), sb.read_only_remote()),
                     (sb.stateless_home(), sb.full_remote())]:
    problems = sb.validate(home, remote)
    print(f"{len(home.receptions)} home receptions vs {len(remote.initiations)} remote initiations:",
          [f"{p.name}({p.kind.value})" for p in problems] or "ok")

# %%
verdict, full, lean = sb.read_only_comparison(requests=2000, seed=1)
print("conformance:", verdict)
print("directory bytes, full home:", full.home.directory_bytes(), " stateless home:", lean.home.directory_bytes())

# %% [markdown]
# The trace monitor. Specs are written in a small text language and
# compiled to DFAs; here is the builtin request/response pairing spec and
# a user spec that forbids upgrades.

# %%
from ecisim.specs import PAIRING

print(PAIRING)

# %%
from ecisim import builtin_automata, check_all, compile_spec, healthy_run, inject
from ecisim.specs import FAULTS

trace = healthy_run(seed=8, steps=400).records
monitors = builtin_automata()
print("healthy trace:", len(check_all(monitors, trace)), "violations")
for fault in FAULTS:
    found = check_all(monitors, inject(trace, fault, seed=0))
    print(f"{fault:17} -> {found[0].spec}: {found[0].reason} at seq {found[0].seq}")

# %%
no_upgrades = compile_spec("""
spec no-upgrades
scope global
state ok:
  on role=Request kind=UpgradeSharedToExclusive -> VIOLATE
""")
print("upgrades seen:", len(check_all([no_upgrades], trace)))
