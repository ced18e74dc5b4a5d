# %% [markdown]
# # Exhaustive exploration
# Breadth-first search over every interleaving of CPU operations and
# message deliveries for one line, then the same search against a home
# that forgets to answer ReadShared.

# %%
from ecisim import HomeAgent, RequestKind, model_check

res = model_check(lines=1, depth=20)
print(res.to_json())

# %%
broken = model_check(lines=1, depth=20, home_factory=lambda: HomeAgent(drop_replies=[RequestKind.READ_SHARED]))
print(broken.violation)
for step in broken.counterexample:
    print("  ", step)
