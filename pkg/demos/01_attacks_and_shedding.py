"""
Walk through one attack on a random 33-bus microgrid.

1. build the grid and look at its generators
2. turn centralities into disruption probabilities
3. sample a scenario, split the grid into islands, dispatch each island
4. average many scenarios into the expected load shedding rate
"""
import numpy as np

from gridshed.attack import apply_scenario, disruption_probabilities, sample_scenario, scenario_rng
from gridshed.graph import SimpleGraph, degree_centrality, edge_betweenness
from gridshed.microgrid import GenerationConfig, generate_microgrid, total_load, validate
from gridshed.shedding import LoadShedder, estimate_elsr
from gridshed.attack import AttackScenario

mg = generate_microgrid(GenerationConfig(n_buses=33, seed=123))
L = total_load(mg)
print(f"{mg.n_buses} buses, {len(mg.lines)} lines, total load {L:.3f} MW")
print("generators at buses", mg.generator_buses,
      "each with", f"{mg.buses[mg.generator_buses[0]].gen_capacity:.3f} MW")
print("validation:", "ok" if validate(mg).ok else validate(mg).failures)

# central buses and lines are the likeliest targets
g = SimpleGraph.from_microgrid(mg)
cd, cb = degree_centrality(g), edge_betweenness(g)
probs = disruption_probabilities(mg)  # p_min 0.01, p_max 0.2
hub = int(np.argmax(cd))
trunk = int(np.argmax(cb))
print(f"\nmost connected bus {hub}: C_d = {cd[hub]:.3f}, p = {probs.p_bus[hub]:.3f}")
print(f"busiest line {mg.edges[trunk]}: C_b = {cb[trunk]:.3f}, p = {probs.p_line[trunk]:.3f}")

# even with no attack some load is curtailed: line limits cap what a generator can export
shedder = LoadShedder(mg)
print(f"\nno-attack shed rate: {shedder.shed_rate(AttackScenario(frozenset())):.3f}")

# one random scenario
s = sample_scenario(probs, scenario_rng(123, 0))
net = apply_scenario(mg, s)
print(f"scenario 0: buses down {sorted(s.disrupted_buses)}, lines down {[mg.edges[k] for k in sorted(s.disrupted_lines)]}")
print(f"  -> {len(net.islands)} islands of sizes {[len(i) for i in net.islands]}")
print(f"  -> shed rate {shedder.shed_rate(s):.3f}")

# Monte Carlo: the running mean settles as scenarios accumulate
est, rates = estimate_elsr(mg, 1000, base_seed=123, return_rates=True, monitor=True)
running = np.cumsum(rates) / np.arange(1, rates.size + 1)
for n in (10, 100, 500, 1000):
    print(f"  after {n:>4} scenarios: running mean {running[n - 1]:.4f}")
print(f"ELSR = {est.mean:.4f} +/- {est.std_error:.4f} (relative drift over last 100: {est.convergence:.2e})")
