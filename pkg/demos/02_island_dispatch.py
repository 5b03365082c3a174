"""
The dispatch problem inside one island, on small cases that can be checked by hand.

Each line's apparent power is held inside a regular octagon circumscribing
the circle of radius I_rated * V; the LP then maximises served load.
"""
import numpy as np

from gridshed.shedding import OCT_COS, OCT_SIN, ComponentProblem, solve_component_dispatch


def island(p, cap, edges=(), rated=(), q=None):
    n = len(p)
    return ComponentProblem(list(range(n)), np.array(p, float),
                            np.zeros(n) if q is None else np.array(q, float),
                            np.array(cap, float), np.ones(n), list(edges), np.array(rated, float))


# a generator bus feeding its neighbour over a thin line
cp = island([0.3, 0.3], [0.6, 0.0], [(0, 1)], [0.2])
sol = solve_component_dispatch(cp)
print("two buses, 0.2 MW line limit")
print("  served fractions", np.round(sol.served_fraction, 4), "-> served", round(sol.served_active_load, 4), "MW")
print("  generator output", np.round(sol.gen_output, 4), "line flow", np.round(sol.p_flow, 4))

# widen the line and the neighbour is fully served
cp.rated_current = np.array([1.0])
print("  with a 1.0 MW limit:", round(solve_component_dispatch(cp).served_active_load, 4), "MW")

# reactive demand also uses line capacity
cp = island([0.3, 0.45], [0.9, 0.0], [(0, 1)], [0.5], q=[0.0, -0.25])
sol = solve_component_dispatch(cp)
print("\nreactive load on the far bus, 0.5 limit")
print("  served", np.round(sol.served_fraction, 4), f"flow (P, Q) = ({sol.p_flow[0]:.4f}, {sol.q_flow[0]:.4f}), |S| = {np.hypot(sol.p_flow[0], sol.q_flow[0]):.4f}")
print("  octagon facets used:", np.round(sol.p_flow[0] * OCT_COS + sol.q_flow[0] * OCT_SIN, 4))

# the octagon is slightly generous: the worst direction gets 1/cos(pi/8) of the circle
print(f"\nmax overshoot of the octagon over the circle: {100 * (1 / np.cos(np.pi / 8) - 1):.1f}%")

# three buses in a path, generator in the middle
cp = island([0.2, 0.4, 0.3], [0.0, 0.8, 0.0], [(0, 1), (1, 2)], [0.15, 0.25])
sol = solve_component_dispatch(cp)
print("\npath with a central generator")
print("  served", np.round(sol.served_fraction, 4), "total", round(sol.served_active_load, 4), "of", 0.9)
