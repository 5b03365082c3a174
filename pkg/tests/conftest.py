import numpy as np
import pytest

from gridshed.microgrid import BusSpec, GenerationConfig, LineSpec, Microgrid, generate_microgrid


def make_grid(p_load, edges, gen_cap=None, q_load=None, v_mag=None, rated=1.0, r=0.1, x=0.1):
    """Hand-built microgrid; ``rated`` may be a scalar or one value per line."""
    n = len(p_load)
    gen_cap = [0.0] * n if gen_cap is None else gen_cap
    q_load = [0.0] * n if q_load is None else q_load
    v_mag = [1.0] * n if v_mag is None else v_mag
    rated = np.broadcast_to(np.asarray(rated, dtype=float), (len(edges),))
    buses = tuple(BusSpec(i, float(v_mag[i]), float(p_load[i]), float(q_load[i]), float(gen_cap[i]))
                  for i in range(n))
    lines = tuple(LineSpec(u, v, r, x, float(c)) for (u, v), c in zip(edges, rated))
    return Microgrid(buses, lines)


def random_tree(n, rng):
    return [(int(rng.integers(0, i)), i) for i in range(1, n)]


@pytest.fixture
def grid33():
    return generate_microgrid(GenerationConfig(n_buses=33, seed=123))


@pytest.fixture
def small_grids():
    return [generate_microgrid(GenerationConfig(n_buses=8, seed=s)) for s in range(6)]


# -- acceptance report -------------------------------------------------------

def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def acceptance(request):
    """``record(number, title, passed, detail)`` adds one PASS/FAIL line to the run summary."""
    def record(number, title, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'}  criterion {number:>2} {title}: {detail}"
        request.config._acceptance_lines.append((number, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda t: t[0]):
            terminalreporter.write_line(line)
