"""Vulnerability assessment of radial microgrids with a graph attention surrogate.

Random radial microgrids are labelled with a Monte Carlo estimate of their
expected load shedding rate under centrality-weighted attacks; a GAT model
with self-attention pooling then learns to predict that rate directly.
"""

__version__ = "0.1.0"

from .microgrid import (BusSpec, GenerationConfig, LineSpec, Microgrid, ValidationReport,
                        generate_microgrid, read_microgrids, validate, write_microgrids)
from .graph import SimpleGraph, connected_components, degree_centrality, edge_betweenness
from .attack import (AttackScenario, DisruptedNetwork, DisruptionProbabilities, apply_scenario,
                     disruption_probabilities, sample_scenario)
from .shedding import (ComponentProblem, DispatchSolution, ElsrEstimate, LoadShedder,
                       estimate_elsr, node_vulnerability, shed_rate, solve_component_dispatch)
from .dataset import (InstanceRecord, ResamplePlan, Standardizer, apply_standardizer,
                      extract_features, fit_standardizer, read_dataset, resample, write_dataset)
from .model import GatS, ModelConfig, load_model, predict, save_model
from .training import TrainConfig, mean_baseline, metrics, train
