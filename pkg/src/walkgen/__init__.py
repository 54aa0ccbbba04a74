"""Graph generative modeling with fast/slow next-node models.

The toolkit learns autoregressive next-node models of two capacities over
second-order random walks of a graph, detects where generation shifts from
replaying known neighborhoods to exploring new ones (via a scalable bloom
filter of training windows), hands generation from the small model to the
large one at that point, and reassembles and evaluates the generated graph.
"""

from walkgen.graph import Graph, EdgeSplit, load_edge_list, save_edge_list, lcc, split_edges
from walkgen.walks import SamplerParams, WalkMatrix, second_order_step, sample_walk, build_corpus
from walkgen.bloom import BloomParams, NeighborhoodFilter, capacity_for, build_neighborhood_filter
from walkgen.models import ModelConfig, TrainReport, TransformerModel, MarkovModel, train, fit_markov
from walkgen.switch import (
    ExplorationCurve,
    HandoverPoint,
    exploration_curve,
    entropy_curve,
    find_knee,
    handover_point,
    generate_fast_slow,
)
from walkgen.assemble import CountMatrix, count_matrix, edge_scores, symmetrized_scores, assemble_graph
from walkgen.metrics import EvalReport, auc, average_precision, link_prediction_eval, structural_report

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "EdgeSplit",
    "load_edge_list",
    "save_edge_list",
    "lcc",
    "split_edges",
    "SamplerParams",
    "WalkMatrix",
    "second_order_step",
    "sample_walk",
    "build_corpus",
    "BloomParams",
    "NeighborhoodFilter",
    "capacity_for",
    "build_neighborhood_filter",
    "ModelConfig",
    "TrainReport",
    "TransformerModel",
    "MarkovModel",
    "train",
    "fit_markov",
    "ExplorationCurve",
    "HandoverPoint",
    "exploration_curve",
    "entropy_curve",
    "find_knee",
    "handover_point",
    "generate_fast_slow",
    "CountMatrix",
    "count_matrix",
    "edge_scores",
    "symmetrized_scores",
    "assemble_graph",
    "EvalReport",
    "auc",
    "average_precision",
    "link_prediction_eval",
    "structural_report",
]
