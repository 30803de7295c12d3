"""Hierarchical hypergraph generation by coarsening and flow-matched expansion."""

import json as _json

from ._hyperforge import (
    Hypergraph,
    Model,
    coarsen,
    degree_values,
    gen_ego,
    gen_sbm,
    gen_tree,
    parse_obj,
    parse_off,
    read_jsonl,
    simplex_project,
    spectral_mmd,
    to_dot,
    train,
    valid_ego,
    valid_sbm,
    valid_tree,
    wasserstein_1d,
    write_jsonl,
)
from ._hyperforge import evaluate as _evaluate


def evaluate(generated, reference, kind):
    """Metric report for generated graphs against a reference set, as a dict."""
    return _json.loads(_evaluate(generated, reference, kind))


__all__ = [
    "Hypergraph",
    "Model",
    "coarsen",
    "degree_values",
    "evaluate",
    "gen_ego",
    "gen_sbm",
    "gen_tree",
    "parse_obj",
    "parse_off",
    "read_jsonl",
    "simplex_project",
    "spectral_mmd",
    "to_dot",
    "train",
    "valid_ego",
    "valid_sbm",
    "valid_tree",
    "wasserstein_1d",
    "write_jsonl",
]
