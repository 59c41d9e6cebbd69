"""Mixed-effects gradient tree boosting for grouped regression data."""

from .data import Dataset, FoldAssignment, load_csv, make_folds, subsample, write_csv
from .ensemble import (BASELINE, METBOOST, BoostModel, BoostParams, boost, boost_baseline,
                       boost_metboost, predict, predict_parts, predict_path)
from .interpret import marginal_effects, relative_influence, variance_decomposition
from .mixednode import estimate_components, fit_mixed_tree, shrinkage_weight, solve_henderson
from .modelfile import load_model, save_model
from .nodedesign import NodeAssignment, materialize, node_design
from .simbench import SimConfig, auc_variable_selection, calibrate_beta, gen_sim_data, run_benchmark
from .tree import Tree, TreeParams, fit_tree
from .tune import TuneGrid, cv_tune

__version__ = "0.1.0"
