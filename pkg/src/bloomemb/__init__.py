"""Bloom embeddings for sparse binary inputs and outputs.

Compress sets of active item positions into compact binary embeddings by
multi-way hashing, recover probability-ranked item lists from model
outputs, steer hash collisions with co-occurrence statistics, and measure
score/dimensionality/time trade-offs with a built-in feed-forward trainer
and sweep harness.
"""

from .cbe import (CooccurrenceStats, CooccurrenceTable, cooccurrence_stats,
                  count_cooccurrences, rebuild_hash_matrix, threshold_and_order)
from .codec import (BloomVector, ItemScores, ProbabilityVector, ScoreOrder,
                    SparseInstance, decode_likelihood, decode_likelihood_batch,
                    decode_nll, decode_nll_batch, encode, encode_batch, rank,
                    rank_batch, renormalize)
from .data import (DataError, ProfileDataset, SyntheticSpec, dataset_stats,
                   generate_synthetic, load_profiles, split_profile)
from .experiment import (ExperimentConfig, ExperimentOutcome, config_from_text,
                         config_to_text, evaluate_model, run_experiment,
                         run_sweep)
from .hashing import (HashFamilySpec, HashMatrix, HashMode, build_hash_matrix,
                      identity_hash_matrix, load_hash_matrix, project,
                      save_hash_matrix)
from .metrics import (EvaluationResult, MannWhitneyResult, Measure, RatioReport,
                      accuracy, average_precision, mann_whitney_u, ratio_report,
                      reciprocal_rank)
from .trainer import (Network, NetworkSpec, OptimizerSpec, TrainReport,
                      backward_and_step, forward, forward_batch, init_network,
                      load_network, loss_cross_entropy, multi_hot, save_network,
                      train)

__version__ = "0.1.0"
