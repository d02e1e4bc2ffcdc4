# Copyright 2026 The tinymia Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Membership-inference auditing for tiny byte-level language models.

The heavy lifting lives in the compiled extension; this package re-exports
its public surface.
"""

from tinymia._core import (  # noqa: F401
    PAD_ID,
    UNK_ID,
    VOCAB_SIZE,
    ConfigError,
    DataError,
    Dataset,
    Membership,
    Model,
    ModelConfig,
    NumericError,
    PrereqError,
    TrainConfig,
    assign_membership,
    chinchilla_examples,
    eval_example,
    eval_text,
    fit_gaussian,
    init_model,
    lira_offline_score,
    lira_online_score,
    load_checkpoint,
    load_corpus,
    lr_at,
    member_threshold,
    normalize_signal,
    np_attempts,
    read_score_matrix,
    rmia_alpha,
    rmia_score,
    roc,
    run_attack,
    run_pipeline,
    save_checkpoint,
    spearman,
    suffix_logprob,
    tokenize,
    tpr_at_fpr,
    train,
)

__all__ = [
    "PAD_ID",
    "UNK_ID",
    "VOCAB_SIZE",
    "ConfigError",
    "DataError",
    "Dataset",
    "Membership",
    "Model",
    "ModelConfig",
    "NumericError",
    "PrereqError",
    "TrainConfig",
    "assign_membership",
    "chinchilla_examples",
    "eval_example",
    "eval_text",
    "fit_gaussian",
    "init_model",
    "lira_offline_score",
    "lira_online_score",
    "load_checkpoint",
    "load_corpus",
    "lr_at",
    "member_threshold",
    "normalize_signal",
    "np_attempts",
    "read_score_matrix",
    "rmia_alpha",
    "rmia_score",
    "roc",
    "run_attack",
    "run_pipeline",
    "save_checkpoint",
    "spearman",
    "suffix_logprob",
    "tokenize",
    "tpr_at_fpr",
    "train",
]

__version__ = "0.1.0"
