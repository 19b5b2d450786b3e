# Copyright 2026 The idexpo Authors.
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

"""Fine-tuning for classifiers whose post-hoc explanations stay faithful.

The heavy lifting lives in the compiled ``_idexpo`` extension; this package
re-exports its public surface.
"""

from ._idexpo import (
    Dataset,
    EpochStats,
    IngestError,
    MetricReport,
    Model,
    NumericalError,
    PretrainResult,
    ShapeError,
    SplitSpec,
    Standardizer,
    TrainResult,
    __version__,
    background,
    evaluate,
    explain,
    finetune,
    hard_deletion,
    hard_insertion,
    load_csv,
    make_splits,
    make_synthetic,
    pretrain,
    save_csv,
    standardize,
    valscore,
)

__all__ = [
    "Dataset",
    "EpochStats",
    "IngestError",
    "MetricReport",
    "Model",
    "NumericalError",
    "PretrainResult",
    "ShapeError",
    "SplitSpec",
    "Standardizer",
    "TrainResult",
    "__version__",
    "background",
    "evaluate",
    "explain",
    "finetune",
    "hard_deletion",
    "hard_insertion",
    "load_csv",
    "make_splits",
    "make_synthetic",
    "pretrain",
    "save_csv",
    "standardize",
    "valscore",
]
