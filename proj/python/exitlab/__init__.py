# Copyright 2026 The exitlab Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================
"""Distance-enhanced early exiting experiments.

Configs are passed as JSON text (see ``default_config()``); every command
writes the same files as the ``exitlab`` command-line tool.
"""

from exitlab._core import (
    CorruptFileError,
    Error,
    ExitPolicy,
    IoError,
    Network,
    NumericError,
    ParseError,
    ShapeError,
    UninitializedPrototypeError,
    ValidationError,
    VersionError,
    compare,
    config_hash,
    cosine_distance,
    default_config,
    default_tau_grid,
    diagnose,
    distance_ratio,
    edr,
    gen,
    generate,
    make_policy,
    normalized_entropy,
    shift,
    speedup_ratio,
    sweep,
    train,
)

__all__ = [
    "CorruptFileError",
    "Error",
    "ExitPolicy",
    "IoError",
    "Network",
    "NumericError",
    "ParseError",
    "ShapeError",
    "UninitializedPrototypeError",
    "ValidationError",
    "VersionError",
    "compare",
    "config_hash",
    "cosine_distance",
    "default_config",
    "default_tau_grid",
    "diagnose",
    "distance_ratio",
    "edr",
    "gen",
    "generate",
    "make_policy",
    "normalized_entropy",
    "shift",
    "speedup_ratio",
    "sweep",
    "train",
]
