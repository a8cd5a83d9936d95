# Copyright 2026 The seqtrans Authors.
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
"""Transducer losses, decoding and the training driver from Python."""

from seqtrans._core import (
    ConfigError,
    DataError,
    TrainedModel,
    brute_force_ctc,
    brute_force_transducer,
    config_text,
    ctc_loss,
    relative_reduction,
    run_cli,
    transducer_loss,
    wer,
)

__all__ = [
    "ConfigError",
    "DataError",
    "TrainedModel",
    "brute_force_ctc",
    "brute_force_transducer",
    "config_text",
    "ctc_loss",
    "relative_reduction",
    "run_cli",
    "transducer_loss",
    "wer",
]
