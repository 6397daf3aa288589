# Copyright 2026 The W2T Authors
# SPDX-License-Identifier: Apache-2.0

from w2t_convert.convert import (
    ConvertError,
    KeyMapRule,
    MissingFactor,
    RankMismatch,
    UnmappedTensor,
    convert,
    load_keymap,
)

__all__ = [
    "ConvertError",
    "KeyMapRule",
    "MissingFactor",
    "RankMismatch",
    "UnmappedTensor",
    "convert",
    "load_keymap",
]
