# Copyright 2026 The W2T Authors
# SPDX-License-Identifier: Apache-2.0

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

MODULE_CODES = {"q": 0, "k": 1, "v": 2, "o": 3, "other": 4}


class ConvertError(Exception):
    pass


class UnmappedTensor(ConvertError):
    pass


class RankMismatch(ConvertError):
    pass


class MissingFactor(ConvertError):
    pass


@dataclass(frozen=True)
class KeyMapRule:
    """Regex over tensor names with named groups layer, module and role (A or B)."""

    pattern: str

    def match(self, tensor_name: str):
        m = re.fullmatch(self.pattern, tensor_name)
        if m is None:
            return None
        module = m.group("module")
        role = m.group("role").upper()
        if role not in ("A", "B"):
            raise UnmappedTensor(f"{tensor_name}: role must be A or B, got {role}")
        return int(m.group("layer")), MODULE_CODES.get(module, MODULE_CODES["other"]), role


def load_keymap(path: Optional[Path] = None) -> List[KeyMapRule]:
    if path is None:
        path = Path(__file__).parent / "keymaps" / "peft_default.json"
    rules = json.loads(Path(path).read_text())["rules"]
    return [KeyMapRule(pattern=r) for r in rules]


def convert(src_dir, keymap, out_dir, label_source=None, fold_scaling=None, allow_skip=False):
    """Writes LWC1 files and a manifest for every adapter under src_dir; returns the manifest."""
    raise NotImplementedError("w2t-convert is not implemented in this release")
