# Copyright 2026 The W2T Authors
# SPDX-License-Identifier: Apache-2.0

import argparse
import sys

from w2t_convert.convert import ConvertError, convert, load_keymap


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="w2t-convert")
    p.add_argument("--src", required=True)
    p.add_argument("--keymap")
    p.add_argument("--out", required=True)
    p.add_argument("--labels")
    p.add_argument("--fold-scaling", type=float)
    p.add_argument("--allow-skip", action="store_true")
    args = p.parse_args(argv)
    try:
        convert(args.src, load_keymap(args.keymap), args.out, args.labels, args.fold_scaling, args.allow_skip)
    except ConvertError as e:
        print(f"error [{type(e).__name__}]: {e}", file=sys.stderr)
        return 1
    except NotImplementedError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
