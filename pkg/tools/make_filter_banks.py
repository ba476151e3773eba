"""Regenerate the filter banks bundled under src/irispad/data.

Usage: python tools/make_filter_banks.py [OUT_DIR]
"""
import sys
from pathlib import Path

from irispad.encoding import random_filter_bank, save_filter_bank
from irispad.pad2d import DEFAULT_SCALES, bank_filename

RECOGNITION_SEED = 9009


def main(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    save_filter_bank(random_filter_bank(8, 9, RECOGNITION_SEED), out / "recognition_8x9x9.bsif")
    for n, s in DEFAULT_SCALES:
        save_filter_bank(random_filter_bank(n, s, 2000 + s), out / bank_filename(n, s))


if __name__ == "__main__":
    default = Path(__file__).resolve().parent.parent / "src" / "irispad" / "data"
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else default)
