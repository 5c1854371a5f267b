"""Run the demo optimization from configs/demo.cfg; extra flags are passed through."""
import sys
from pathlib import Path

from mmgtop.cli import main

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    sys.exit(main(["--config", str(ROOT / "configs" / "demo.cfg"), *sys.argv[1:]]))
