"""
assess.py — Single entry point for running the toolkit from a checkout.

Usage: python assess.py analyze engine/data/atm_model.json --objectives engine/data/objectives_pass.json
"""
import sys
from pathlib import Path

ROOT   = Path(__file__).resolve().parent
ENGINE = ROOT / "engine"

# ── Guard: fail loudly if the package is missing ──────────────────────────────
assert (ENGINE / "spe").exists(), f"ERROR: engine/spe not found at {ENGINE}"

sys.path.insert(0, str(ENGINE))
from spe.main import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
