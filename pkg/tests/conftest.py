import sys
from pathlib import Path

try:
    import ghostbench  # noqa: F401
except ImportError:  # run from a fresh checkout without installing
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
