import sys
from pathlib import Path

# make fixtures_3d / oracles importable regardless of pytest import mode
sys.path.insert(0, str(Path(__file__).parent))
