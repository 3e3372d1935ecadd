import os
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Sweep defaults. Config files, presets and CLI flags all take precedence over these.
DEFAULT_TRIALS = int(os.getenv("SWEEP_TRIALS", "500"))
DEFAULT_GEOMETRIES = int(os.getenv("SWEEP_GEOMETRIES", "50"))
DEFAULT_SEED = int(os.getenv("SWEEP_SEED", "0"))
DEFAULT_TOL = float(os.getenv("SWEEP_TOL", "1e-6"))
DEFAULT_MAX_ITER = int(os.getenv("SWEEP_MAX_ITER", "100"))
DEFAULT_WORKERS = int(os.getenv("SWEEP_WORKERS", "1"))

LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Bundled presets live next to this module unless overridden
PRESETS_PATH = Path(os.getenv("PRESETS_PATH", str(Path(__file__).with_name("presets.yaml"))))
