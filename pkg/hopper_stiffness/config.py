from pathlib import Path
import os

from dotenv import load_dotenv

# Load environment variables from .env file if it exists
load_dotenv()

# Paths
PROJ_ROOT = Path(__file__).resolve().parents[1]

CONFIGS_DIR = PROJ_ROOT / "configs"
DEFAULT_CONFIG_PATH = CONFIGS_DIR / "hopper-sim.default.yaml"

REPORTS_DIR = PROJ_ROOT / "reports"

# Physics
GRAVITY = float(os.getenv("HOPPER_GRAVITY", "9.81"))

# Sweep worker pool width when neither the config nor --threads sets one
DEFAULT_WORKERS = int(os.getenv("HOPPER_WORKERS", "1"))
