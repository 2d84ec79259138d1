import os
from dotenv import load_dotenv

load_dotenv()

DINE_WORKERS = int(os.getenv("DINE_WORKERS", "1"))
DINE_LOG_LEVEL = os.getenv("DINE_LOG_LEVEL", "INFO")
DINE_SNAPSHOT_DIR = os.getenv("DINE_SNAPSHOT_DIR")  # unset disables snapshots
