import os

from dotenv import load_dotenv

load_dotenv()

# ── Service ───────────────────────────────────────────────────────────

DATA_DIR: str = os.getenv("PBT_DATA_DIR", "data")
API_HOST: str = os.getenv("PBT_API_HOST", "127.0.0.1")
API_PORT: int = int(os.getenv("PBT_API_PORT", "8000"))
LOG_LEVEL: str = os.getenv("PBT_LOG_LEVEL", "info")

# Suggested worker backoff carried by every defer response
DEFER_RETRY_SECONDS: float = float(os.getenv("PBT_DEFER_RETRY_SECONDS", "1.0"))

# ── Client ────────────────────────────────────────────────────────────

SERVICE_URL: str = os.getenv("PBT_SERVICE_URL", f"http://{API_HOST}:{API_PORT}")
CLIENT_TIMEOUT: float = float(os.getenv("PBT_CLIENT_TIMEOUT", "30"))
CLIENT_MAX_RETRIES: int = int(os.getenv("PBT_CLIENT_MAX_RETRIES", "3"))

# ── Lifecycle ─────────────────────────────────────────────────────────

# Seconds between global checkpoint GC scans in live mode
GC_INTERVAL: int = int(os.getenv("PBT_GC_INTERVAL", "60"))

# ── Evolution ─────────────────────────────────────────────────────────

MUTATION_FACTORS: tuple[float, float] = (0.8, 1.2)
DEFAULT_OPPONENT_WINDOW: int = 2
DEFAULT_EVAL_EVERY: int = 200
