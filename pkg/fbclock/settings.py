"""
Process-level settings for the fbclock CLI and service.

Values come from the environment, optionally seeded from a .env file at the
repository root.
"""

import os
import environ
from pathlib import Path

env = environ.Env(
    # set casting, default value
    FBCLOCK_LOG_LEVEL=(str, "INFO"),
    FBCLOCK_THREADS=(int, 0),
    FBCLOCK_OUT_DIR=(str, "runs"),
    FBCLOCK_CORS_ORIGINS=(list, ["*"]),
)
BASE_DIR = Path(__file__).resolve().parent.parent

environ.Env.read_env(os.path.join(BASE_DIR, '.env'))


LOG_LEVEL = env("FBCLOCK_LOG_LEVEL").upper()
LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"

# 0 means one worker per available core
THREADS = env("FBCLOCK_THREADS") or (os.cpu_count() or 1)
OUT_DIR = env("FBCLOCK_OUT_DIR")
CORS_ORIGINS = env.list("FBCLOCK_CORS_ORIGINS", default=["*"])
