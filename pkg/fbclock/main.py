# fbclock/main.py
import logging

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from . import __version__, settings
from .api import router

# Configure logging
logging.basicConfig(
    level=settings.LOG_LEVEL,
    format=settings.LOG_FORMAT
)
logger = logging.getLogger("fbclock_service")

app = FastAPI(title="Feedback Clock Simulator", version=__version__)

# CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.CORS_ORIGINS,
    allow_methods=["*"],
    allow_headers=["*"],
    allow_credentials=True,
)

app.include_router(router)


@app.get("/")
def root():
    return {"service": "fbclock", "version": __version__,
            "routes": ["/health", "/compose", "/stability", "/reduced-limit-cycle",
                       "/device/effective", "/run"]}


@app.on_event("startup")
def startup_event():
    logger.info(f"✅ fbclock service {__version__} ready")
