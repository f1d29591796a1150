"""
GnarLab - Application Factory
Lädt die Umgebung (.env), konfiguriert Logging und baut die Laufzeit-Konfiguration.
"""
import os
import logging
from dotenv import load_dotenv

load_dotenv()

logging.basicConfig(
    level=os.getenv("GNAR_LOG_LEVEL", "INFO").upper(),
    format="%(asctime)s [%(levelname)s] %(name)s: %(message)s"
)
logger = logging.getLogger("gnarlab")


def create_config() -> dict:
    """Defaults aus der Umgebung; CLI-Flags und Konfigurationsdateien überschreiben sie."""
    return dict(
        THREADS=int(os.getenv("GNAR_THREADS", "1")),
        RESTARTS=int(os.getenv("GNAR_RESTARTS", "100")),
        OUT_DIR=os.getenv("GNAR_OUT_DIR", "out"),
        SEED=int(os.getenv("GNAR_SEED", "2024")),
        PROFILE_BUDGET=int(os.getenv("GNAR_PROFILE_BUDGET", "4096")),
        TOL=float(os.getenv("GNAR_TOL", "1e-8")),
        MAX_ITER=int(os.getenv("GNAR_MAX_ITER", "100")),
        BURN_IN=int(os.getenv("GNAR_BURN_IN", "200")),
        DATABASE_URL=os.getenv("DATABASE_URL") or None,
    )


def main(argv=None) -> int:
    from cli import run
    config = create_config()
    logger.debug(f"GnarLab gestartet (Konfiguration: {config})")
    return run(argv, config)


if __name__ == "__main__":
    raise SystemExit(main())
