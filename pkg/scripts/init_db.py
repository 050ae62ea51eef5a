#!/usr/bin/env python3
"""
Run registry initialization script.
"""
import logging
import sys
from pathlib import Path

from sqlalchemy import text

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from retypelab.core.config import settings  # noqa: E402
from retypelab.database import init_db  # noqa: E402

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger("init_db")


def init_registry(url: str) -> bool:
    """Create the registry tables and check the connection."""
    try:
        engine = init_db(url)
        with engine.connect() as conn:
            conn.execute(text("SELECT 1"))
        logger.info(f"Run registry ready at {url}")
        return True
    except Exception as e:
        logger.exception(f"Run registry initialization failed: {e}")
        return False


if __name__ == "__main__":
    url = sys.argv[1] if len(sys.argv) > 1 else settings.DATABASE_URL
    sys.exit(0 if init_registry(url) else 1)
