import logging
import os

__version__ = "0.1.0"

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str | None = None) -> None:
    """Root logging for command-line use; the level comes from HARNACKLAB_LOG_LEVEL unless given."""
    name = (level or os.environ.get("HARNACKLAB_LOG_LEVEL", "INFO")).upper()
    numeric = logging.getLevelName(name)
    if not isinstance(numeric, int):
        numeric = logging.INFO
    logging.basicConfig(level=numeric, format=LOG_FORMAT, force=True)
    if name != logging.getLevelName(numeric):
        logging.getLogger(__name__).warning(f"Unknown HARNACKLAB_LOG_LEVEL {name!r}; using INFO")
