import logging
import sys

from config import DEFAULT_LOG_LEVEL, LOG_FORMAT
from cli.commands import run

# stdout carries command results; logs go to stderr
logging.basicConfig(level=DEFAULT_LOG_LEVEL, format=LOG_FORMAT)
logger = logging.getLogger(__name__)


def main() -> int:
    """Entry point of the kms-fading command line."""
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
