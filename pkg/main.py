import logging
import signal
import sys

from lipgraph.cli import RunStatus
from lipgraph.cli import main as cli_main

logger = logging.getLogger("lipgraph")


def signal_handler(sig, frame):  # pylint: disable=unused-argument
    """Stop on Ctrl+C without a traceback; partial reports are not written."""
    logger.warning("Interrupted, exiting")
    print("\ninterrupted", file=sys.stderr)
    sys.exit(RunStatus.INTERRUPTED.value)


def main():
    signal.signal(signal.SIGINT, signal_handler)
    return cli_main()


if __name__ == "__main__":
    sys.exit(main())
