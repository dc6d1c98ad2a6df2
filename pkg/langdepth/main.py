"""
Main entry point for the langdepth command line.
"""

import sys

from .cli import cli_main


def main():
    """
    Main entry point for the application.
    """
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
