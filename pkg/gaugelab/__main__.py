"""
The primary entry point to the lab.
"""

import sys

from gaugelab.cli import main


def run():
    sys.exit(main())


if __name__ == '__main__':
    run()
