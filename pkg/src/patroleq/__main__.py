"""Allow running the command-line interface as ``python -m patroleq``."""

import sys

from .cli import main

sys.exit(main())
