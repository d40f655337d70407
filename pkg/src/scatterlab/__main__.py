"""Allow ``python -m scatterlab``."""

import sys

from .cli import main

sys.exit(main())
