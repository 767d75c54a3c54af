"""Allow `python -m backend.bench`."""

import sys

from backend.bench.runner import main

sys.exit(main())
