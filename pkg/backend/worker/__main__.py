"""Allow `python -m backend.worker`."""

import sys

from backend.worker.runner import main

sys.exit(main())
