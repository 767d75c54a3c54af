"""Allow `python -m backend.lifecycle`."""

import sys

from backend.lifecycle.runner import main

sys.exit(main())
