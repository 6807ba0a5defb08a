"""Allow ``python -m dcc_sim``."""

import sys

from dcc_sim.cli import main

sys.exit(main())
