import sys

from relay_rmt.cli import main

sys.exit(main())
