import sys

from carnot_gmt.cli import main

sys.exit(main())
