import sys

from grat.cli import main

sys.exit(main())
