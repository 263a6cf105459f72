import sys

from hypknowe.cli import main

sys.exit(main())
