import sys

from aawr.cli import main

sys.exit(main())
