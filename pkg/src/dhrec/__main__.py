import sys

from dhrec.harness.cli import main

sys.exit(main())
