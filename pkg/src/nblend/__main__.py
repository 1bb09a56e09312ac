import sys

from nblend.harness.cli import main

sys.exit(main())
