import sys

from quadmpc.cli import main

sys.exit(main())
