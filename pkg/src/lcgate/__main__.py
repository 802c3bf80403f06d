import sys

from lcgate.cli import main

sys.exit(main())
