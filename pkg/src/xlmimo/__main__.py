import sys

from xlmimo.cli import main

sys.exit(main())
