import sys

from fibrelab.cli import main

sys.exit(main())
