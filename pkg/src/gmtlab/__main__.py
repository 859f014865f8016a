import sys

from gmtlab.cli import main

sys.exit(main())
