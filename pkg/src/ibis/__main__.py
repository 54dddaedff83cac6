import sys

from ibis.cli import main

sys.exit(main())
