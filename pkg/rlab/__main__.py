import sys

from rlab.main import main

sys.exit(main())
