import sys

from .handlers.main import main

sys.exit(main())
