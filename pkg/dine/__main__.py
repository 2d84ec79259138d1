import sys

from dine.main import main

sys.exit(main())
