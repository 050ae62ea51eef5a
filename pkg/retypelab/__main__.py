# retypelab/__main__.py
import sys

from retypelab.main import main

sys.exit(main())
