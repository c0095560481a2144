import sys

from .studyctl import main

sys.exit(main())
