import sys

from hetnet.main import main

sys.exit(main())
