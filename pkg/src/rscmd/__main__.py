import sys

from rscmd.experiment import main

sys.exit(main())
