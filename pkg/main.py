import sys

from scripts.tidybalance import main

if __name__ == "__main__":
    sys.exit(main())
