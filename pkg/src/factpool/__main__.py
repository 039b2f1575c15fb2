import sys

from factpool.cli import main

if __name__ == "__main__":
    sys.exit(main())
