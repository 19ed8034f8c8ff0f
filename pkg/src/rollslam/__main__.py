"""Allow ``python -m rollslam`` as an alternative to the console script."""

from rollslam.cli.main import main

if __name__ == "__main__":
    raise SystemExit(main())
