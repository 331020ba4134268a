import sys
from pathlib import Path

# Source modules live flat in gpcredit/ and import each other by bare name
sys.path.insert(0, str(Path(__file__).resolve().parent / "gpcredit"))

from cli import main as cli_main  # noqa: E402


def main() -> int:
    return cli_main()


if __name__ == "__main__":
    sys.exit(main())
