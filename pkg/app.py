"""cascade-qed entry point: python app.py <command> ... (see cli/runner.py)."""

import sys

from utils.config import ConfigError

try:
	from cli.runner import main
except ConfigError as e:
	print(f"configuration error: {e}", file=sys.stderr)
	sys.exit(1)


if __name__ == '__main__':
	raise SystemExit(main())
