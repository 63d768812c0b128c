"""
Lint and test runner: `uv run python devtools/lint.py [--slow]`.

Runs ruff (fix and format), pyrefly, then the fast pytest suite. `--slow` adds the
long-running table reproductions.
"""

import argparse
import subprocess

from funlog import log_calls
from rich import get_console, reconfigure
from rich import print as rprint

SRC_PATHS = ["src", "scripts", "tests", "devtools", "main.py"]

reconfigure(emoji=not get_console().options.legacy_windows)


def steps(slow: bool) -> list[list[str]]:
    pytest_cmd = ["pytest", "-q"]
    if slow:
        # Overrides the default `-m 'not slow'` from pyproject
        pytest_cmd += ["-m", "slow or not slow"]
    return [
        ["ruff", "check", "--fix", *SRC_PATHS],
        ["ruff", "format", *SRC_PATHS],
        ["uvx", "pyrefly", "check"],
        pytest_cmd,
    ]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Lint and test tidybalance")
    parser.add_argument("--slow", action="store_true", help="Also run the slow reproductions")
    parser.add_argument("--no-tests", action="store_true", help="Lint only")
    args = parser.parse_args(argv)

    commands = steps(args.slow)
    if args.no_tests:
        commands = commands[:-1]

    rprint()
    failed = [" ".join(cmd) for cmd in commands if run(cmd)]
    rprint()
    if failed:
        rprint(f"[bold red]:x: {len(failed)} step(s) failed: {', '.join(failed)}[/bold red]")
    else:
        rprint("[bold green]:white_check_mark: Lint and tests passed![/bold green]")
    rprint()
    return len(failed)


@log_calls(level="warning", show_timing_only=True)
def run(cmd: list[str]) -> int:
    rprint()
    rprint(f"[bold green]>> {' '.join(cmd)}[/bold green]")
    try:
        subprocess.run(cmd, text=True, check=True)
    except KeyboardInterrupt:
        rprint("[yellow]Keyboard interrupt - Cancelled[/yellow]")
        return 1
    except subprocess.CalledProcessError as e:
        rprint(f"[bold red]Error: {e}[/bold red]")
        return 1
    return 0


if __name__ == "__main__":
    exit(main())
