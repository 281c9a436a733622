"""
Programmatic entry point of the ``sentinel`` command.

Usage
-----
    python -m telemetry.cli run --input fleet.csv --format csv

    from telemetry.cli import cli_main
    code = cli_main(['simulate', '--seed', '7'])
"""
import io
import os
import sys

import django


def cli_main(argv=None, stdout=None, stderr=None) -> int:
    """
    Run one ``sentinel`` subcommand and return its exit status:
    0 on success, 1 when input, configuration or the command line is
    rejected, 2 on an internal failure.
    """
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'sentinel.settings')
    django.setup()
    from django.core.management import call_command
    from django.core.management.base import CommandError

    from telemetry.management.commands.sentinel import SYNOPSIS, UsageError

    argv = list(sys.argv[1:] if argv is None else argv)
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr
    try:
        call_command('sentinel', *argv, stdout=stdout, stderr=stderr)
    except UsageError as exc:
        stderr.write(f"error: {exc}\n{SYNOPSIS}")
        return exc.returncode
    except CommandError as exc:
        stderr.write(f"error: {exc}\n")
        return exc.returncode
    return 0


def captured(argv) -> tuple[int, str, str]:
    """(exit status, stdout, stderr) of one invocation."""
    out, err = io.StringIO(), io.StringIO()
    code = cli_main(argv, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


if __name__ == '__main__':
    sys.exit(cli_main())
