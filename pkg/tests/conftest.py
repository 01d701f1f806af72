"""Shared pytest plumbing.

The acceptance suite registers one verdict per numbered criterion in
ACCEPTANCE_RESULTS; after the run we print a single pass/fail line for
each so the terminal output carries a compact scoreboard even when
pytest captures per-test stdout.
"""

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[num]
        verdict = "PASS" if ok else "FAIL"
        line = f"criterion {num}: {verdict}"
        if detail:
            line += f" - {detail}"
        terminalreporter.write_line(line)
