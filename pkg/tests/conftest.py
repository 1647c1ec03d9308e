def pytest_terminal_summary(terminalreporter):
    """Print the acceptance lines recorded by tests/test_acceptance.py, one per criterion."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call":
                continue
            for key, value in rep.user_properties:
                if key == "acceptance":
                    lines.append((value[0], f"criterion {value[0]}: {'PASS' if rep.passed else 'FAIL'}  {value[1]}"))
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
