def pytest_terminal_summary(terminalreporter):
    """Collect the acceptance lines recorded via ``record_property``."""
    lines = []
    for key in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(key, []):
            for name, value in getattr(rep, "user_properties", ()):
                if name == "acceptance":
                    lines.append(value)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split()[0])):
            terminalreporter.write_line(line)
