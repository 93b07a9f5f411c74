def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: numbered acceptance criteria (slow)")


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
