import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts = getattr(config, "_acceptance_verdicts", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for key in sorted(verdicts):
            terminalreporter.write_line(verdicts[key])
