import pytest

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def trained_run(tmp_path_factory):
    """One full desk-scale training run (default config), shared by the post-training checks."""
    from mminpaint.config import load_config
    from mminpaint.pipeline import run_training

    cfg = load_config()
    out = tmp_path_factory.mktemp("train")
    return cfg, run_training(cfg, out), out


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
