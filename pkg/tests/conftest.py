import pytest

_VERDICTS: dict[int, str] = {}


class Criterion:
    """Records one acceptance line; a criterion fails if any check inside it fails."""

    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.notes: list[str] = []
        self.failed: list[str] = []

    def check(self, ok: bool, note: str) -> None:
        self.notes.append(("ok   " if ok else "FAIL ") + note)
        if not ok:
            self.failed.append(note)

    def finish(self) -> None:
        status = "PASS" if not self.failed else "FAIL"
        line = f"criterion {self.number} [{status}] {self.title}"
        detail = "\n".join("    " + n for n in self.notes)
        _VERDICTS[self.number] = line + ("\n" + detail if detail else "")
        print(_VERDICTS[self.number])
        assert not self.failed, "; ".join(self.failed)


@pytest.fixture
def criterion():
    def make(number, title):
        return Criterion(number, title)

    return make


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[n])
