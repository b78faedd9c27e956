import pytest

from mmpaxos.core import Round, majority_configuration


def rnd(counter, owner="a", sub=0):
    return Round(counter, owner, sub)


def cfg(label, *acceptors):
    return majority_configuration(label, acceptors or ("a1", "a2", "a3"))


def feed(node, src, msg, now=0):
    """Deliver one message and return the node's outbox."""
    node.now = now
    node.handle(src, msg)
    out, _, _ = node.drain()
    return out


@pytest.fixture
def configs():
    return {i: cfg(f"C{i}", f"x{i}1", f"x{i}2", f"x{i}3") for i in range(6)}


# One line per acceptance criterion, printed at the end of the run.
ACCEPTANCE: list = []


def report(number, name, ok, detail=""):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
