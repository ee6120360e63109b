from datetime import date

import pytest

from idsynth.assets import load_portrait_corpus, load_template_pack, partition_portraits
from idsynth.metagen import IssuanceState, build_identity
from idsynth.pools import PoolSet
from idsynth.render import render_document
from idsynth.rng import stream
from idsynth.samples import make_demo_pack, make_demo_portraits, make_demo_scene

NOW = date(2024, 6, 1)


@pytest.fixture(scope="session")
def demo_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("demo")
    make_demo_pack(d / "pack")
    make_demo_portraits(d / "portraits", 60)
    make_demo_scene(d / "scenes")
    return d


@pytest.fixture(scope="session")
def pack(demo_dir):
    return load_template_pack(demo_dir / "pack")


@pytest.fixture(scope="session")
def corpus(demo_dir):
    return load_portrait_corpus(demo_dir / "portraits")


@pytest.fixture(scope="session")
def partition(corpus):
    return partition_portraits(corpus)


@pytest.fixture(scope="session")
def pools():
    return PoolSet()


@pytest.fixture(scope="session")
def identities(pack, partition, pools):
    qualified, _ = partition
    state = IssuanceState()
    return [build_identity(stream(3, "identity", i), p, pack, pools, state, NOW) for i, p in enumerate(qualified[:6])]


@pytest.fixture(scope="session")
def portraits_by_id(corpus):
    return {p.id: p for p in corpus}


@pytest.fixture(scope="session")
def genuine(pack, identities, portraits_by_id):
    ident = identities[0]
    return render_document(pack, ident, None, portraits_by_id[ident.portrait_id].image, signature_seed=5)


_CRITERIA = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line: criterion(n, ok, detail)."""
    lines = request.config.stash.setdefault(_CRITERIA, [])

    def record(n: int, ok: bool | None, detail: str) -> None:
        status = "REPORT" if ok is None else ("PASS" if ok else "FAIL")
        line = f"criterion {n:>2}: {status}  {detail}"
        lines.append((n, line))
        print(line)
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda t: t[0]):
            terminalreporter.write_line(line)
