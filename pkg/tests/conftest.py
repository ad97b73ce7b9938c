import pytest

from flowforge import DocumentStore, Runtime, load_bundle
from flowforge import demo as conduit_demo


@pytest.fixture(scope="session")
def conduit_files():
    return list(conduit_demo.BUNDLE_FILES)


@pytest.fixture(scope="session")
def conduit_bundle(conduit_files):
    bundle, parse_diags = load_bundle(conduit_files)
    assert not parse_diags, [d.render() for d in parse_diags]
    assert bundle.ok, bundle.report.render()
    return bundle


@pytest.fixture(scope="session")
def conduit_domain(conduit_bundle):
    return conduit_bundle.domains["Conduit"]


@pytest.fixture
def seeded_store(tmp_path, conduit_bundle, conduit_domain):
    store = DocumentStore(tmp_path / "store", conduit_bundle.entity_schemas())
    conduit_demo.seed_store(store, conduit_domain)
    yield store
    store.close()


@pytest.fixture
def conduit_runtime(conduit_bundle, seeded_store):
    return Runtime(conduit_bundle, seeded_store)
