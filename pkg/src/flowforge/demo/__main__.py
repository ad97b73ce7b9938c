"""Demo utilities: ``python -m flowforge.demo seed <store-root>``."""

import sys

from . import DOMAIN_FILE, seed_store
from ..model import derive_entity_schemas
from ..parser import parse_domain
from ..store import DocumentStore


def main(argv: list[str]) -> int:
    if len(argv) != 2 or argv[0] != "seed":
        print("usage: python -m flowforge.demo seed <store-root>", file=sys.stderr)
        return 2
    result = parse_domain(DOMAIN_FILE.read_text(encoding="utf-8"), str(DOMAIN_FILE))
    domain = result.model
    with DocumentStore(argv[1], derive_entity_schemas(domain)) as store:
        ids = seed_store(store, domain)
    print(f"seeded {len(ids)} articles: {ids}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
