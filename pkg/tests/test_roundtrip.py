"""Parse/print round-trip properties over randomly generated models."""

import random

import pytest

from flowforge.parser import parse_abr, parse_domain, parse_flow
from flowforge.printer import print_abr, print_domain, print_expr, print_flow

from genmodels import gen_abr, gen_domain, gen_expr, gen_flow, Names

N_QUICK = 60  # the acceptance suite runs the full >=200 per language


def _diff_hint(text, result):
    return "\n".join([text[:2000]] + [d.render() for d in result.diagnostics[:5]])


@pytest.mark.parametrize("seed", range(N_QUICK))
def test_domain_round_trip(seed):
    rng = random.Random(1000 + seed)
    model = gen_domain(rng)
    text = print_domain(model)
    result = parse_domain(text)
    assert result.ok, _diff_hint(text, result)
    assert result.model == model, text


@pytest.mark.parametrize("seed", range(N_QUICK))
def test_abr_round_trip(seed):
    rng = random.Random(2000 + seed)
    domain = gen_domain(rng)
    model = gen_abr(rng, domain)
    text = print_abr(model)
    result = parse_abr(text)
    assert result.ok, _diff_hint(text, result)
    assert result.model == model, text


@pytest.mark.parametrize("seed", range(N_QUICK))
def test_flow_round_trip(seed):
    rng = random.Random(3000 + seed)
    domain = gen_domain(rng)
    model = gen_flow(rng, domain)
    text = print_flow(model)
    result = parse_flow(text)
    assert result.ok, _diff_hint(text, result)
    assert result.model == model, text


@pytest.mark.parametrize("seed", range(200))
def test_expr_round_trip(seed):
    from flowforge.expr import parse_expr

    rng = random.Random(4000 + seed)
    expr = gen_expr(rng, Names(rng), depth=4)
    text = print_expr(expr)
    assert parse_expr(text) == expr, text


def test_fuzz_parser_total_quick():
    rng = random.Random(99)
    fixtures = [open(p).read() for p in __import__("flowforge.demo", fromlist=["BUNDLE_FILES"]).BUNDLE_FILES]
    for i in range(2000):
        kind = rng.randrange(3)
        if kind == 0:
            text = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 80))).decode(
                "utf-8", "replace")
        elif kind == 1:
            text = "".join(rng.choices(
                'domain type service io { } ( ) "x" 1.5 -> <- == set flow start ',
                k=rng.randrange(0, 60)))
        else:
            base = rng.choice(fixtures)
            cut = rng.randrange(len(base))
            text = base[:cut] + base[cut + rng.randrange(1, 20):]
        for parse in (parse_domain, parse_abr, parse_flow):
            parse(text)  # must not raise
