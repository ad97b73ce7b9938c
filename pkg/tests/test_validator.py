import pytest

from flowforge.parser import parse_abr, parse_domain, parse_flow
from flowforge.validator import (
    check_dataflow_visibility,
    infer_start,
    match_loops,
    validate_bundle,
)
from flowforge.source import Severity


def parse_ok(parse, text):
    result = parse(text)
    assert result.ok, "\n".join(d.render() for d in result.diagnostics)
    return result.model


def bundle_of(domain_text=None, abr_text=None, flow_text=None, **kw):
    domains = [parse_ok(parse_domain, domain_text)] if domain_text else []
    abrs = [parse_ok(parse_abr, abr_text)] if abr_text else []
    flow = parse_ok(parse_flow, flow_text) if flow_text else None
    return validate_bundle(domains, abrs, flow, **kw)


TINY_DOMAIN = """
domain D {
  type Article {
    slug: STRING
    body: STRING
    tags: set STRING
    stars: INTEGER
  }
  service Render {
    in text: STRING
    out html: STRING
  }
  io Screen {
    out message: STRING
    in answer: STRING
  }
  activity Show {
    call Render {
      text <- article.body
      html -> html
    }
    io Screen {
      show message <- html
      ask answer -> answer
    }
  }
}
"""

TINY_ABR = """
bindings B for D {
  implement Render as MOCK {
    fixture "f.json"
  }
}
"""


def errors(bundle):
    return bundle.report.error_codes()


def test_conduit_bundle_clean(conduit_bundle):
    assert conduit_bundle.report.diagnostics == []
    assert conduit_bundle.ok


def test_tiny_bundle_clean():
    flow = """
    flow F uses D {
      retrieve Get { target article type Article }
      step S = activity Show
      Get -> S
    }
    """
    b = bundle_of(TINY_DOMAIN, TINY_ABR, flow)
    assert b.ok, b.report.render()
    assert b.inferred_start == "Get"


def test_unknown_activity():
    flow = """
    flow F uses D {
      step S = activity Nope
    }
    """
    b = bundle_of(TINY_DOMAIN, TINY_ABR, flow)
    assert errors(b) == {"E_UNKNOWN_ACTIVITY"}


def test_unbound_service():
    flow = """
    flow F uses D {
      retrieve Get { target article type Article }
      step S = activity Show
      Get -> S
    }
    """
    b = bundle_of(TINY_DOMAIN, None, flow)
    assert errors(b) == {"E_UNBOUND_SERVICE"}


def test_abr_param_mismatch():
    abr = """
    bindings B for D {
      implement Render as MOCK {
        fixture "f.json"
        param mdText -> mdText
        result html <- html
      }
    }
    """
    b = bundle_of(TINY_DOMAIN, abr, None)
    assert "E_PARAM_MISMATCH" in errors(b)


def test_name_collision_across_domains():
    other = """
    domain E {
      type Article { x: STRING }
    }
    """
    flow = "flow F uses D, E { script S { let x = 1 } }"
    domains = [parse_ok(parse_domain, TINY_DOMAIN), parse_ok(parse_domain, other)]
    b = validate_bundle(domains, [], parse_ok(parse_flow, flow))
    assert errors(b) == {"E_NAME_COLLISION"}


# start inference -----------------------------------------------------------


def test_infer_start_linear_conduit_variant(conduit_files):
    # the paginated fixture needs its explicit start; the linear variant
    # (no back edge) infers GetArticles as the only in-degree-0 step
    text = """
    flow Linear uses Conduit {
      retrieve GetArticles { target articles type Article set true }
      step ShowArticleList = activity ShowArticleList
      retrieve GetArticleDetails { target article type Article where slug == selectedSlug }
      step ShowArticle = activity ShowArticle
      GetArticles -> ShowArticleList
      ShowArticleList -> GetArticleDetails when action == "select"
      GetArticleDetails -> ShowArticle
    }
    """
    flow = parse_ok(parse_flow, text)
    start, diags = infer_start(flow)
    assert start == "GetArticles"
    assert diags == []


def test_infer_start_pure_cycle_is_ambiguous():
    text = """
    flow Cycle uses D {
      script A { let x = 1 }
      script B { x = x + 1 }
      A -> B
      B -> A
    }
    """
    start, diags = infer_start(parse_ok(parse_flow, text))
    assert start is None
    assert [d.code for d in diags] == ["E_AMBIGUOUS_START"]


def test_start_step_resolves_cycle():
    text = """
    flow Cycle uses D {
      start begin
      script A { let x = 1 }
      script B { x = x + 1 }
      begin -> A
      A -> B
      B -> A
    }
    """
    start, diags = infer_start(parse_ok(parse_flow, text))
    assert start == "A" and diags == []


def test_start_with_incoming_transition():
    text = """
    flow F uses D {
      start begin
      script A { let x = 1 }
      begin -> A
      A -> begin
    }
    """
    start, diags = infer_start(parse_ok(parse_flow, text))
    assert start is None
    assert [d.code for d in diags] == ["E_START_HAS_INCOMING"]


def test_multiple_start_steps():
    text = """
    flow F uses D {
      start one
      start two
      script A { let x = 1 }
      one -> A
      two -> A
    }
    """
    start, diags = infer_start(parse_ok(parse_flow, text))
    assert start is None
    assert [d.code for d in diags] == ["E_MULTIPLE_START_STEPS"]


# loops ----------------------------------------------------------------------


def test_match_single_loop():
    text = """
    flow F uses D {
      script Init { let items = [] let n = 0 }
      loop L over items as item {
        script A { n = n + 1 }
        script B { n = n + 1 }
        A -> B
      }
      Init -> L
    }
    """
    flow = parse_ok(parse_flow, text)
    loops, diags = match_loops(flow)
    assert diags == []
    assert len(loops) == 1
    assert loops[0].start == "L" and loops[0].end == "L_end"
    assert loops[0].body == {"A", "B"}


def test_unmatched_loop():
    text = """
    flow F uses D {
      startloop L over items as item
      script A { let x = 1 }
      L -> A
    }
    """
    loops, diags = match_loops(parse_ok(parse_flow, text))
    assert [d.code for d in diags] == ["E_UNMATCHED_LOOP"]


def test_nested_loops_pair():
    text = """
    flow F uses D {
      script Init { let outer = [] let n = 0 }
      loop L1 over outer as a {
        loop L2 over a.items as b {
          script Bump { n = n + 1 }
        }
      }
      Init -> L1
    }
    """
    flow = parse_ok(parse_flow, text)
    loops, diags = match_loops(flow)
    assert diags == []
    assert len(loops) == 2
    by_start = {lp.start: lp for lp in loops}
    assert "L2" in by_start["L1"].body
    assert by_start["L2"].body == {"Bump"}
    # strict containment: nesting depth two
    assert by_start["L2"].region < by_start["L1"].region | {"L1", "L1_end"} | by_start["L1"].body


def test_loop_crossing_detected():
    text = """
    flow F uses D {
      script Init { let items = [] }
      startloop L over items as item
      script A { let x = 1 }
      script B { x = x + 1 }
      endloop LE matches L
      script Out { let y = 2 }
      Init -> L
      L -> A
      A -> B
      B -> LE
      Out -> B
      LE -> Out
    }
    """
    loops, diags = match_loops(parse_ok(parse_flow, text))
    assert "E_LOOP_CROSSING" in {d.code for d in diags}


def test_loop_overlap_detected():
    text = """
    flow F uses D {
      script Init { let u = [] let v = [] }
      startloop S1 over u as x
      startloop S2 over v as y
      endloop E1 matches S1
      endloop E2 matches S2
      Init -> S1
      S1 -> S2
      S2 -> E1
      E1 -> E2
    }
    """
    loops, diags = match_loops(parse_ok(parse_flow, text))
    assert "E_LOOP_OVERLAP" in {d.code for d in diags}


# visibility -------------------------------------------------------------------


def visibility_codes(flow_text, domain_text=TINY_DOMAIN, abr_text=TINY_ABR):
    b = bundle_of(domain_text, abr_text, flow_text)
    return {(d.severity, d.code) for d in b.report.diagnostics}, b


def test_conduit_visibility_clean(conduit_bundle):
    assert check_dataflow_visibility(conduit_bundle) == []


def test_unproduced_read_is_error():
    flow = """
    flow F uses D {
      script S { let y = x + 1 }
    }
    """
    found, b = visibility_codes(flow)
    assert (Severity.ERROR, "E_UNREACHABLE_VARIABLE") in found


def test_diamond_partial_definition_warns():
    flow = """
    flow F uses D {
      script A { let t = 1 }
      script B { let y = 1 }
      script C { let z = 1 }
      script J { let w = y + 1 }
      A -> B when t == 1
      A -> C
      B -> J
      C -> J
    }
    """
    found, b = visibility_codes(flow)
    assert (Severity.WARNING, "W_PARTIALLY_DEFINED_VARIABLE") in found
    assert not any(sev is Severity.ERROR for sev, _ in found)


def test_diamond_against_path_enumeration_oracle():
    # oracle: enumerate every acyclic path from the start to the reader and
    # check whether a producer precedes it on all / some / no paths
    flow_text = """
    flow F uses D {
      script A { let t = 1 }
      script B { let y = 1 }
      script C { let z = 1 }
      script J { let w = y + 1 }
      A -> B when t == 1
      A -> C
      B -> J
      C -> J
    }
    """
    flow = parse_ok(parse_flow, flow_text)
    producers = {"A": {"t"}, "B": {"y"}, "C": {"z"}, "J": {"w"}}

    def paths(frm, to, seen=()):
        if frm == to:
            yield seen + (frm,)
            return
        for t in flow.outgoing(frm):
            if t.target not in seen:
                yield from paths(t.target, to, seen + (frm,))

    all_paths = list(paths("A", "J"))
    assert len(all_paths) == 2
    produced_on = [any("y" in producers[s] for s in p[:-1]) for p in all_paths]
    assert any(produced_on) and not all(produced_on)  # oracle says: warning

    found, _ = visibility_codes(flow_text)
    assert (Severity.WARNING, "W_PARTIALLY_DEFINED_VARIABLE") in found


def test_visibility_monotonic_in_new_edges():
    base = """
    flow F uses D {{
      start begin
      script P {{ let y = 1 }}
      script A {{ let t = 1 }}
      script J {{ let w = y + 1 }}
      begin -> A
      A -> J
      {extra}
    }}
    """
    found_without, _ = visibility_codes(base.format(extra=""))
    assert (Severity.ERROR, "E_UNREACHABLE_VARIABLE") in found_without
    # adding a producing path turns the error into (at most) a warning
    found_with, bundle = visibility_codes(
        base.format(extra="A -> P when t == 1\nP -> J"))
    assert (Severity.ERROR, "E_UNREACHABLE_VARIABLE") not in found_with
    assert (Severity.WARNING, "W_PARTIALLY_DEFINED_VARIABLE") in found_with


def test_loop_variable_scoped_to_body():
    flow = """
    flow F uses D {
      script Init { let items = [] }
      loop L over items as item {
        script Use { let t = item_index }
      }
      script After { let x = item_index + 1 }
      Init -> L
      L_end -> After
    }
    """
    found, b = visibility_codes(flow)
    assert (Severity.ERROR, "E_UNREACHABLE_VARIABLE") in found


def test_loop_body_local_lets_die_with_frame():
    flow = """
    flow F uses D {
      script Init { let items = [] }
      loop L over items as item {
        script Mk { let tmp = 1 }
      }
      script After { let x = tmp + 1 }
      Init -> L
      L_end -> After
    }
    """
    found, b = visibility_codes(flow)
    assert (Severity.ERROR, "E_UNREACHABLE_VARIABLE") in found


def test_pre_declared_accumulator_survives_loop():
    flow = """
    flow F uses D {
      script Init { let items = [] let n = 0 }
      loop L over items as item {
        script Bump { n = n + 1 }
      }
      script After { let x = n + 1 }
      Init -> L
      L_end -> After
    }
    """
    b = bundle_of(TINY_DOMAIN, TINY_ABR, flow)
    assert b.ok, b.report.render()


# mapping type checks ------------------------------------------------------------


def test_mapping_types_clean(conduit_bundle):
    assert conduit_bundle.ok


def test_boolean_param_from_string_path():
    domain = """
    domain D {
      type Article { body: STRING }
      service Render { in flag: BOOLEAN out html: STRING }
      activity Show {
        call Render {
          flag <- article.body
          html -> html
        }
      }
    }
    """
    flow = """
    flow F uses D {
      retrieve Get { target article type Article }
      step S = activity Show
      Get -> S
    }
    """
    abr = 'bindings B for D { implement Render as MOCK { fixture "f.json" } }'
    b = bundle_of(domain, abr, flow)
    assert "E_TYPE_MISMATCH" in errors(b)


def test_scalar_param_from_set_path():
    domain = """
    domain D {
      type Article { tags: set STRING }
      service Render { in text: STRING out html: STRING }
      activity Show {
        call Render {
          text <- article.tags
          html -> html
        }
      }
    }
    """
    flow = """
    flow F uses D {
      retrieve Get { target article type Article }
      step S = activity Show
      Get -> S
    }
    """
    abr = 'bindings B for D { implement Render as MOCK { fixture "f.json" } }'
    b = bundle_of(domain, abr, flow)
    assert "E_SET_SCALAR_MISMATCH" in errors(b)


def test_bad_attribute_path():
    flow = """
    flow F uses D {
      retrieve Get { target article type Article }
      step S = activity Show
      Get -> S
    }
    """
    domain = TINY_DOMAIN.replace("text <- article.body", "text <- article.nope")
    b = bundle_of(domain, TINY_ABR, flow)
    assert "E_BAD_PATH" in errors(b)


def test_integer_promotes_to_float_param():
    domain = """
    domain D {
      type Article { stars: INTEGER }
      service Render { in weight: FLOAT out html: STRING }
      activity Show {
        call Render {
          weight <- article.stars
          html -> html
        }
      }
    }
    """
    flow = """
    flow F uses D {
      retrieve Get { target article type Article }
      step S = activity Show
      Get -> S
    }
    """
    abr = 'bindings B for D { implement Render as MOCK { fixture "f.json" } }'
    b = bundle_of(domain, abr, flow)
    assert b.ok, b.report.render()


def test_criterion_type_mismatch():
    flow = """
    flow F uses D {
      retrieve Get { target xs type Article set true where stars > "high" }
    }
    """
    b = bundle_of(TINY_DOMAIN, TINY_ABR, flow)
    assert "E_TYPE_MISMATCH" in errors(b)


def test_criterion_on_set_field_needs_contains():
    flow = """
    flow F uses D {
      retrieve Get { target xs type Article set true where tags == "x" }
    }
    """
    b = bundle_of(TINY_DOMAIN, TINY_ABR, flow)
    assert "E_SET_SCALAR_MISMATCH" in errors(b)


def test_multiple_unconditioned_transitions_rejected():
    flow = """
    flow F uses D {
      script A { let x = 1 }
      script B { let y = 1 }
      script C { let z = 1 }
      A -> B
      A -> C
    }
    """
    b = bundle_of(TINY_DOMAIN, TINY_ABR, flow)
    assert "E_MULTIPLE_DEFAULTS" in errors(b)


def test_condition_must_be_boolean():
    flow = """
    flow F uses D {
      script A { let x = 1 }
      script B { let y = 1 }
      A -> B when x + 1
    }
    """
    b = bundle_of(TINY_DOMAIN, TINY_ABR, flow)
    assert "E_TYPE_MISMATCH" in errors(b)


def test_multi_io_activity_rejected():
    domain = """
    domain D {
      io One { out a: STRING }
      io Two { out b: STRING }
      activity Chatty {
        io One { show a = "x" }
        io Two { show b = "y" }
      }
    }
    """
    b = bundle_of(domain)
    assert "E_MULTI_IO" in errors(b)


def test_unknown_kind_with_strict_registry():
    abr = 'bindings B for D { implement Render as FTP { host "h" } }'
    model = parse_abr(abr, known_kinds=frozenset({"REST", "PROCESS", "MOCK", "FTP"})).model
    domain = parse_ok(parse_domain, TINY_DOMAIN)
    b = validate_bundle([domain], [model], None,
                        known_kinds=frozenset({"REST", "PROCESS", "MOCK"}))
    assert "E_UNKNOWN_KIND" in errors(b)


def test_external_vars_satisfy_visibility():
    from flowforge.expr import StaticType
    from flowforge.values import BasicType

    flow = """
    flow F uses D {
      script S { let y = seeded + 1 }
    }
    """
    b = bundle_of(TINY_DOMAIN, TINY_ABR, flow)
    assert "E_UNREACHABLE_VARIABLE" in errors(b)
    domains = [parse_ok(parse_domain, TINY_DOMAIN)]
    abrs = [parse_ok(parse_abr, TINY_ABR)]
    flow_model = parse_ok(parse_flow, flow)
    b2 = validate_bundle(domains, abrs, flow_model,
                         external_vars={"seeded": StaticType(BasicType.INTEGER)})
    assert b2.ok, b2.report.render()
