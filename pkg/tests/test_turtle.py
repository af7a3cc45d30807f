import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathgate.rdf import (
    RDF_TYPE,
    RDFS_SUBCLASS_OF,
    Literal,
    Triple,
    TripleGraph,
    TurtleError,
    parse_turtle,
    serialize_turtle,
    subclass_closure,
)

BRICK = "https://brickschema.org/schema/1.0.3/Brick#"
BF = "https://brickschema.org/schema/1.0.3/BrickFrame#"
BOT = "https://w3id.org/bot#"
B1 = "http://building1.com#"

VAV_FRAGMENT = """
@prefix bf: <https://brickschema.org/schema/1.0.3/BrickFrame#> .
@prefix bot: <https://w3id.org/bot#> .
@prefix brick: <https://brickschema.org/schema/1.0.3/Brick#> .
@prefix building1: <http://building1.com#> .
@prefix rdf: <http://www.w3.org/1999/02/22-rdf-syntax-ns#> .
@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .

building1:VAV-1-12 a brick:VAV ;
    bf:feeds building1:HVAC-Zone-1-12 ;
    bf:hasPoint building1:Reheat-Command-1-12,
        building1:Temperature-Sensor-1-12,
        building1:Temperature-Setpoint-1-12 .

building1:Door-1-1-12 a bot:Element .

building1:Room-1-1-120 a brick:Room,
        bot:Space ;
    bot:adjacentElement building1:Door-1-1-12 .

building1:Room-1-1-121 a brick:Room,
        bot:Space ;
    bf:isLocationOf building1:Temperature-Sensor-1-12,
        building1:Temperature-Setpoint-1-12 ;
    bot:adjacentElement building1:Door-1-1-12 .
"""


class TestParse:
    def test_building_fragment(self):
        g = parse_turtle(VAV_FRAGMENT)
        vav = B1 + "VAV-1-12"
        assert Triple(vav, RDF_TYPE, BRICK + "VAV") in g
        assert len(g.match(vav, BF + "hasPoint", None)) == 3
        assert len(g.match(vav, BF + "feeds", None)) == 1
        # both rooms are adjacent to the shared door
        subjects = {t.subject for t in g.match(None, BOT + "adjacentElement", B1 + "Door-1-1-12")}
        assert subjects == {B1 + "Room-1-1-120", B1 + "Room-1-1-121"}

    def test_prefixes_only(self):
        g = parse_turtle("@prefix ex: <http://example.org/> .\n@prefix b: <http://b.io#> .")
        assert len(g) == 0
        assert g.prefixes == {"ex": "http://example.org/", "b": "http://b.io#"}

    def test_object_list_expansion(self):
        g = parse_turtle(
            "@prefix ex: <http://example.org/> .\n"
            "ex:s ex:p ex:a, ex:b, ex:c ."
        )
        assert len(g) == 3
        assert g.objects("http://example.org/s", "http://example.org/p") == {
            "http://example.org/a", "http://example.org/b", "http://example.org/c",
        }

    def test_predicate_list_expansion(self):
        g = parse_turtle(
            "@prefix ex: <http://example.org/> .\n"
            "ex:s ex:p ex:a ; ex:q ex:b ; a ex:T ."
        )
        assert len(g) == 3
        assert g.types_of("http://example.org/s") == {"http://example.org/T"}

    def test_string_literal(self):
        g = parse_turtle('@prefix ex: <http://e/> .\nex:s ex:label "Room 1" .')
        assert g.objects("http://e/s", "http://e/label") == {Literal("Room 1")}

    def test_duplicate_triples_collapse(self):
        g = parse_turtle(
            "@prefix ex: <http://e/> .\nex:s ex:p ex:o .\nex:s ex:p ex:o ."
        )
        assert len(g) == 1

    def test_unknown_prefix_reports_position(self):
        with pytest.raises(TurtleError) as err:
            parse_turtle("@prefix ex: <http://e/> .\nex:s nope:p ex:o .")
        assert err.value.line == 2
        assert "unknown prefix" in str(err.value)

    def test_unterminated_statement(self):
        with pytest.raises(TurtleError, match="unterminated statement"):
            parse_turtle("@prefix ex: <http://e/> .\nex:s ex:p ex:o")

    def test_blank_node_rejected(self):
        with pytest.raises(TurtleError, match="blank nodes"):
            parse_turtle("@prefix ex: <http://e/> .\nex:s ex:p [ ex:q ex:o ] .")

    def test_syntax_error_column(self):
        with pytest.raises(TurtleError) as err:
            parse_turtle("@prefix ex: <http://e/> .\nex:s ex:p % .")
        assert err.value.line == 2
        assert err.value.column == 11

    def test_local_name_does_not_eat_terminator(self):
        g = parse_turtle("@prefix ex: <http://e/> .\nex:s ex:p ex:Room-B-100 .")
        assert g.objects("http://e/s", "http://e/p") == {"http://e/Room-B-100"}


class TestMatch:
    @pytest.fixture(scope="class")
    def graph(self):
        return parse_turtle(VAV_FRAGMENT)

    def test_full_wildcard_returns_everything(self, graph):
        assert graph.match() == set(graph.triples)

    def test_missing_subject_empty(self, graph):
        assert graph.match(B1 + "Nonexistent", None, None) == set()

    def test_fully_specified_cardinality(self, graph):
        for t in graph:
            assert len(graph.match(*t)) == 1
        assert len(graph.match(B1 + "VAV-1-12", RDF_TYPE, BRICK + "AHU")) == 0


class TestSubclassClosure:
    def taxonomy(self, *edges, extra=()):
        triples = [Triple(a, RDFS_SUBCLASS_OF, b) for a, b in edges]
        triples += list(extra)
        return TripleGraph(triples)

    def test_descendants_from_shipped_taxonomy(self, building):
        # oracle: brute-force reflexive-transitive closure by edge relaxation
        edges = [
            (t.subject, t.object)
            for t in building.graph.match(None, RDFS_SUBCLASS_OF, None)
        ]
        reach = {BRICK + "Point"}
        changed = True
        while changed:
            changed = False
            for sub, sup in edges:
                if sup in reach and sub not in reach:
                    reach.add(sub)
                    changed = True
        assert subclass_closure(building.graph, BRICK + "Point") == reach
        assert {BRICK + "Sensor", BRICK + "Setpoint", BRICK + "Temperature_Sensor"} <= reach

    def test_leaf_is_reflexive(self):
        g = self.taxonomy(("b", "a"))
        assert subclass_closure(g, "b") == {"b"}

    def test_cycle_terminates(self):
        g = self.taxonomy(("a", "b"), ("b", "a"))
        assert subclass_closure(g, "a") == {"a", "b"}

    def test_monotone_under_added_triples(self):
        g = self.taxonomy(("c", "b"), ("b", "a"))
        before = subclass_closure(g, "a")
        g2 = TripleGraph(set(g.triples) | {Triple("d", RDFS_SUBCLASS_OF, "b")})
        assert before <= subclass_closure(g2, "a")


# --- round-trip property -----------------------------------------------------

_local = st.from_regex(r"[A-Za-z][A-Za-z0-9_\-]{0,8}", fullmatch=True)
_iri = st.builds(lambda l: "http://example.org/" + l, _local)
_term = st.one_of(_iri, st.builds(Literal, st.text(min_size=0, max_size=12)))
_triples = st.sets(st.builds(Triple, _iri, _iri, _term), min_size=0, max_size=25)


@settings(max_examples=120, deadline=None)
@given(_triples)
def test_serialize_parse_round_trip(triples):
    g = TripleGraph(triples, {"ex": "http://example.org/"})
    assert parse_turtle(serialize_turtle(g)).triples == g.triples
