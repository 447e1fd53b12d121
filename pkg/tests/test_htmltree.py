import pytest

from prodex.htmltree import (
    Element,
    block_text_lines,
    parse_html,
    parse_selector,
    select,
    serialize,
    text_content,
)


def test_parse_builds_tree_with_attrs():
    tree = parse_html('<div class="a b" id="x" style="c"><p>hi</p></div>')
    divs = select(tree, "div")
    assert len(divs) == 1
    assert divs[0].attrs == {"class": "a b", "id": "x", "style": "c"}
    assert divs[0].classes() == {"a", "b"}


def test_void_elements_do_not_swallow_siblings():
    tree = parse_html("<div><br><img src=x><p>after</p></div>")
    assert [e.tag for e in select(tree, "div > p")] == ["p"]


def test_mismatched_end_tags_recover():
    tree = parse_html("<div><p>a</div><span>b</span>")
    assert serialize(tree) == "<div><p>a</p></div><span>b</span>"


def test_implicit_close_for_list_items_and_cells():
    tree = parse_html("<ul><li>1<li>2</ul><table><tr><td>a<td>b</table>")
    assert len(select(tree, "ul > li")) == 2
    assert len(select(tree, "tr > td")) == 2


def test_stray_end_tag_ignored():
    tree = parse_html("<div>a</span>b</div>")
    assert text_content(tree) == "a b"


def test_comments_and_doctype_dropped():
    tree = parse_html("<!DOCTYPE html><!-- hidden --><p>x</p>")
    assert serialize(tree) == "<p>x</p>"


def test_entities_round_trip_through_serialize():
    tree = parse_html("<p>a &amp; b &lt;c&gt;</p>")
    out = serialize(tree)
    assert out == "<p>a &amp; b &lt;c&gt;</p>"
    assert serialize(parse_html(out)) == out


def test_duplicate_attributes_keep_first():
    tree = parse_html('<p class="one" class="two">x</p>')
    assert select(tree, "p")[0].attrs["class"] == "one"


def test_text_content_joins_with_single_spaces():
    tree = parse_html("<div><span>3,5</span> <span>g</span></div>")
    assert text_content(tree) == "3,5 g"


def test_block_text_lines_separate_blocks():
    tree = parse_html("<div><p>Zutaten:</p><p>Zucker</p></div>")
    assert block_text_lines(tree) == ["Zutaten:", "Zucker"]


def test_block_text_lines_br_breaks():
    tree = parse_html("<p>one<br>two</p>")
    assert block_text_lines(tree) == ["one", "two"]


class TestSelectors:
    def test_tag_class_id_compound(self):
        tree = parse_html(
            '<div class="n"><td class="a b" id="k">x</td><td class="a">y</td></div>'
        )
        assert len(select(tree, "td.a")) == 2
        assert len(select(tree, "td.a.b")) == 1
        assert len(select(tree, "#k")) == 1
        assert len(select(tree, "td#k.a")) == 1

    def test_descendant_and_child(self):
        tree = parse_html(
            '<div class="outer"><div class="inner"><p>deep</p></div><p>shallow</p></div>'
        )
        assert len(select(tree, "div.outer p")) == 2
        assert len(select(tree, "div.outer > p")) == 1
        assert len(select(tree, "div.inner > p")) == 1

    def test_universal(self):
        tree = parse_html('<div><p class="q">x</p></div>')
        assert len(select(tree, "*.q")) == 1
        assert len(select(tree, "div > *")) == 1

    def test_document_order(self):
        tree = parse_html("<div><td>1</td><td>2</td><td>3</td></div>")
        assert [text_content(e) for e in select(tree, "td")] == ["1", "2", "3"]

    @pytest.mark.parametrize(
        "bad",
        ["td[", "", "  ", "p >", "> p", "p ~ q", "a:hover", "p[x=y]", "p > > q"],
    )
    def test_invalid_selectors_rejected(self, bad):
        with pytest.raises(ValueError):
            parse_selector(bad)

    def test_match_limit_caps_scanning(self):
        html = "<div>" + "<p>x</p>" * 50 + "</div>"
        tree = parse_html(html)
        assert len(select(tree, "p", limit=10)) <= 10


def test_serialize_bare_attribute():
    tree = parse_html("<input disabled>")
    assert serialize(tree) == "<input disabled>"


def test_iter_elements_document_order():
    tree = parse_html("<a><b></b></a><c></c>")
    assert [e.tag for e in tree.iter_elements()] == ["a", "b", "c"]


def test_element_dataclass_direct_construction():
    el = Element(tag="p", attrs={"class": "x"})
    assert serialize(el) == '<p class="x"></p>'
