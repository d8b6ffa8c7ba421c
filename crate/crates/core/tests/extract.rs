mod common;

use llmsite::extract::extract;
use proptest::prelude::*;

#[test]
fn golden_counts() {
    let fixtures = common::golden_extractions();
    assert!(fixtures.len() >= 20);
    for (g, html) in fixtures {
        let c = extract(&html).unwrap();
        assert_eq!(c.paragraphs, g.paragraphs, "{}", g.name);
        assert_eq!(
            (
                c.total_chars,
                c.link_chars,
                c.list_chars,
                c.table_chars,
                c.word_count
            ),
            (g.total, g.link, g.list, g.table, g.words),
            "{}",
            g.name
        );
    }
}

#[test]
fn boilerplate_does_not_change_main_text() {
    for (i, (bare, wrapped)) in common::wrapped_pairs().iter().enumerate() {
        let a = extract(bare.as_bytes()).unwrap();
        let b = extract(wrapped.as_bytes()).unwrap();
        assert!(a.word_count > 100, "pair {i}");
        assert_eq!(a.main_text, b.main_text, "pair {i}");
        assert_eq!(b.link_chars, 0, "pair {i}");
    }
}

#[test]
fn title_and_lang() {
    let c = extract(
        b"<html lang=\"de\"><head><title> Hallo  Welt </title></head><body><p>x</p></body></html>",
    )
    .unwrap();
    assert_eq!(c.title.as_deref(), Some("Hallo Welt"));
    assert_eq!(c.lang_hint.as_deref(), Some("de"));
}

#[test]
fn undecodable_bytes_are_an_error() {
    assert!(extract(b"<html><body><p>\xff\xfe\xfd</p></body></html>").is_err());
}

fn html_fragment() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        "[a-zA-Z &<>;#0-9\u{00e9}\u{0301}\u{200b}]{0,30}",
        Just("<br>".to_string()),
        Just("&amp;".to_string()),
    ];
    leaf.prop_recursive(4, 64, 6, |inner| {
        (
            prop::sample::select(vec![
                "p", "div", "a", "li", "ul", "td", "tr", "table", "article", "main", "nav",
                "script", "span", "em", "section", "h2", "pre", "footer",
            ]),
            prop::collection::vec(inner, 0..6),
            any::<bool>(),
        )
            .prop_map(|(tag, kids, close)| {
                let body = kids.concat();
                if close {
                    format!("<{tag}>{body}</{tag}>")
                } else {
                    format!("<{tag}>{body}")
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn never_panics_and_ratios_are_fractions(body in html_fragment()) {
        let html = format!("<html><body>{body}</body></html>");
        let c = extract(html.as_bytes()).unwrap();
        let r = c.ratios();
        for v in [r.link, r.list, r.table] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(c.link_chars <= c.total_chars);
        prop_assert_eq!(c.total_chars, c.paragraphs.iter().map(|p| p.chars().count()).sum::<usize>());
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
        let _ = extract(&bytes);
    }
}
