//! Main-content extraction from HTML.
//!
//! Boilerplate elements (scripts, navigation, headers, footers, asides,
//! forms) are dropped, the remaining text is cut into block-level
//! paragraphs, and the main-content subtree is chosen by text density:
//! each paragraph scores `len * (1 - link_density)^2`, credited to the
//! parent of the block that owns it (and to the block itself when it is a
//! generic container). The best-credited element wins; siblings whose
//! subtree score reaches 20% of the winner's are added back. When the page
//! has `<article>` (else `<main>`) landmarks only elements inside them can
//! win.
//!
//! Within the selection, a character counts as link, list or table text
//! when it has an `<a>`, `<li>`, or `<td>`/`<th>` ancestor inside the
//! selected subtree. The three counters are independent.

use std::collections::HashMap;

use ego_tree::{NodeId, NodeRef};
use scraper::node::Node;
use scraper::Html;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

const SIBLING_FRACTION: f64 = 0.2;

const STRIPPED: &[&str] = &[
    "script", "style", "nav", "header", "footer", "aside", "form", "noscript", "template",
    "iframe", "svg", "head", "object", "canvas",
];

const BLOCKS: &[&str] = &[
    "address",
    "article",
    "blockquote",
    "body",
    "caption",
    "dd",
    "details",
    "dialog",
    "div",
    "dl",
    "dt",
    "fieldset",
    "figcaption",
    "figure",
    "h1",
    "h2",
    "h3",
    "h4",
    "h5",
    "h6",
    "hr",
    "html",
    "li",
    "main",
    "ol",
    "p",
    "pre",
    "section",
    "summary",
    "table",
    "tbody",
    "td",
    "tfoot",
    "th",
    "thead",
    "tr",
    "ul",
];

/// Blocks that hold other blocks and can themselves be the main content.
const CONTAINERS: &[&str] = &["article", "body", "div", "main", "section"];

#[derive(Debug, Error, PartialEq)]
pub enum ExtractError {
    #[error("document is not valid UTF-8 and declares no usable charset")]
    Encoding,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractedContent {
    /// Paragraphs joined by a blank line.
    pub main_text: String,
    pub paragraphs: Vec<String>,
    /// Characters across all paragraphs; separators are not counted.
    pub total_chars: usize,
    pub link_chars: usize,
    pub list_chars: usize,
    pub table_chars: usize,
    pub word_count: usize,
    pub title: Option<String>,
    pub lang_hint: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratios {
    pub link: f64,
    pub list: f64,
    pub table: f64,
}

impl ExtractedContent {
    /// Fractions of main-text characters in links, lists and tables.
    /// All zero for an empty page.
    pub fn ratios(&self) -> Ratios {
        if self.total_chars == 0 {
            return Ratios {
                link: 0.0,
                list: 0.0,
                table: 0.0,
            };
        }
        let t = self.total_chars as f64;
        Ratios {
            link: self.link_chars as f64 / t,
            list: self.list_chars as f64 / t,
            table: self.table_chars as f64 / t,
        }
    }
}

pub fn ratios(c: &ExtractedContent) -> Ratios {
    c.ratios()
}

fn is_stripped_char(c: char) -> bool {
    matches!(
        c,
        '\u{200B}'..='\u{200D}' | '\u{2060}' | '\u{FEFF}' | '\u{00AD}'
    ) || (c.is_control() && !c.is_whitespace())
}

/// NFC-normalizes, drops zero-width and control characters, collapses
/// whitespace inside paragraphs and joins paragraphs with a blank line.
/// Paragraphs in the input are separated by blank lines.
pub fn normalize_text(raw: &str) -> String {
    let cleaned: String = raw.nfc().filter(|c| !is_stripped_char(*c)).collect();
    let mut paragraphs = Vec::new();
    let mut current = String::new();
    for line in cleaned.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                paragraphs.push(std::mem::take(&mut current));
            }
            continue;
        }
        for word in line.split_whitespace() {
            if !current.is_empty() {
                current.push(' ');
            }
            current.push_str(word);
        }
    }
    if !current.is_empty() {
        paragraphs.push(current);
    }
    paragraphs.join("\n\n")
}

fn decode(bytes: &[u8]) -> Result<String, ExtractError> {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    if let Ok(s) = std::str::from_utf8(bytes) {
        return Ok(s.to_owned());
    }
    let label = sniff_charset(bytes).ok_or(ExtractError::Encoding)?;
    let encoding =
        encoding_rs::Encoding::for_label(label.as_bytes()).ok_or(ExtractError::Encoding)?;
    encoding
        .decode_without_bom_handling_and_without_replacement(bytes)
        .map(|s| s.into_owned())
        .ok_or(ExtractError::Encoding)
}

/// Finds `charset=...` in the first 2 KiB (covers both meta forms).
fn sniff_charset(bytes: &[u8]) -> Option<String> {
    let head = &bytes[..bytes.len().min(2048)];
    let lower: Vec<u8> = head.iter().map(u8::to_ascii_lowercase).collect();
    let at = lower.windows(8).position(|w| w == b"charset=")? + 8;
    let label: String = lower[at..]
        .iter()
        .skip_while(|b| **b == b'"' || **b == b'\'')
        .take_while(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b':' | b'.'))
        .map(|b| *b as char)
        .collect();
    (!label.is_empty()).then_some(label)
}

#[derive(Clone, Copy, Default)]
struct Context {
    link: Option<NodeId>,
    list: Option<NodeId>,
    table: Option<NodeId>,
}

struct Segment {
    text: String,
    ctx: Context,
}

struct RawBlock {
    owner: NodeId,
    segments: Vec<Segment>,
}

struct Paragraph {
    owner: NodeId,
    text: String,
    ctx: Vec<Context>,
}

struct Walker {
    blocks: Vec<RawBlock>,
    current: Option<RawBlock>,
}

impl Walker {
    fn flush(&mut self) {
        if let Some(b) = self.current.take() {
            if !b.segments.is_empty() {
                self.blocks.push(b);
            }
        }
    }

    fn push(&mut self, owner: NodeId, text: String, ctx: Context) {
        match &mut self.current {
            Some(b) if b.owner == owner => b.segments.push(Segment { text, ctx }),
            _ => {
                self.flush();
                self.current = Some(RawBlock {
                    owner,
                    segments: vec![Segment { text, ctx }],
                });
            }
        }
    }

    fn walk(&mut self, node: NodeRef<'_, Node>, owner: NodeId, ctx: Context) {
        match node.value() {
            Node::Text(t) => self.push(owner, t.to_string(), ctx),
            Node::Element(el) => {
                let name = el.name();
                if STRIPPED.contains(&name) {
                    return;
                }
                if name == "br" {
                    self.push(owner, " ".into(), ctx);
                    return;
                }
                let mut ctx = ctx;
                match name {
                    "a" => ctx.link = Some(node.id()),
                    "li" => ctx.list = Some(node.id()),
                    "td" | "th" => ctx.table = Some(node.id()),
                    _ => {}
                }
                let block = BLOCKS.contains(&name);
                let owner = if block {
                    self.flush();
                    node.id()
                } else {
                    owner
                };
                for child in node.children() {
                    self.walk(child, owner, ctx);
                }
                if block {
                    self.flush();
                }
            }
            Node::Document | Node::Fragment => {
                for child in node.children() {
                    self.walk(child, owner, ctx);
                }
            }
            _ => {}
        }
    }
}

/// Whitespace-collapsed paragraph with one context per output character.
fn normalize_block(block: RawBlock) -> Option<Paragraph> {
    let mut text = String::new();
    let mut ctx = Vec::new();
    let mut pending_space: Option<Context> = None;
    for seg in block.segments {
        let normalized: String = seg.text.nfc().collect();
        for c in normalized.chars() {
            if is_stripped_char(c) {
                continue;
            }
            if c.is_whitespace() {
                if !text.is_empty() && pending_space.is_none() {
                    pending_space = Some(seg.ctx);
                }
                continue;
            }
            if let Some(sc) = pending_space.take() {
                text.push(' ');
                ctx.push(sc);
            }
            text.push(c);
            ctx.push(seg.ctx);
        }
    }
    (!text.is_empty()).then_some(Paragraph {
        owner: block.owner,
        text,
        ctx,
    })
}

/// Extracts the main content of an HTML document.
pub fn extract(html: &[u8]) -> Result<ExtractedContent, ExtractError> {
    let source = decode(html)?;
    let doc = Html::parse_document(&source);
    let tree = &doc.tree;

    let lang_hint = doc
        .root_element()
        .value()
        .attr("lang")
        .map(|l| l.trim().to_owned())
        .filter(|l| !l.is_empty());
    let title = find_first(tree.root(), "title")
        .or_else(|| find_first(tree.root(), "h1"))
        .map(|n| normalize_text(&collect_text(n)))
        .filter(|t| !t.is_empty());

    let mut walker = Walker {
        blocks: Vec::new(),
        current: None,
    };
    walker.walk(tree.root(), tree.root().id(), Context::default());
    walker.flush();
    let paragraphs: Vec<Paragraph> = walker
        .blocks
        .into_iter()
        .filter_map(normalize_block)
        .collect();

    let empty = ExtractedContent {
        title: title.clone(),
        lang_hint: lang_hint.clone(),
        ..Default::default()
    };
    let Some(selected) = select_main(tree, &paragraphs) else {
        return Ok(empty);
    };

    let mut out = ExtractedContent {
        title,
        lang_hint,
        ..Default::default()
    };
    for p in &paragraphs {
        let Some(root) = selected
            .iter()
            .copied()
            .find(|s| is_within(tree, p.owner, *s))
        else {
            continue;
        };
        let inside = |id: Option<NodeId>| id.is_some_and(|id| is_within(tree, id, root));
        for c in &p.ctx {
            out.link_chars += usize::from(inside(c.link));
            out.list_chars += usize::from(inside(c.list));
            out.table_chars += usize::from(inside(c.table));
        }
        out.total_chars += p.ctx.len();
        out.word_count += p.text.split_whitespace().count();
        out.paragraphs.push(p.text.clone());
    }
    out.main_text = out.paragraphs.join("\n\n");
    Ok(out)
}

/// Picks the winning element plus qualifying siblings, in document order.
fn select_main(tree: &ego_tree::Tree<Node>, paragraphs: &[Paragraph]) -> Option<Vec<NodeId>> {
    if paragraphs.is_empty() {
        return None;
    }
    let landmarks = landmark_roots(tree);
    let allowed =
        |id: NodeId| landmarks.is_empty() || landmarks.iter().any(|l| is_within(tree, id, *l));

    let mut credit: HashMap<NodeId, (f64, usize)> = HashMap::new();
    let mut subtree: HashMap<NodeId, f64> = HashMap::new();
    for p in paragraphs {
        let len = p.ctx.len();
        let links = p.ctx.iter().filter(|c| c.link.is_some()).count();
        let density = links as f64 / len as f64;
        let score = len as f64 * (1.0 - density).powi(2);

        let owner = tree.get(p.owner).expect("owner is in the tree");
        let mut targets = Vec::with_capacity(2);
        if let Some(parent) = owner.parent() {
            targets.push(parent.id());
        }
        if element_name(owner).is_some_and(|n| CONTAINERS.contains(&n)) {
            targets.push(owner.id());
        }
        for t in targets {
            let e = credit.entry(t).or_default();
            e.0 += score;
            e.1 += len;
        }
        let mut node = Some(owner);
        while let Some(n) = node {
            *subtree.entry(n.id()).or_default() += score;
            node = n.parent();
        }
    }

    // Ties go to the later (deeper) node in document order.
    let order: HashMap<NodeId, usize> = tree
        .root()
        .descendants()
        .enumerate()
        .map(|(i, n)| (n.id(), i))
        .collect();
    let (&winner, &(win_score, _)) = credit
        .iter()
        .filter(|(id, _)| element_name(tree.get(**id).unwrap()).is_some() && allowed(**id))
        .max_by(|a, b| {
            a.1 .0
                .total_cmp(&b.1 .0)
                .then(a.1 .1.cmp(&b.1 .1))
                .then(order[a.0].cmp(&order[b.0]))
        })?;

    let win_node = tree.get(winner).unwrap();
    let mut selected = vec![winner];
    if let Some(parent) = win_node.parent() {
        selected = parent
            .children()
            .filter(|c| {
                c.id() == winner
                    || (element_name(*c).is_some()
                        && allowed(c.id())
                        && subtree.get(&c.id()).copied().unwrap_or(0.0)
                            >= SIBLING_FRACTION * win_score)
            })
            .map(|c| c.id())
            .collect();
    }
    Some(selected)
}

fn landmark_roots(tree: &ego_tree::Tree<Node>) -> Vec<NodeId> {
    for tag in ["article", "main"] {
        let found: Vec<NodeId> = visible_elements(tree.root())
            .into_iter()
            .filter(|n| element_name(*n) == Some(tag))
            .map(|n| n.id())
            .collect();
        if !found.is_empty() {
            return found;
        }
    }
    Vec::new()
}

/// Elements not inside a stripped subtree.
fn visible_elements(root: NodeRef<'_, Node>) -> Vec<NodeRef<'_, Node>> {
    let mut out = Vec::new();
    let mut stack = vec![root];
    while let Some(n) = stack.pop() {
        if let Some(name) = element_name(n) {
            if STRIPPED.contains(&name) {
                continue;
            }
            out.push(n);
        }
        let children: Vec<_> = n.children().collect();
        stack.extend(children.into_iter().rev());
    }
    out
}

fn element_name<'a>(n: NodeRef<'a, Node>) -> Option<&'a str> {
    match n.value() {
        Node::Element(e) => Some(e.name()),
        _ => None,
    }
}

fn is_within(tree: &ego_tree::Tree<Node>, node: NodeId, root: NodeId) -> bool {
    if node == root {
        return true;
    }
    tree.get(node)
        .map(|n| n.ancestors().any(|a| a.id() == root))
        .unwrap_or(false)
}

fn find_first<'a>(root: NodeRef<'a, Node>, tag: &str) -> Option<NodeRef<'a, Node>> {
    root.descendants().find(|n| element_name(*n) == Some(tag))
}

fn collect_text(n: NodeRef<'_, Node>) -> String {
    n.descendants()
        .filter_map(|d| match d.value() {
            Node::Text(t) => Some(t.to_string()),
            _ => None,
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn page(body: &str) -> Vec<u8> {
        format!("<!doctype html><html lang=\"en\"><head><title>T</title></head><body>{body}</body></html>").into_bytes()
    }

    #[test]
    fn single_paragraph() {
        let text = "x".repeat(400);
        let c = extract(&page(&format!("<p>{text}</p>"))).unwrap();
        assert_eq!(c.total_chars, 400);
        assert_eq!((c.link_chars, c.list_chars, c.table_chars), (0, 0, 0));
        assert_eq!(c.paragraphs, vec![text]);
        assert_eq!(c.title.as_deref(), Some("T"));
        assert_eq!(c.lang_hint.as_deref(), Some("en"));
    }

    #[test]
    fn pure_list() {
        let items: String = (0..10)
            .map(|i| format!("<li>item number {i:02} here!</li>"))
            .collect();
        let c = extract(&page(&format!("<ul>{items}</ul>"))).unwrap();
        assert_eq!(c.paragraphs.len(), 10);
        assert!(c.paragraphs.iter().all(|p| p.chars().count() == 20));
        assert_eq!(c.total_chars, 200);
        assert_eq!(c.list_chars, 200);
        assert_eq!(c.ratios().list, 1.0);
    }

    #[test]
    fn empty_body() {
        let c = extract(&page("")).unwrap();
        assert_eq!(c.total_chars, 0);
        assert_eq!(
            c.ratios(),
            Ratios {
                link: 0.0,
                list: 0.0,
                table: 0.0
            }
        );
        assert_eq!(extract(b"").unwrap().total_chars, 0);
    }

    #[test]
    fn link_inside_list_cell_counts_everywhere() {
        let body = "<p>hello</p><table><tr><td><ul><li><a href=\"/x\">abcde</a>fg</li></ul></td></tr></table>";
        let c = extract(&page(body)).unwrap();
        assert_eq!(c.total_chars, 12);
        assert_eq!(c.link_chars, 5);
        assert_eq!(c.list_chars, 7);
        assert_eq!(c.table_chars, 7);
    }

    #[test]
    fn boilerplate_is_dropped() {
        let article = "<p>The quick brown fox jumps over the lazy dog near the river bank.</p>";
        let plain = extract(&page(article)).unwrap();
        let wrapped = extract(&page(&format!(
            "<nav><a href=/>Home</a> <a href=/b>Blog</a></nav><script>var x = 1;</script>\
             <div id=content>{article}</div><footer>Copyright 2024</footer>"
        )))
        .unwrap();
        assert_eq!(plain.main_text, wrapped.main_text);
    }

    #[test]
    fn link_farm_sibling_excluded() {
        let prose = "<p>".to_owned() + &"word ".repeat(80) + "</p>";
        let links: String = (0..5)
            .map(|i| format!("<a href=/{i}>link {i}</a> "))
            .collect();
        let c = extract(&page(&format!(
            "<div>{prose}{prose}</div><div>{links}</div>"
        )))
        .unwrap();
        assert_eq!(c.link_chars, 0);
        assert_eq!(c.paragraphs.len(), 2);
    }

    #[test]
    fn article_landmark_constrains() {
        let big = "<p>".to_owned() + &"outside ".repeat(100) + "</p>";
        let c = extract(&page(&format!(
            "<div>{big}</div><article><p>inside text</p></article>"
        )))
        .unwrap();
        assert_eq!(c.main_text, "inside text");
    }

    #[test]
    fn legacy_charset() {
        let mut bytes = b"<html><head><meta charset=\"windows-1252\"></head><body><p>caf".to_vec();
        bytes.push(0xE9);
        bytes.extend_from_slice(b"</p></body></html>");
        assert_eq!(extract(&bytes).unwrap().main_text, "café");
        assert_eq!(
            extract(&[0xff, 0xfe, 0x00, 0xc3]).unwrap_err(),
            ExtractError::Encoding
        );
    }

    #[test]
    fn normalize_cases() {
        assert_eq!(normalize_text("a  b\t c"), "a b c");
        assert_eq!(normalize_text(""), "");
        assert_eq!(normalize_text("zero\u{200B}width"), "zerowidth");
        assert_eq!(
            normalize_text("one\n\n\ntwo  x\nthree"),
            "one\n\ntwo x three"
        );
        assert_eq!(normalize_text("e\u{0301}"), "\u{00E9}");
    }

    #[test]
    fn headings_are_paragraphs() {
        let c = extract(&page("<h2>Heading</h2><p>Body text here.</p>")).unwrap();
        assert_eq!(c.paragraphs, vec!["Heading", "Body text here."]);
        assert_eq!(c.total_chars, 7 + 15);
    }
}
