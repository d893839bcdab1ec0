//! Ideographic Description Sequences: tokens, trees, and the character dictionary.
//!
//! A character layout is written in prefix order: a structure operator from the
//! Unicode IDC block (U+2FF0..=U+2FFB) followed by its two or three children.
//! Radical labels are either a single codepoint or a braced multi-codepoint atom
//! such as `{CDP-8B7C}`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdsError {
    #[error("empty IDS input")]
    EmptyInput,
    #[error("operator {op} at token {position} expects {expected} children, input ended")]
    ArityError { op: char, position: usize, expected: usize },
    #[error("trailing input after complete tree at token {position}")]
    TrailingInput { position: usize },
    #[error("unterminated radical atom starting at char {position}")]
    UnterminatedAtom { position: usize },
    #[error("invalid radical label {0:?}")]
    InvalidLabel(String),
}

#[derive(Debug, Error)]
pub enum DictError {
    #[error("reading dictionary: {0}")]
    Io(#[from] std::io::Error),
    #[error("dictionary has no valid entries ({rejected} lines rejected)")]
    EmptyDict { rejected: usize },
}

/// The twelve ideographic description operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StructOp {
    LeftRight,
    TopBottom,
    LeftMidRight,
    TopMidBottom,
    SurroundFull,
    SurroundAbove,
    SurroundBelow,
    SurroundLeft,
    SurroundUpperLeft,
    SurroundUpperRight,
    SurroundLowerLeft,
    Overlaid,
}

impl StructOp {
    pub const ALL: [StructOp; 12] = [
        StructOp::LeftRight,
        StructOp::TopBottom,
        StructOp::LeftMidRight,
        StructOp::TopMidBottom,
        StructOp::SurroundFull,
        StructOp::SurroundAbove,
        StructOp::SurroundBelow,
        StructOp::SurroundLeft,
        StructOp::SurroundUpperLeft,
        StructOp::SurroundUpperRight,
        StructOp::SurroundLowerLeft,
        StructOp::Overlaid,
    ];

    pub fn from_char(c: char) -> Option<StructOp> {
        let code = c as u32;
        if (0x2FF0..=0x2FFB).contains(&code) {
            Some(Self::ALL[(code - 0x2FF0) as usize])
        } else {
            None
        }
    }

    pub fn as_char(self) -> char {
        char::from_u32(0x2FF0 + self as u32).expect("IDC block is valid")
    }

    pub fn arity(self) -> usize {
        match self {
            StructOp::LeftMidRight | StructOp::TopMidBottom => 3,
            _ => 2,
        }
    }

    pub fn is_surround(self) -> bool {
        matches!(
            self,
            StructOp::SurroundFull
                | StructOp::SurroundAbove
                | StructOp::SurroundBelow
                | StructOp::SurroundLeft
                | StructOp::SurroundUpperLeft
                | StructOp::SurroundUpperRight
                | StructOp::SurroundLowerLeft
        )
    }
}

impl fmt::Display for StructOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// A radical label: one codepoint, or a multi-codepoint atom.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Radical(String);

impl Radical {
    pub fn new(label: impl Into<String>) -> Result<Self, IdsError> {
        let label = label.into();
        let bad = label.is_empty()
            || label
                .chars()
                .any(|c| c == '{' || c == '}' || c.is_whitespace() || StructOp::from_char(c).is_some());
        if bad {
            return Err(IdsError::InvalidLabel(label));
        }
        Ok(Radical(label))
    }

    /// Parses either a bare label or its braced token form.
    pub fn from_token(token: &str) -> Result<Self, IdsError> {
        match token.strip_prefix('{').and_then(|t| t.strip_suffix('}')) {
            Some(inner) => Radical::new(inner),
            None => Radical::new(token),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_single_codepoint(&self) -> bool {
        self.0.chars().count() == 1
    }

    /// The label as it appears inside an IDS string.
    pub fn token_text(&self) -> String {
        if self.is_single_codepoint() {
            self.0.clone()
        } else {
            format!("{{{}}}", self.0)
        }
    }
}

impl TryFrom<String> for Radical {
    type Error = IdsError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Radical::from_token(&value)
    }
}

impl From<Radical> for String {
    fn from(r: Radical) -> String {
        r.0
    }
}

impl fmt::Display for Radical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token_text())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Token {
    Op(StructOp),
    Radical(Radical),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Op(op) => write!(f, "{op}"),
            Token::Radical(r) => write!(f, "{r}"),
        }
    }
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, IdsError> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().enumerate().peekable();
    while let Some((i, c)) = chars.next() {
        if let Some(op) = StructOp::from_char(c) {
            tokens.push(Token::Op(op));
        } else if c == '{' {
            let mut atom = String::new();
            loop {
                match chars.next() {
                    Some((_, '}')) => break,
                    Some((_, ch)) => atom.push(ch),
                    None => return Err(IdsError::UnterminatedAtom { position: i }),
                }
            }
            tokens.push(Token::Radical(Radical::new(atom)?));
        } else {
            tokens.push(Token::Radical(Radical::new(c.to_string())?));
        }
    }
    Ok(tokens)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum IdsTree {
    Leaf(Radical),
    Node { op: StructOp, children: Vec<IdsTree> },
}

impl IdsTree {
    pub fn leaf(r: Radical) -> Self {
        IdsTree::Leaf(r)
    }

    /// Builds a node, checking the operator's arity.
    pub fn node(op: StructOp, children: Vec<IdsTree>) -> Result<Self, IdsError> {
        if children.len() != op.arity() {
            return Err(IdsError::ArityError {
                op: op.as_char(),
                position: 0,
                expected: op.arity(),
            });
        }
        Ok(IdsTree::Node { op, children })
    }

    pub fn leaves(&self) -> Vec<&Radical> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Radical>) {
        match self {
            IdsTree::Leaf(r) => out.push(r),
            IdsTree::Node { children, .. } => children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            IdsTree::Leaf(_) => 1,
            IdsTree::Node { children, .. } => children.iter().map(IdsTree::leaf_count).sum(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            IdsTree::Leaf(_) => 0,
            IdsTree::Node { children, .. } => 1 + children.iter().map(IdsTree::depth).max().unwrap_or(0),
        }
    }

    pub fn tokens(&self) -> Vec<Token> {
        let mut out = Vec::new();
        self.emit(&mut out);
        out
    }

    fn emit(&self, out: &mut Vec<Token>) {
        match self {
            IdsTree::Leaf(r) => out.push(Token::Radical(r.clone())),
            IdsTree::Node { op, children } => {
                out.push(Token::Op(*op));
                children.iter().for_each(|c| c.emit(out));
            }
        }
    }

    /// Indented multi-line rendering for humans.
    pub fn pretty(&self) -> String {
        let mut s = String::new();
        self.pretty_into(&mut s, 0);
        s
    }

    fn pretty_into(&self, s: &mut String, depth: usize) {
        let pad = "  ".repeat(depth);
        match self {
            IdsTree::Leaf(r) => s.push_str(&format!("{pad}{r}\n")),
            IdsTree::Node { op, children } => {
                s.push_str(&format!("{pad}{op} {:?}\n", op));
                children.iter().for_each(|c| c.pretty_into(s, depth + 1));
            }
        }
    }
}

impl fmt::Display for IdsTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_ids(self))
    }
}

pub fn parse_ids(text: &str) -> Result<IdsTree, IdsError> {
    parse_tokens(&tokenize(text)?)
}

/// Prefix parse of an already tokenized sequence; must consume every token.
pub fn parse_tokens(tokens: &[Token]) -> Result<IdsTree, IdsError> {
    if tokens.is_empty() {
        return Err(IdsError::EmptyInput);
    }
    let mut pos = 0;
    let tree = parse_at(tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(IdsError::TrailingInput { position: pos });
    }
    Ok(tree)
}

fn parse_at(tokens: &[Token], pos: &mut usize) -> Result<IdsTree, IdsError> {
    let at = *pos;
    match tokens.get(at) {
        None => unreachable!("callers check bounds"),
        Some(Token::Radical(r)) => {
            *pos += 1;
            Ok(IdsTree::Leaf(r.clone()))
        }
        Some(Token::Op(op)) => {
            *pos += 1;
            let mut children = Vec::with_capacity(op.arity());
            for _ in 0..op.arity() {
                if *pos >= tokens.len() {
                    return Err(IdsError::ArityError {
                        op: op.as_char(),
                        position: at,
                        expected: op.arity(),
                    });
                }
                children.push(parse_at(tokens, pos)?);
            }
            Ok(IdsTree::Node { op: *op, children })
        }
    }
}

pub fn serialize_ids(tree: &IdsTree) -> String {
    tree.tokens().iter().map(Token::to_string).collect()
}

/// Order-independent multiset of radical labels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RadicalMultiset(BTreeMap<Radical, usize>);

impl RadicalMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, r: Radical) {
        *self.0.entry(r).or_insert(0) += 1;
    }

    pub fn count(&self, r: &Radical) -> usize {
        self.0.get(r).copied().unwrap_or(0)
    }

    /// Total number of labels, counting multiplicity.
    pub fn len(&self) -> usize {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn distinct(&self) -> impl Iterator<Item = (&Radical, usize)> {
        self.0.iter().map(|(r, n)| (r, *n))
    }

    pub fn to_sorted_vec(&self) -> Vec<Radical> {
        self.0
            .iter()
            .flat_map(|(r, n)| std::iter::repeat_n(r.clone(), *n))
            .collect()
    }
}

impl FromIterator<Radical> for RadicalMultiset {
    fn from_iter<T: IntoIterator<Item = Radical>>(iter: T) -> Self {
        let mut m = RadicalMultiset::new();
        iter.into_iter().for_each(|r| m.insert(r));
        m
    }
}

impl fmt::Display for RadicalMultiset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(r, n)| format!("{r}:{n}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

pub fn radical_multiset(tree: &IdsTree) -> RadicalMultiset {
    tree.leaves().into_iter().cloned().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharEntry {
    pub ch: char,
    pub ids: IdsTree,
    /// Further IDS variants listed for the same character.
    pub aliases: Vec<IdsTree>,
    pub radicals: RadicalMultiset,
}

impl CharEntry {
    pub fn new(ch: char, ids: IdsTree) -> Self {
        let radicals = radical_multiset(&ids);
        CharEntry {
            ch,
            ids,
            aliases: Vec::new(),
            radicals,
        }
    }

    pub fn with_aliases(mut self, aliases: Vec<IdsTree>) -> Self {
        self.aliases = aliases;
        self
    }

    /// Number of radicals counting repeats; always at least one.
    pub fn n(&self) -> usize {
        self.radicals.len()
    }
}

/// A dictionary line that failed to load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct CharDict {
    entries: BTreeMap<char, CharEntry>,
    inverted: HashMap<String, Vec<char>>,
    aliases: HashMap<String, Vec<char>>,
}

impl CharDict {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts an entry; returns false (and leaves the dictionary unchanged)
    /// if the character is already present.
    pub fn insert(&mut self, entry: CharEntry) -> bool {
        if self.entries.contains_key(&entry.ch) {
            return false;
        }
        push_sorted(self.inverted.entry(serialize_ids(&entry.ids)).or_default(), entry.ch);
        for alias in &entry.aliases {
            push_sorted(self.aliases.entry(serialize_ids(alias)).or_default(), entry.ch);
        }
        self.entries.insert(entry.ch, entry);
        true
    }

    pub fn from_entries(entries: impl IntoIterator<Item = CharEntry>) -> Self {
        let mut d = CharDict::new();
        for e in entries {
            d.insert(e);
        }
        d
    }

    pub fn get(&self, ch: char) -> Option<&CharEntry> {
        self.entries.get(&ch)
    }

    pub fn contains(&self, ch: char) -> bool {
        self.entries.contains_key(&ch)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in codepoint order.
    pub fn entries(&self) -> impl Iterator<Item = &CharEntry> {
        self.entries.values()
    }

    /// Characters whose canonical IDS serializes to `ids`.
    pub fn lookup_canonical(&self, ids: &str) -> &[char] {
        self.inverted.get(ids).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Characters whose canonical IDS or one of its variants serializes to `ids`.
    pub fn lookup_any(&self, ids: &str) -> Vec<char> {
        let mut out: Vec<char> = self.lookup_canonical(ids).to_vec();
        if let Some(extra) = self.aliases.get(ids) {
            out.extend(extra);
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Every radical label used by any entry or variant.
    pub fn radical_vocabulary(&self) -> std::collections::BTreeSet<Radical> {
        self.entries
            .values()
            .flat_map(|e| std::iter::once(&e.ids).chain(e.aliases.iter()))
            .flat_map(|t| t.leaves().into_iter().cloned())
            .collect()
    }

    /// Renders the dictionary in its TSV file format.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for e in self.entries.values() {
            s.push_str(&format!("U+{:04X}\t{}\t{}", e.ch as u32, e.ch, serialize_ids(&e.ids)));
            for a in &e.aliases {
                s.push('\t');
                s.push_str(&serialize_ids(a));
            }
            s.push('\n');
        }
        s
    }
}

fn push_sorted(v: &mut Vec<char>, c: char) {
    if let Err(i) = v.binary_search(&c) {
        v.insert(i, c);
    }
}

/// Parses dictionary text. Bad lines are collected as rejections; the load
/// fails only when no line yields an entry.
pub fn parse_dict(text: &str) -> Result<(CharDict, Vec<Rejection>), DictError> {
    let mut dict = CharDict::new();
    let mut rejected = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_dict_line(line) {
            Ok(entry) => {
                let ch = entry.ch;
                if !dict.insert(entry) {
                    rejected.push(Rejection {
                        line: line_no,
                        reason: format!("duplicate character {ch}"),
                    });
                }
            }
            Err(reason) => rejected.push(Rejection { line: line_no, reason }),
        }
    }
    if dict.is_empty() {
        return Err(DictError::EmptyDict {
            rejected: rejected.len(),
        });
    }
    Ok((dict, rejected))
}

pub fn load_dict(path: impl AsRef<Path>) -> Result<(CharDict, Vec<Rejection>), DictError> {
    parse_dict(&fs::read_to_string(path)?)
}

fn parse_dict_line(line: &str) -> Result<CharEntry, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < 3 {
        return Err(format!(
            "expected at least 3 tab-separated fields, found {}",
            fields.len()
        ));
    }
    let code = fields[0]
        .strip_prefix("U+")
        .ok_or_else(|| format!("codepoint field {:?} lacks U+ prefix", fields[0]))?;
    let code = u32::from_str_radix(code, 16).map_err(|e| format!("bad codepoint {:?}: {e}", fields[0]))?;
    let mut chars = fields[1].chars();
    let ch = match (chars.next(), chars.next()) {
        (Some(c), None) => c,
        _ => return Err(format!("character field {:?} is not a single codepoint", fields[1])),
    };
    if ch as u32 != code {
        return Err(format!("codepoint {} does not match character {ch}", fields[0]));
    }
    let mut variants = Vec::new();
    for f in &fields[2..] {
        let f = f.trim();
        if f.is_empty() {
            continue;
        }
        variants.push(parse_ids(f).map_err(|e| format!("IDS {f:?}: {e}"))?);
    }
    if variants.is_empty() {
        return Err("no IDS given".to_string());
    }
    let canonical = variants.remove(0);
    Ok(CharEntry::new(ch, canonical).with_aliases(variants))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(s: &str) -> Radical {
        Radical::new(s).unwrap()
    }

    fn leaf(s: &str) -> IdsTree {
        IdsTree::Leaf(r(s))
    }

    #[test]
    fn twelve_operators_with_fixed_arity() {
        let codes: std::collections::BTreeSet<char> = StructOp::ALL.iter().map(|o| o.as_char()).collect();
        assert_eq!(codes.len(), 12);
        for op in StructOp::ALL {
            assert_eq!(StructOp::from_char(op.as_char()), Some(op));
            let expected = if matches!(op.as_char(), '⿲' | '⿳') { 3 } else { 2 };
            assert_eq!(op.arity(), expected);
        }
        assert_eq!(StructOp::from_char('⿼'), None);
    }

    #[test]
    fn parse_top_bottom() {
        let t = parse_ids("⿱宀女").unwrap();
        assert_eq!(
            t,
            IdsTree::Node {
                op: StructOp::TopBottom,
                children: vec![leaf("宀"), leaf("女")]
            }
        );
    }

    #[test]
    fn parse_single_leaf() {
        assert_eq!(parse_ids("女").unwrap(), leaf("女"));
    }

    #[test]
    fn parse_ternary() {
        // 街 in the public IDS database
        let t = parse_ids("⿲彳圭亍").unwrap();
        assert_eq!(
            t,
            IdsTree::Node {
                op: StructOp::LeftMidRight,
                children: vec![leaf("彳"), leaf("圭"), leaf("亍")]
            }
        );
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_ids("⿱宀"), Err(IdsError::ArityError { op: '⿱', .. })));
        assert!(matches!(parse_ids(""), Err(IdsError::EmptyInput)));
        assert!(matches!(
            parse_ids("⿱宀女子"),
            Err(IdsError::TrailingInput { position: 3 })
        ));
        assert!(matches!(parse_ids("⿰{abc"), Err(IdsError::UnterminatedAtom { .. })));
    }

    #[test]
    fn braced_atoms() {
        let t = parse_ids("⿰{CDP-8B7C}女").unwrap();
        assert_eq!(t.leaves()[0].as_str(), "CDP-8B7C");
        assert_eq!(serialize_ids(&t), "⿰{CDP-8B7C}女");
    }

    #[test]
    fn serialize_examples() {
        let t = IdsTree::node(StructOp::TopBottom, vec![leaf("宀"), leaf("女")]).unwrap();
        assert_eq!(serialize_ids(&t), "⿱宀女");
        assert_eq!(serialize_ids(&leaf("女")), "女");
        let nested = IdsTree::node(
            StructOp::LeftRight,
            vec![
                leaf("a"),
                IdsTree::node(StructOp::TopBottom, vec![leaf("b"), leaf("c")]).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(serialize_ids(&nested), "⿰a⿱bc");
    }

    #[test]
    fn multiset_examples() {
        let m = radical_multiset(&parse_ids("⿱宀女").unwrap());
        assert_eq!((m.count(&r("宀")), m.count(&r("女")), m.len()), (1, 1, 2));
        assert_eq!(radical_multiset(&leaf("女")).len(), 1);
        let m = radical_multiset(&parse_ids("⿱宀⿱女女").unwrap());
        assert_eq!((m.count(&r("宀")), m.count(&r("女"))), (1, 2));
    }

    #[test]
    fn dict_line_and_n() {
        let (d, rej) = parse_dict("# comment\nU+5B89\t安\t⿱宀女\n").unwrap();
        assert!(rej.is_empty());
        let e = d.get('安').unwrap();
        assert_eq!(e.n(), 2);
        assert_eq!(d.lookup_canonical("⿱宀女"), &['安']);
    }

    #[test]
    fn empty_dict_is_error() {
        assert!(matches!(parse_dict(""), Err(DictError::EmptyDict { rejected: 0 })));
        assert!(matches!(
            parse_dict("garbage\n"),
            Err(DictError::EmptyDict { rejected: 1 })
        ));
    }

    #[test]
    fn dict_isolates_bad_lines() {
        let chars = ['安', '字', '好', '女', '子', '宀', '妄', '如', '守', '宇'];
        let idss = [
            "⿱宀女",
            "⿱宀子",
            "⿰女子",
            "女",
            "子",
            "宀",
            "⿱亡女",
            "⿰女口",
            "⿱宀寸",
            "⿱宀于",
        ];
        let mut text = String::new();
        for (i, (c, ids)) in chars.iter().zip(idss).enumerate() {
            if i == 4 {
                text.push_str(&format!("U+{:04X}\t{}\t⿰女\n", *c as u32, c));
            } else {
                text.push_str(&format!("U+{:04X}\t{}\t{}\n", *c as u32, c, ids));
            }
        }
        let (d, rej) = parse_dict(&text).unwrap();
        assert_eq!(d.len(), 9);
        assert_eq!(rej.len(), 1);
        assert_eq!(rej[0].line, 5);
    }

    #[test]
    fn dict_variants_and_duplicates() {
        let text = "U+5B89\t安\t⿱宀女\t⿱宀{女2}\nU+5B89\t安\t⿱宀女\nU+5B57\t字\t⿱宀子\n";
        let (d, rej) = parse_dict(text).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(rej.len(), 1);
        assert_eq!(d.lookup_any("⿱宀{女2}"), vec!['安']);
        assert!(d.lookup_canonical("⿱宀{女2}").is_empty());
        // rendering then reparsing keeps everything
        let (d2, _) = parse_dict(&d.to_tsv()).unwrap();
        assert_eq!(d2.to_tsv(), d.to_tsv());
    }

    #[test]
    fn codepoint_must_match_character() {
        let (_, rej) = parse_dict("U+5B57\t安\t⿱宀女\nU+5B57\t字\t⿱宀子\n").unwrap();
        assert_eq!(rej.len(), 1);
        assert_eq!(rej[0].line, 1);
    }
}
