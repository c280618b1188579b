//! A small regular-expression engine for string validators.
//!
//! The dialect is deliberately tiny: literal characters, `.`, character
//! classes `[a-z0-9_]` (optionally negated with `^`), grouping `(...)`,
//! alternation `|`, and the repeats `?`, `*`, `+`, `{m}`, `{m,}`, `{m,n}`.
//! A backslash escapes the following character, which is then taken
//! literally. Matching is anchored: a validator accepts a string only when
//! the whole string matches.
//!
//! The parsed [`Ast`] is public because the verifier re-encodes validators
//! as solver regex terms, and the embedded solver walks the same tree to
//! propagate character constraints.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// Widest repeat bound accepted; validators are small by construction and
/// every bound is expanded into NFA states.
const MAX_REPEAT: u32 = 256;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Ast {
    /// Matches the empty string.
    Empty,
    Literal(char),
    /// Any single character.
    Dot,
    /// `[a-z]` or `[^a-z]`; ranges are inclusive and kept as written.
    Class { negated: bool, ranges: Vec<(char, char)> },
    Concat(Vec<Ast>),
    Alt(Vec<Ast>),
    Repeat { inner: Box<Ast>, min: u32, max: Option<u32> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RxError {
    /// Byte offset into the pattern source.
    pub at: usize,
    pub message: String,
}

/// Parses a validator pattern (the text between the `/` delimiters).
pub fn parse(pattern: &str) -> Result<Ast, RxError> {
    let chars: Vec<char> = pattern.chars().collect();
    let mut p = RxParser { chars, idx: 0 };
    let ast = p.alt()?;
    if p.idx < p.chars.len() {
        return Err(p.err(format!("unexpected `{}`", p.chars[p.idx])));
    }
    Ok(ast)
}

struct RxParser {
    chars: Vec<char>,
    idx: usize,
}

impl RxParser {
    fn err(&self, message: String) -> RxError {
        RxError { at: self.idx, message }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.idx).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        if c.is_some() {
            self.idx += 1;
        }
        c
    }

    fn alt(&mut self) -> Result<Ast, RxError> {
        let mut branches = alloc::vec![self.concat()?];
        while self.peek() == Some('|') {
            self.bump();
            branches.push(self.concat()?);
        }
        if branches.len() == 1 {
            Ok(branches.pop().unwrap())
        } else {
            Ok(Ast::Alt(branches))
        }
    }

    fn concat(&mut self) -> Result<Ast, RxError> {
        let mut parts = Vec::new();
        while let Some(c) = self.peek() {
            if c == '|' || c == ')' {
                break;
            }
            parts.push(self.repeat()?);
        }
        match parts.len() {
            0 => Ok(Ast::Empty),
            1 => Ok(parts.pop().unwrap()),
            _ => Ok(Ast::Concat(parts)),
        }
    }

    fn repeat(&mut self) -> Result<Ast, RxError> {
        let mut node = self.atom()?;
        loop {
            let (min, max) = match self.peek() {
                Some('?') => (0, Some(1)),
                Some('*') => (0, None),
                Some('+') => (1, None),
                Some('{') => {
                    self.bump();
                    let r = self.counted_repeat()?;
                    node = Ast::Repeat { inner: Box::new(node), min: r.0, max: r.1 };
                    continue;
                }
                _ => break,
            };
            self.bump();
            node = Ast::Repeat { inner: Box::new(node), min, max };
        }
        Ok(node)
    }

    /// Parses the tail of `{m}`, `{m,}`, or `{m,n}` after the `{`.
    fn counted_repeat(&mut self) -> Result<(u32, Option<u32>), RxError> {
        let min = self.number()?;
        let max = if self.peek() == Some(',') {
            self.bump();
            if self.peek() == Some('}') { None } else { Some(self.number()?) }
        } else {
            Some(min)
        };
        if self.bump() != Some('}') {
            return Err(self.err("expected `}` in repeat bound".into()));
        }
        if let Some(m) = max {
            if m < min {
                return Err(self.err(format!("repeat bound {{{min},{m}}} is empty")));
            }
        }
        Ok((min, max))
    }

    fn number(&mut self) -> Result<u32, RxError> {
        let mut digits = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                digits.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if digits.is_empty() {
            return Err(self.err("expected a number in repeat bound".into()));
        }
        match digits.parse::<u32>() {
            Ok(n) if n <= MAX_REPEAT => Ok(n),
            _ => Err(self.err(format!("repeat bound exceeds {MAX_REPEAT}"))),
        }
    }

    fn atom(&mut self) -> Result<Ast, RxError> {
        match self.bump() {
            Some('(') => {
                let inner = self.alt()?;
                if self.bump() != Some(')') {
                    return Err(self.err("unclosed `(`".into()));
                }
                Ok(inner)
            }
            Some('[') => self.class(),
            Some('.') => Ok(Ast::Dot),
            Some('\\') => match self.bump() {
                Some(c) => Ok(Ast::Literal(c)),
                None => Err(self.err("dangling `\\`".into())),
            },
            Some(c @ ('?' | '*' | '+' | '{' | '}' | ']' | ')')) => {
                Err(self.err(format!("`{c}` must be escaped to match literally")))
            }
            Some(c) => Ok(Ast::Literal(c)),
            None => Err(self.err("unexpected end of pattern".into())),
        }
    }

    fn class(&mut self) -> Result<Ast, RxError> {
        let negated = if self.peek() == Some('^') {
            self.bump();
            true
        } else {
            false
        };
        let mut ranges = Vec::new();
        loop {
            let lo = match self.bump() {
                Some(']') if !ranges.is_empty() => break,
                Some(']') => return Err(self.err("empty character class".into())),
                Some('\\') => match self.bump() {
                    Some(c) => c,
                    None => return Err(self.err("dangling `\\`".into())),
                },
                Some(c) => c,
                None => return Err(self.err("unclosed `[`".into())),
            };
            // A `-` is a range separator only between two endpoints.
            let hi = if self.peek() == Some('-') && self.chars.get(self.idx + 1) != Some(&']') {
                self.bump();
                match self.bump() {
                    Some('\\') => match self.bump() {
                        Some(c) => c,
                        None => return Err(self.err("dangling `\\`".into())),
                    },
                    Some(c) => c,
                    None => return Err(self.err("unclosed `[`".into())),
                }
            } else {
                lo
            };
            if hi < lo {
                return Err(self.err(format!("range `{lo}-{hi}` is reversed")));
            }
            ranges.push((lo, hi));
        }
        Ok(Ast::Class { negated, ranges })
    }
}

// ----- compiled automaton -----

/// One character-consuming label on an NFA edge.
#[derive(Clone, Debug)]
enum Label {
    Char(char),
    Dot,
    Class { negated: bool, ranges: Vec<(char, char)> },
}

impl Label {
    fn matches(&self, c: char) -> bool {
        match self {
            Label::Char(l) => *l == c,
            Label::Dot => true,
            Label::Class { negated, ranges } => {
                let inside = ranges.iter().any(|&(lo, hi)| lo <= c && c <= hi);
                inside != *negated
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
struct State {
    edges: Vec<(Label, usize)>,
    eps: Vec<usize>,
}

/// A compiled validator: a Thompson NFA run in anchored full-match mode.
#[derive(Clone, Debug)]
pub struct Regex {
    ast: Ast,
    states: Vec<State>,
    start: usize,
    accept: usize,
}

impl Regex {
    pub fn new(pattern: &str) -> Result<Regex, RxError> {
        let ast = parse(pattern)?;
        Ok(Regex::from_ast(ast))
    }

    pub fn from_ast(ast: Ast) -> Regex {
        let mut b = Builder { states: Vec::new() };
        let (start, accept) = b.compile(&ast);
        Regex { ast, states: b.states, start, accept }
    }

    pub fn ast(&self) -> &Ast {
        &self.ast
    }

    /// Anchored match over the whole input.
    pub fn matches(&self, input: &str) -> bool {
        let mut current = alloc::vec![false; self.states.len()];
        self.add_closure(&mut current, self.start);
        for c in input.chars() {
            let mut next = alloc::vec![false; self.states.len()];
            for (i, active) in current.iter().enumerate() {
                if !active {
                    continue;
                }
                for (label, to) in &self.states[i].edges {
                    if label.matches(c) {
                        self.add_closure(&mut next, *to);
                    }
                }
            }
            current = next;
        }
        current[self.accept]
    }

    fn add_closure(&self, set: &mut [bool], state: usize) {
        if set[state] {
            return;
        }
        set[state] = true;
        for &e in &self.states[state].eps {
            self.add_closure(set, e);
        }
    }
}

struct Builder {
    states: Vec<State>,
}

impl Builder {
    fn fresh(&mut self) -> usize {
        self.states.push(State::default());
        self.states.len() - 1
    }

    fn eps(&mut self, from: usize, to: usize) {
        self.states[from].eps.push(to);
    }

    /// Returns the (start, accept) fragment for `ast`.
    fn compile(&mut self, ast: &Ast) -> (usize, usize) {
        match ast {
            Ast::Empty => {
                let s = self.fresh();
                let a = self.fresh();
                self.eps(s, a);
                (s, a)
            }
            Ast::Literal(c) => self.leaf(Label::Char(*c)),
            Ast::Dot => self.leaf(Label::Dot),
            Ast::Class { negated, ranges } => {
                self.leaf(Label::Class { negated: *negated, ranges: ranges.clone() })
            }
            Ast::Concat(parts) => {
                let mut start = None;
                let mut tail = None;
                for part in parts {
                    let (s, a) = self.compile(part);
                    match tail {
                        None => start = Some(s),
                        Some(t) => self.eps(t, s),
                    }
                    tail = Some(a);
                }
                (start.unwrap(), tail.unwrap())
            }
            Ast::Alt(branches) => {
                let s = self.fresh();
                let a = self.fresh();
                for branch in branches {
                    let (bs, ba) = self.compile(branch);
                    self.eps(s, bs);
                    self.eps(ba, a);
                }
                (s, a)
            }
            Ast::Repeat { inner, min, max } => {
                let s = self.fresh();
                let mut tail = s;
                for _ in 0..*min {
                    let (is, ia) = self.compile(inner);
                    self.eps(tail, is);
                    tail = ia;
                }
                match max {
                    None => {
                        // One looping copy after the required prefix.
                        let (is, ia) = self.compile(inner);
                        let a = self.fresh();
                        self.eps(tail, is);
                        self.eps(tail, a);
                        self.eps(ia, is);
                        self.eps(ia, a);
                        (s, a)
                    }
                    Some(m) => {
                        let a = self.fresh();
                        self.eps(tail, a);
                        for _ in *min..*m {
                            let (is, ia) = self.compile(inner);
                            self.eps(tail, is);
                            tail = ia;
                            self.eps(tail, a);
                        }
                        (s, a)
                    }
                }
            }
        }
    }

    fn leaf(&mut self, label: Label) -> (usize, usize) {
        let s = self.fresh();
        let a = self.fresh();
        self.states[s].edges.push((label, a));
        (s, a)
    }
}

/// Every character a pattern mentions, with short ranges expanded. Used to
/// pick the character alphabet for solver queries; negated classes and wide
/// ranges contribute only their endpoints.
pub fn alphabet(ast: &Ast) -> BTreeSet<char> {
    let mut out = BTreeSet::new();
    collect_alphabet(ast, &mut out);
    out
}

fn collect_alphabet(ast: &Ast, out: &mut BTreeSet<char>) {
    match ast {
        Ast::Empty | Ast::Dot => {}
        Ast::Literal(c) => {
            out.insert(*c);
        }
        Ast::Class { ranges, .. } => {
            for &(lo, hi) in ranges {
                let span = hi as u32 - lo as u32;
                if span <= 64 {
                    for u in lo as u32..=hi as u32 {
                        if let Some(c) = char::from_u32(u) {
                            out.insert(c);
                        }
                    }
                } else {
                    out.insert(lo);
                    out.insert(hi);
                }
            }
        }
        Ast::Concat(parts) => {
            for p in parts {
                collect_alphabet(p, out);
            }
        }
        Ast::Alt(branches) => {
            for b in branches {
                collect_alphabet(b, out);
            }
        }
        Ast::Repeat { inner, .. } => collect_alphabet(inner, out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn re(p: &str) -> Regex {
        Regex::new(p).unwrap()
    }

    #[test]
    fn zipcode_pattern() {
        let r = re("[0-9]{5}(-[0-9]{4})?");
        assert!(r.matches("40502"));
        assert!(r.matches("40502-1234"));
        assert!(!r.matches("4050"));
        assert!(!r.matches("405021"));
        assert!(!r.matches("40502-"));
        assert!(!r.matches("40502-12345"));
        assert!(!r.matches(""));
    }

    #[test]
    fn anchoring_is_total() {
        let r = re("abc");
        assert!(r.matches("abc"));
        assert!(!r.matches("xabc"));
        assert!(!r.matches("abcx"));
    }

    #[test]
    fn alternation_and_repeats() {
        let r = re("(ab|c)*d+");
        assert!(r.matches("d"));
        assert!(r.matches("ababcd"));
        assert!(r.matches("cddd"));
        assert!(!r.matches("ab"));
        assert!(!r.matches("abd x"));

        let r = re("a{2,3}");
        assert!(!r.matches("a"));
        assert!(r.matches("aa"));
        assert!(r.matches("aaa"));
        assert!(!r.matches("aaaa"));

        let r = re("a{2,}");
        assert!(!r.matches("a"));
        assert!(r.matches("aaaaaa"));

        let r = re("a{3}");
        assert!(r.matches("aaa"));
        assert!(!r.matches("aa"));
    }

    #[test]
    fn classes_and_escapes() {
        let r = re("[a-c_][^0-9]");
        assert!(r.matches("_x"));
        assert!(r.matches("a-"));
        assert!(!r.matches("d x".trim_end()));
        assert!(!r.matches("a5"));

        let r = re("a\\.b\\/c");
        assert!(r.matches("a.b/c"));
        assert!(!r.matches("axb/c"));

        let r = re("[x-]");
        assert!(r.matches("-"));
        assert!(r.matches("x"));
    }

    #[test]
    fn dot_and_empty_branches() {
        let r = re("a.c");
        assert!(r.matches("abc"));
        assert!(r.matches("a.c"));
        assert!(!r.matches("ac"));

        let r = re("(a|)b");
        assert!(r.matches("ab"));
        assert!(r.matches("b"));
    }

    #[test]
    fn parse_errors() {
        assert!(Regex::new("(a").is_err());
        assert!(Regex::new("a)").is_err());
        assert!(Regex::new("*a").is_err());
        assert!(Regex::new("[z-a]").is_err());
        assert!(Regex::new("[]").is_err());
        assert!(Regex::new("a{4,2}").is_err());
        assert!(Regex::new("a{999}").is_err());
        assert!(Regex::new("a\\").is_err());
    }

    #[test]
    fn alphabet_extraction() {
        let a = alphabet(&parse("[0-9]{5}(-[0-9]{4})?").unwrap());
        assert!(a.contains(&'0') && a.contains(&'9') && a.contains(&'-'));
        assert_eq!(a.len(), 11);
    }
}
