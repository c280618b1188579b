//! Lexer for lx surface syntax.
//!
//! The lexer is pull-based: the parser asks for one token at a time. Regex
//! literals share their delimiter with the division operator, so the parser
//! switches the lexer into regex mode explicitly when one is expected (only
//! after `typedecl Name =`).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::diag::{Diagnostic, SourcePos};

/// Numeric literal suffix classes. Unsuffixed forms lex and parse but are
/// rejected by the typechecker, which keeps error messages precise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NumKind {
    Nat,
    Int,
    BigNat,
    BigInt,
    Float,
    Decimal,
    Rational,
    UnsuffixedInt,
    UnsuffixedFloat,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Ident(String),
    /// Numeric literal; text excludes the suffix (for rationals it is `p/q`).
    Num(String, NumKind),
    /// Numeric typed-literal such as `10_Celsius`: raw digits plus type name.
    TypedNum(String, String),
    /// String literal, unescaped.
    Str(String),
    /// String typed-literal such as `"40502"Zipcode`: value plus type name.
    TypedStr(String, String),
    /// Regex literal (only produced in regex mode), source between slashes.
    Regex(String),

    KwConcept,
    KwEntity,
    KwDatatype,
    KwTypedecl,
    KwFunction,
    KwMethod,
    KwField,
    KwConst,
    KwInvariant,
    KwValidate,
    KwRequires,
    KwEnsures,
    KwExamples,
    KwProvides,
    KwUsing,
    KwOf,
    KwAbstract,
    KwOverride,
    KwRecursive,
    KwRef,
    KwLet,
    KwVar,
    KwIf,
    KwThen,
    KwElse,
    KwReturn,
    KwMatch,
    KwAssert,
    KwDefer,
    KwTrue,
    KwFalse,
    KwNone,
    KwFn,
    KwPred,
    KwThis,

    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Colon,
    ColonColon,
    Dot,
    Eq,
    Arrow,     // =>
    Implies,   // ==>
    EqEq,      // == and ===
    BangEq,    // != and !==
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Bang,
    AmpAmp,
    PipePipe,
    Amp,
    Pipe,
    Question,      // ?
    At,            // @
    QuestionQuestion, // ??
    AtAt,          // @@
    Dollar,        // $
    /// `$name` binder reference inside bulk updates.
    DollarIdent(String),

    Eof,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Ident(s) => format!("identifier `{}`", s),
            TokenKind::Num(s, _) => format!("number `{}`", s),
            TokenKind::TypedNum(s, t) => format!("literal `{}_{}`", s, t),
            TokenKind::Str(_) => "string literal".to_string(),
            TokenKind::TypedStr(_, t) => format!("typed string literal `{}`", t),
            TokenKind::Regex(_) => "regex literal".to_string(),
            TokenKind::Eof => "end of input".to_string(),
            other => format!("`{}`", other.glyph()),
        }
    }

    fn glyph(&self) -> &'static str {
        match self {
            TokenKind::KwConcept => "concept",
            TokenKind::KwEntity => "entity",
            TokenKind::KwDatatype => "datatype",
            TokenKind::KwTypedecl => "typedecl",
            TokenKind::KwFunction => "function",
            TokenKind::KwMethod => "method",
            TokenKind::KwField => "field",
            TokenKind::KwConst => "const",
            TokenKind::KwInvariant => "invariant",
            TokenKind::KwValidate => "validate",
            TokenKind::KwRequires => "requires",
            TokenKind::KwEnsures => "ensures",
            TokenKind::KwExamples => "examples",
            TokenKind::KwProvides => "provides",
            TokenKind::KwUsing => "using",
            TokenKind::KwOf => "of",
            TokenKind::KwAbstract => "abstract",
            TokenKind::KwOverride => "override",
            TokenKind::KwRecursive => "recursive",
            TokenKind::KwRef => "ref",
            TokenKind::KwLet => "let",
            TokenKind::KwVar => "var",
            TokenKind::KwIf => "if",
            TokenKind::KwThen => "then",
            TokenKind::KwElse => "else",
            TokenKind::KwReturn => "return",
            TokenKind::KwMatch => "match",
            TokenKind::KwAssert => "assert",
            TokenKind::KwDefer => "defer",
            TokenKind::KwTrue => "true",
            TokenKind::KwFalse => "false",
            TokenKind::KwNone => "none",
            TokenKind::KwFn => "fn",
            TokenKind::KwPred => "pred",
            TokenKind::KwThis => "this",
            TokenKind::LParen => "(",
            TokenKind::RParen => ")",
            TokenKind::LBrace => "{",
            TokenKind::RBrace => "}",
            TokenKind::LBracket => "[",
            TokenKind::RBracket => "]",
            TokenKind::Comma => ",",
            TokenKind::Semi => ";",
            TokenKind::Colon => ":",
            TokenKind::ColonColon => "::",
            TokenKind::Dot => ".",
            TokenKind::Eq => "=",
            TokenKind::Arrow => "=>",
            TokenKind::Implies => "==>",
            TokenKind::EqEq => "==",
            TokenKind::BangEq => "!==",
            TokenKind::Lt => "<",
            TokenKind::Le => "<=",
            TokenKind::Gt => ">",
            TokenKind::Ge => ">=",
            TokenKind::Plus => "+",
            TokenKind::Minus => "-",
            TokenKind::Star => "*",
            TokenKind::Slash => "/",
            TokenKind::Bang => "!",
            TokenKind::AmpAmp => "&&",
            TokenKind::PipePipe => "||",
            TokenKind::Amp => "&",
            TokenKind::Pipe => "|",
            TokenKind::Question => "?",
            TokenKind::At => "@",
            TokenKind::QuestionQuestion => "??",
            TokenKind::AtAt => "@@",
            TokenKind::Dollar => "$",
            TokenKind::DollarIdent(_) => "$name",
            _ => "?",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub kind: TokenKind,
    pub pos: SourcePos,
}

pub struct Lexer {
    chars: Vec<char>,
    idx: usize,
    line: u32,
    col: u32,
    file: Arc<str>,
}

impl Lexer {
    pub fn new(file: &str, text: &str) -> Self {
        Lexer {
            chars: text.chars().collect(),
            idx: 0,
            line: 1,
            col: 1,
            file: Arc::from(file),
        }
    }

    pub fn pos(&self) -> SourcePos {
        SourcePos::new(&self.file, self.line, self.col)
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.idx).copied()
    }

    fn peek_at(&self, off: usize) -> Option<char> {
        self.chars.get(self.idx + off).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.idx += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) -> Result<(), Diagnostic> {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('/') if self.peek_at(1) == Some('/') => {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                Some('/') if self.peek_at(1) == Some('*') => {
                    let start = self.pos();
                    self.bump();
                    self.bump();
                    loop {
                        match self.peek() {
                            Some('*') if self.peek_at(1) == Some('/') => {
                                self.bump();
                                self.bump();
                                break;
                            }
                            Some(_) => {
                                self.bump();
                            }
                            None => {
                                return Err(Diagnostic::error(
                                    start,
                                    "unterminated block comment".to_string(),
                                ));
                            }
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn ident_start(c: char) -> bool {
        c.is_ascii_alphabetic() || c == '_'
    }

    fn ident_cont(c: char) -> bool {
        c.is_ascii_alphanumeric() || c == '_'
    }

    fn lex_ident_text(&mut self) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if Self::ident_cont(c) {
                s.push(c);
                self.bump();
            } else {
                break;
            }
        }
        s
    }

    fn keyword(s: &str) -> Option<TokenKind> {
        Some(match s {
            "concept" => TokenKind::KwConcept,
            "entity" => TokenKind::KwEntity,
            "datatype" => TokenKind::KwDatatype,
            "typedecl" => TokenKind::KwTypedecl,
            "function" => TokenKind::KwFunction,
            "method" => TokenKind::KwMethod,
            "field" => TokenKind::KwField,
            "const" => TokenKind::KwConst,
            "invariant" => TokenKind::KwInvariant,
            "validate" => TokenKind::KwValidate,
            "requires" => TokenKind::KwRequires,
            "ensures" => TokenKind::KwEnsures,
            "examples" => TokenKind::KwExamples,
            "provides" => TokenKind::KwProvides,
            "using" => TokenKind::KwUsing,
            "of" => TokenKind::KwOf,
            "abstract" => TokenKind::KwAbstract,
            "override" => TokenKind::KwOverride,
            "recursive" => TokenKind::KwRecursive,
            "ref" => TokenKind::KwRef,
            "let" => TokenKind::KwLet,
            "var" => TokenKind::KwVar,
            "if" => TokenKind::KwIf,
            "then" => TokenKind::KwThen,
            "else" => TokenKind::KwElse,
            "return" => TokenKind::KwReturn,
            "match" => TokenKind::KwMatch,
            "assert" => TokenKind::KwAssert,
            "defer" => TokenKind::KwDefer,
            "true" => TokenKind::KwTrue,
            "false" => TokenKind::KwFalse,
            "none" => TokenKind::KwNone,
            "fn" => TokenKind::KwFn,
            "pred" => TokenKind::KwPred,
            "this" => TokenKind::KwThis,
            _ => return None,
        })
    }

    fn lex_string_body(&mut self, start: SourcePos) -> Result<String, Diagnostic> {
        // Opening quote already consumed.
        let mut s = String::new();
        loop {
            match self.bump() {
                Some('"') => return Ok(s),
                Some('\\') => match self.bump() {
                    Some('"') => s.push('"'),
                    Some('\\') => s.push('\\'),
                    Some('n') => s.push('\n'),
                    Some('t') => s.push('\t'),
                    Some('r') => s.push('\r'),
                    Some(c) => {
                        return Err(Diagnostic::error(
                            start,
                            format!("unknown string escape `\\{}`", c),
                        ));
                    }
                    None => {
                        return Err(Diagnostic::error(start, "unterminated string".to_string()));
                    }
                },
                Some('\n') | None => {
                    return Err(Diagnostic::error(start, "unterminated string".to_string()));
                }
                Some(c) => s.push(c),
            }
        }
    }

    fn lex_number(&mut self, pos: SourcePos) -> Result<Token, Diagnostic> {
        let mut digits = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                digits.push(c);
                self.bump();
            } else {
                break;
            }
        }

        // Rational literal `p/qR`.
        if self.peek() == Some('/') {
            let mut off = 1;
            let mut den = String::new();
            while let Some(c) = self.peek_at(off) {
                if c.is_ascii_digit() {
                    den.push(c);
                    off += 1;
                } else {
                    break;
                }
            }
            if !den.is_empty() && self.peek_at(off) == Some('R') {
                for _ in 0..=off {
                    self.bump();
                }
                return Ok(Token {
                    kind: TokenKind::Num(format!("{}/{}", digits, den), NumKind::Rational),
                    pos,
                });
            }
        }

        let mut is_frac = false;
        if self.peek() == Some('.') && self.peek_at(1).map_or(false, |c| c.is_ascii_digit()) {
            is_frac = true;
            digits.push('.');
            self.bump();
            while let Some(c) = self.peek() {
                if c.is_ascii_digit() {
                    digits.push(c);
                    self.bump();
                } else {
                    break;
                }
            }
        }

        // Typed literal `10_Celsius`.
        if self.peek() == Some('_') && self.peek_at(1).map_or(false, Self::ident_start) {
            self.bump();
            let name = self.lex_ident_text();
            return Ok(Token { kind: TokenKind::TypedNum(digits, name), pos });
        }

        let kind = match self.peek() {
            Some('n') if !is_frac => {
                self.bump();
                NumKind::Nat
            }
            Some('i') if !is_frac => {
                self.bump();
                NumKind::Int
            }
            Some('N') if !is_frac => {
                self.bump();
                NumKind::BigNat
            }
            Some('I') if !is_frac => {
                self.bump();
                NumKind::BigInt
            }
            Some('f') => {
                self.bump();
                NumKind::Float
            }
            Some('d') => {
                self.bump();
                NumKind::Decimal
            }
            Some(c) if Self::ident_cont(c) => {
                return Err(Diagnostic::error(
                    pos,
                    format!("unknown numeric literal suffix starting with `{}`", c),
                ));
            }
            _ => {
                if is_frac {
                    NumKind::UnsuffixedFloat
                } else {
                    NumKind::UnsuffixedInt
                }
            }
        };
        Ok(Token { kind: TokenKind::Num(digits, kind), pos })
    }

    /// Lexes the next token in normal mode.
    pub fn next_token(&mut self) -> Result<Token, Diagnostic> {
        self.skip_trivia()?;
        let pos = self.pos();
        let c = match self.peek() {
            None => return Ok(Token { kind: TokenKind::Eof, pos }),
            Some(c) => c,
        };

        if c.is_ascii_digit() {
            return self.lex_number(pos);
        }

        if c == '"' {
            self.bump();
            let body = self.lex_string_body(pos.clone())?;
            if self.peek().map_or(false, Self::ident_start) {
                let name = self.lex_ident_text();
                return Ok(Token { kind: TokenKind::TypedStr(body, name), pos });
            }
            return Ok(Token { kind: TokenKind::Str(body), pos });
        }

        if Self::ident_start(c) {
            let s = self.lex_ident_text();
            let kind = Self::keyword(&s).unwrap_or(TokenKind::Ident(s));
            return Ok(Token { kind, pos });
        }

        if c == '$' {
            self.bump();
            if self.peek().map_or(false, Self::ident_start) {
                let name = self.lex_ident_text();
                return Ok(Token { kind: TokenKind::DollarIdent(name), pos });
            }
            return Ok(Token { kind: TokenKind::Dollar, pos });
        }

        macro_rules! tok {
            ($kind:expr, $n:expr) => {{
                for _ in 0..$n {
                    self.bump();
                }
                Ok(Token { kind: $kind, pos })
            }};
        }

        let c1 = self.peek_at(1);
        let c2 = self.peek_at(2);
        match (c, c1, c2) {
            ('=', Some('='), Some('>')) => tok!(TokenKind::Implies, 3),
            ('=', Some('='), Some('=')) => tok!(TokenKind::EqEq, 3),
            ('!', Some('='), Some('=')) => tok!(TokenKind::BangEq, 3),
            ('=', Some('='), _) => tok!(TokenKind::EqEq, 2),
            ('!', Some('='), _) => tok!(TokenKind::BangEq, 2),
            ('=', Some('>'), _) => tok!(TokenKind::Arrow, 2),
            ('<', Some('='), _) => tok!(TokenKind::Le, 2),
            ('>', Some('='), _) => tok!(TokenKind::Ge, 2),
            ('&', Some('&'), _) => tok!(TokenKind::AmpAmp, 2),
            ('|', Some('|'), _) => tok!(TokenKind::PipePipe, 2),
            ('?', Some('?'), _) => tok!(TokenKind::QuestionQuestion, 2),
            ('@', Some('@'), _) => tok!(TokenKind::AtAt, 2),
            (':', Some(':'), _) => tok!(TokenKind::ColonColon, 2),
            ('(', _, _) => tok!(TokenKind::LParen, 1),
            (')', _, _) => tok!(TokenKind::RParen, 1),
            ('{', _, _) => tok!(TokenKind::LBrace, 1),
            ('}', _, _) => tok!(TokenKind::RBrace, 1),
            ('[', _, _) => tok!(TokenKind::LBracket, 1),
            (']', _, _) => tok!(TokenKind::RBracket, 1),
            (',', _, _) => tok!(TokenKind::Comma, 1),
            (';', _, _) => tok!(TokenKind::Semi, 1),
            (':', _, _) => tok!(TokenKind::Colon, 1),
            ('.', _, _) => tok!(TokenKind::Dot, 1),
            ('=', _, _) => tok!(TokenKind::Eq, 1),
            ('<', _, _) => tok!(TokenKind::Lt, 1),
            ('>', _, _) => tok!(TokenKind::Gt, 1),
            ('+', _, _) => tok!(TokenKind::Plus, 1),
            ('-', _, _) => tok!(TokenKind::Minus, 1),
            ('*', _, _) => tok!(TokenKind::Star, 1),
            ('/', _, _) => tok!(TokenKind::Slash, 1),
            ('!', _, _) => tok!(TokenKind::Bang, 1),
            ('&', _, _) => tok!(TokenKind::Amp, 1),
            ('|', _, _) => tok!(TokenKind::Pipe, 1),
            ('?', _, _) => tok!(TokenKind::Question, 1),
            ('@', _, _) => tok!(TokenKind::At, 1),
            _ => {
                self.bump();
                Err(Diagnostic::error(pos, format!("unexpected character `{}`", c)))
            }
        }
    }

    /// Looks past whitespace and comments without consuming anything and
    /// reports whether the next real character opens a regex literal.
    pub fn peek_nontrivia_slash(&self) -> bool {
        let mut i = self.idx;
        loop {
            match self.chars.get(i) {
                Some(c) if c.is_whitespace() => i += 1,
                Some('/') if self.chars.get(i + 1) == Some(&'/') => {
                    while let Some(c) = self.chars.get(i) {
                        if *c == '\n' {
                            break;
                        }
                        i += 1;
                    }
                }
                Some('/') if self.chars.get(i + 1) == Some(&'*') => {
                    i += 2;
                    loop {
                        match self.chars.get(i) {
                            Some('*') if self.chars.get(i + 1) == Some(&'/') => {
                                i += 2;
                                break;
                            }
                            Some(_) => i += 1,
                            None => return false,
                        }
                    }
                }
                Some('/') => return true,
                _ => return false,
            }
        }
    }

    /// Lexes a regex literal `/.../`. The parser calls this instead of
    /// `next_token` where a regex is grammatically required.
    pub fn next_regex(&mut self) -> Result<Token, Diagnostic> {
        self.skip_trivia()?;
        let pos = self.pos();
        if self.peek() != Some('/') {
            return Err(Diagnostic::error(pos, "expected a regex literal".to_string()));
        }
        self.bump();
        let mut body = String::new();
        loop {
            match self.bump() {
                Some('/') => break,
                Some('\\') => {
                    body.push('\\');
                    match self.bump() {
                        Some(c) => body.push(c),
                        None => {
                            return Err(Diagnostic::error(pos, "unterminated regex".to_string()));
                        }
                    }
                }
                Some('\n') | None => {
                    return Err(Diagnostic::error(pos, "unterminated regex".to_string()));
                }
                Some(c) => body.push(c),
            }
        }
        if body.is_empty() {
            return Err(Diagnostic::error(pos, "empty regex literal".to_string()));
        }
        Ok(Token { kind: TokenKind::Regex(body), pos })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str) -> Vec<TokenKind> {
        let mut lx = Lexer::new("t.lx", text);
        let mut out = Vec::new();
        loop {
            let t = lx.next_token().expect("lex");
            let done = t.kind == TokenKind::Eof;
            out.push(t.kind);
            if done {
                return out;
            }
        }
    }

    #[test]
    fn numeric_suffixes() {
        assert_eq!(
            kinds("5n 5i 5N 5I 1.5f 1.5d 1/2R 7 2.25"),
            alloc::vec![
                TokenKind::Num("5".into(), NumKind::Nat),
                TokenKind::Num("5".into(), NumKind::Int),
                TokenKind::Num("5".into(), NumKind::BigNat),
                TokenKind::Num("5".into(), NumKind::BigInt),
                TokenKind::Num("1.5".into(), NumKind::Float),
                TokenKind::Num("1.5".into(), NumKind::Decimal),
                TokenKind::Num("1/2".into(), NumKind::Rational),
                TokenKind::Num("7".into(), NumKind::UnsuffixedInt),
                TokenKind::Num("2.25".into(), NumKind::UnsuffixedFloat),
                TokenKind::Eof,
            ]
        );
    }

    #[test]
    fn typed_literals() {
        assert_eq!(
            kinds("10_Celsius \"40502\"Zipcode"),
            alloc::vec![
                TokenKind::TypedNum("10".into(), "Celsius".into()),
                TokenKind::TypedStr("40502".into(), "Zipcode".into()),
                TokenKind::Eof,
            ]
        );
    }

    #[test]
    fn flow_operators() {
        assert_eq!(
            kinds("x?some y@@ z ?? !none ==> a != b !== c"),
            alloc::vec![
                TokenKind::Ident("x".into()),
                TokenKind::Question,
                TokenKind::Ident("some".into()),
                TokenKind::Ident("y".into()),
                TokenKind::AtAt,
                TokenKind::Ident("z".into()),
                TokenKind::QuestionQuestion,
                TokenKind::Bang,
                TokenKind::KwNone,
                TokenKind::Implies,
                TokenKind::Ident("a".into()),
                TokenKind::BangEq,
                TokenKind::Ident("b".into()),
                TokenKind::BangEq,
                TokenKind::Ident("c".into()),
                TokenKind::Eof,
            ]
        );
    }

    #[test]
    fn dollar_binders() {
        assert_eq!(
            kinds("$available $ $return"),
            alloc::vec![
                TokenKind::DollarIdent("available".into()),
                TokenKind::Dollar,
                TokenKind::DollarIdent("return".into()),
                TokenKind::Eof,
            ]
        );
    }

    #[test]
    fn comments_are_trivia() {
        assert_eq!(
            kinds("a // line\n /* block \n more */ b"),
            alloc::vec![TokenKind::Ident("a".into()), TokenKind::Ident("b".into()), TokenKind::Eof]
        );
    }

    #[test]
    fn regex_mode() {
        let mut lx = Lexer::new("t.lx", "= /[0-9]{5}(-[0-9]{4})?/;");
        assert_eq!(lx.next_token().unwrap().kind, TokenKind::Eq);
        let re = lx.next_regex().unwrap();
        assert_eq!(re.kind, TokenKind::Regex("[0-9]{5}(-[0-9]{4})?".into()));
        assert_eq!(lx.next_token().unwrap().kind, TokenKind::Semi);
    }

    #[test]
    fn division_is_not_a_regex() {
        assert_eq!(
            kinds("a / b"),
            alloc::vec![
                TokenKind::Ident("a".into()),
                TokenKind::Slash,
                TokenKind::Ident("b".into()),
                TokenKind::Eof,
            ]
        );
    }
}
