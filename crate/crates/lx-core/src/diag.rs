//! Source positions and diagnostics.
//!
//! Every diagnostic renders on one line as `file:line:col: severity: message`
//! so editors and tests can match on it directly.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

/// A point in a source file. Lines and columns are 1-based.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SourcePos {
    pub file: Arc<str>,
    pub line: u32,
    pub col: u32,
}

impl SourcePos {
    pub fn new(file: &Arc<str>, line: u32, col: u32) -> Self {
        SourcePos { file: file.clone(), line, col }
    }

    /// A position for nodes synthesized by the compiler itself.
    pub fn synthetic() -> Self {
        SourcePos { file: Arc::from("<generated>"), line: 0, col: 0 }
    }
}

impl fmt::Display for SourcePos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Warning => write!(f, "warning"),
            Severity::Error => write!(f, "error"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub pos: SourcePos,
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    pub fn error(pos: SourcePos, message: String) -> Self {
        Diagnostic { pos, severity: Severity::Error, message }
    }

    pub fn warning(pos: SourcePos, message: String) -> Self {
        Diagnostic { pos, severity: Severity::Warning, message }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.pos, self.severity, self.message)
    }
}

/// An accumulating diagnostic sink.
///
/// The frontend and typechecker push into one of these and keep going where
/// recovery is possible, so a single run reports as many independent problems
/// as it can.
#[derive(Clone, Debug, Default)]
pub struct Diagnostics {
    pub items: Vec<Diagnostic>,
}

impl Diagnostics {
    pub fn new() -> Self {
        Diagnostics { items: Vec::new() }
    }

    pub fn error(&mut self, pos: SourcePos, message: String) {
        self.items.push(Diagnostic::error(pos, message));
    }

    pub fn warning(&mut self, pos: SourcePos, message: String) {
        self.items.push(Diagnostic::warning(pos, message));
    }

    pub fn push(&mut self, d: Diagnostic) {
        self.items.push(d);
    }

    pub fn has_errors(&self) -> bool {
        self.items.iter().any(|d| d.severity == Severity::Error)
    }

    pub fn extend(&mut self, other: Diagnostics) {
        self.items.extend(other.items);
    }

    /// Renders all diagnostics, one per line, sorted by position then message.
    pub fn render(&self) -> String {
        use core::fmt::Write;
        let mut items: Vec<&Diagnostic> = self.items.iter().collect();
        items.sort_by(|a, b| (&a.pos, &a.message).cmp(&(&b.pos, &b.message)));
        let mut out = String::new();
        for d in items {
            let _ = writeln!(out, "{}", d);
        }
        out
    }
}
