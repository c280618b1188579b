//! Recursive descent parser for lx surface syntax.
//!
//! The parser works over an eagerly produced token vector so it can snapshot
//! and restore its index for the two genuinely ambiguous spots in the
//! grammar: `Name<...>` type-argument lists versus comparison chains, and
//! check-level names versus expression heads. Errors recover at declaration
//! boundaries so one run reports as many problems as possible.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::diag::{Diagnostic, Diagnostics, SourcePos};
use crate::frontend::ast::*;
use crate::frontend::token::{Lexer, NumKind, Token, TokenKind};

/// Tokenizes a whole file. Regex literals are recognized contextually: a `/`
/// immediately after `typedecl Name =` starts a regex, anywhere else it is
/// division.
pub fn tokenize(file: &str, text: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut lx = Lexer::new(file, text);
    let mut toks: Vec<Token> = Vec::new();
    loop {
        let n = toks.len();
        let regex_position = n >= 3
            && toks[n - 1].kind == TokenKind::Eq
            && matches!(toks[n - 2].kind, TokenKind::Ident(_))
            && toks[n - 3].kind == TokenKind::KwTypedecl;
        let t = if regex_position && lx.peek_nontrivia_slash() {
            lx.next_regex()?
        } else {
            lx.next_token()?
        };
        let done = t.kind == TokenKind::Eof;
        toks.push(t);
        if done {
            return Ok(toks);
        }
    }
}

pub struct ParseResult {
    pub program: Option<SurfaceProgram>,
    pub diags: Diagnostics,
}

/// Parses a set of files into one program. Declarations keep file order.
pub fn parse_program(files: &[(String, String)]) -> ParseResult {
    let mut diags = Diagnostics::new();
    let mut decls = Vec::new();
    let mut next_id: NodeId = 0;
    for (name, text) in files {
        match tokenize(name, text) {
            Ok(toks) => {
                let mut p = Parser { toks, idx: 0, next_id, diags: Diagnostics::new() };
                p.parse_decls(&mut decls);
                next_id = p.next_id;
                diags.extend(p.diags);
            }
            Err(d) => diags.items.push(d),
        }
    }
    if diags.has_errors() {
        ParseResult { program: None, diags }
    } else {
        ParseResult { program: Some(SurfaceProgram { decls }), diags }
    }
}

struct Parser {
    toks: Vec<Token>,
    idx: usize,
    next_id: NodeId,
    diags: Diagnostics,
}

type PResult<T> = Result<T, ()>;

impl Parser {
    fn fresh_id(&mut self) -> NodeId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn peek(&self) -> &TokenKind {
        &self.toks[self.idx.min(self.toks.len() - 1)].kind
    }

    fn peek_at(&self, off: usize) -> &TokenKind {
        &self.toks[(self.idx + off).min(self.toks.len() - 1)].kind
    }

    fn pos(&self) -> SourcePos {
        self.toks[self.idx.min(self.toks.len() - 1)].pos.clone()
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.idx.min(self.toks.len() - 1)].clone();
        if self.idx < self.toks.len() - 1 {
            self.idx += 1;
        }
        t
    }

    fn at(&self, kind: &TokenKind) -> bool {
        self.peek() == kind
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.at(kind) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn err_here(&mut self, message: String) {
        let pos = self.pos();
        self.diags.error(pos, message);
    }

    fn expect(&mut self, kind: &TokenKind, what: &str) -> PResult<Token> {
        if self.at(kind) {
            Ok(self.bump())
        } else {
            let found = self.peek().describe();
            self.err_here(format!("expected {}, found {}", what, found));
            Err(())
        }
    }

    fn expect_ident(&mut self, what: &str) -> PResult<(String, SourcePos)> {
        let pos = self.pos();
        match self.peek().clone() {
            TokenKind::Ident(s) => {
                self.bump();
                if s.starts_with("__") {
                    self.diags.error(
                        pos.clone(),
                        format!("identifiers starting with `__` are reserved: `{}`", s),
                    );
                }
                Ok((s, pos))
            }
            other => {
                self.err_here(format!("expected {}, found {}", what, other.describe()));
                Err(())
            }
        }
    }

    fn is_decl_start(&self) -> bool {
        matches!(
            self.peek(),
            TokenKind::KwConcept
                | TokenKind::KwEntity
                | TokenKind::KwDatatype
                | TokenKind::KwTypedecl
                | TokenKind::KwFunction
                | TokenKind::KwConst
                | TokenKind::KwRecursive
        )
    }

    /// Skips forward to the next plausible declaration start at brace depth 0.
    fn recover_to_decl(&mut self) {
        let mut depth: i32 = 0;
        loop {
            match self.peek() {
                TokenKind::Eof => return,
                TokenKind::LBrace => {
                    depth += 1;
                    self.bump();
                }
                TokenKind::RBrace => {
                    depth -= 1;
                    self.bump();
                    if depth <= 0 {
                        depth = 0;
                    }
                }
                _ if depth == 0 && self.is_decl_start() => return,
                _ => {
                    self.bump();
                }
            }
        }
    }

    fn parse_decls(&mut self, out: &mut Vec<Decl>) {
        while !self.at(&TokenKind::Eof) {
            if !self.is_decl_start() {
                let found = self.peek().describe();
                self.err_here(format!("expected a declaration, found {}", found));
                self.recover_to_decl();
                if !self.is_decl_start() {
                    continue;
                }
            }
            match self.parse_decl() {
                Ok(d) => out.push(d),
                Err(()) => self.recover_to_decl(),
            }
        }
    }

    fn parse_decl(&mut self) -> PResult<Decl> {
        let pos = self.pos();
        let id = self.fresh_id();
        let kind = match self.peek().clone() {
            TokenKind::KwTypedecl => self.parse_typedecl()?,
            TokenKind::KwConcept => self.parse_concept_or_entity(true)?,
            TokenKind::KwEntity => self.parse_concept_or_entity(false)?,
            TokenKind::KwDatatype => self.parse_datatype()?,
            TokenKind::KwFunction | TokenKind::KwRecursive => {
                DeclKind::Function(self.parse_function(false)?)
            }
            TokenKind::KwConst => {
                self.bump();
                let (name, _) = self.expect_ident("a constant name")?;
                let ty = if self.eat(&TokenKind::Colon) { Some(self.parse_type()?) } else { None };
                self.expect(&TokenKind::Eq, "`=`")?;
                let init = self.parse_expr()?;
                self.expect(&TokenKind::Semi, "`;`")?;
                DeclKind::Const { name, ty, init }
            }
            other => {
                self.err_here(format!("expected a declaration, found {}", other.describe()));
                return Err(());
            }
        };
        Ok(Decl { id, pos, kind })
    }

    fn parse_typedecl(&mut self) -> PResult<DeclKind> {
        self.bump(); // typedecl
        let (name, _) = self.expect_ident("a type name")?;
        self.expect(&TokenKind::Eq, "`=`")?;
        if let TokenKind::Regex(re) = self.peek().clone() {
            self.bump();
            self.expect(&TokenKind::Semi, "`;`")?;
            return Ok(DeclKind::Validator { name, regex: re });
        }
        let base = self.parse_type()?;
        self.expect(&TokenKind::Semi, "`;`")?;
        Ok(DeclKind::Typedecl { name, base })
    }

    fn parse_provides(&mut self) -> PResult<Vec<String>> {
        let mut provides = Vec::new();
        if self.eat(&TokenKind::KwProvides) {
            loop {
                let (n, _) = self.expect_ident("a concept name")?;
                provides.push(n);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        Ok(provides)
    }

    fn parse_concept_or_entity(&mut self, is_concept: bool) -> PResult<DeclKind> {
        self.bump();
        let (name, _) = self.expect_ident("a type name")?;
        let provides = self.parse_provides()?;
        self.expect(&TokenKind::LBrace, "`{`")?;
        let members = self.parse_member_block()?;
        if is_concept {
            Ok(DeclKind::Concept { name, provides, members })
        } else {
            Ok(DeclKind::Entity { name, provides, members })
        }
    }

    fn parse_datatype(&mut self) -> PResult<DeclKind> {
        self.bump(); // datatype
        let (name, _) = self.expect_ident("a type name")?;
        let mut using = Vec::new();
        if self.eat(&TokenKind::KwUsing) {
            self.expect(&TokenKind::LBrace, "`{`")?;
            using = self.parse_member_block()?;
        }
        self.expect(&TokenKind::KwOf, "`of`")?;
        let mut cases = Vec::new();
        loop {
            let pos = self.pos();
            let (cname, _) = self.expect_ident("a case name")?;
            self.expect(&TokenKind::LBrace, "`{`")?;
            let members = self.parse_member_block()?;
            cases.push(DatatypeCase { pos, name: cname, members });
            if !self.eat(&TokenKind::Pipe) {
                break;
            }
        }
        let mut attached = Vec::new();
        if self.eat(&TokenKind::Amp) {
            self.expect(&TokenKind::LBrace, "`{`")?;
            attached = self.parse_member_block()?;
        }
        self.eat(&TokenKind::Semi);
        Ok(DeclKind::Datatype { name, using, cases, attached })
    }

    /// Parses members until the closing `}` (which is consumed). Accepts
    /// `name: Type` shorthand fields alongside full member declarations, as
    /// datatype `using` blocks and case bodies use the bare form.
    fn parse_member_block(&mut self) -> PResult<Vec<Member>> {
        let mut members = Vec::new();
        loop {
            if self.eat(&TokenKind::RBrace) {
                return Ok(members);
            }
            if self.at(&TokenKind::Eof) {
                self.err_here("unterminated member block".to_string());
                return Err(());
            }
            let pos = self.pos();
            let id = self.fresh_id();
            let kind = match self.peek().clone() {
                TokenKind::KwField => {
                    self.bump();
                    let (name, _) = self.expect_ident("a field name")?;
                    self.expect(&TokenKind::Colon, "`:`")?;
                    let ty = self.parse_type()?;
                    self.expect(&TokenKind::Semi, "`;`")?;
                    MemberKind::Field { name, ty }
                }
                TokenKind::Ident(name) if *self.peek_at(1) == TokenKind::Colon => {
                    self.bump();
                    self.bump();
                    let ty = self.parse_type()?;
                    // Bare fields separate with `;`, `,`, or nothing.
                    let _ = self.eat(&TokenKind::Semi) || self.eat(&TokenKind::Comma);
                    if name.starts_with("__") {
                        self.diags.error(
                            pos.clone(),
                            format!("identifiers starting with `__` are reserved: `{}`", name),
                        );
                    }
                    MemberKind::Field { name, ty }
                }
                TokenKind::KwConst => {
                    self.bump();
                    let (name, _) = self.expect_ident("a constant name")?;
                    let ty =
                        if self.eat(&TokenKind::Colon) { Some(self.parse_type()?) } else { None };
                    self.expect(&TokenKind::Eq, "`=`")?;
                    let init = self.parse_expr()?;
                    self.expect(&TokenKind::Semi, "`;`")?;
                    MemberKind::Const { name, ty, init }
                }
                TokenKind::KwInvariant => {
                    self.bump();
                    let level = self.parse_opt_level();
                    let cond = self.parse_expr()?;
                    self.expect(&TokenKind::Semi, "`;`")?;
                    MemberKind::Invariant { level, cond }
                }
                TokenKind::KwValidate => {
                    self.bump();
                    let cond = self.parse_expr()?;
                    self.expect(&TokenKind::Semi, "`;`")?;
                    MemberKind::Validate { cond }
                }
                TokenKind::KwFunction => MemberKind::Function(self.parse_function(false)?),
                TokenKind::KwRecursive if *self.peek_at(1) == TokenKind::KwFunction => {
                    MemberKind::Function(self.parse_function(false)?)
                }
                TokenKind::KwAbstract
                | TokenKind::KwOverride
                | TokenKind::KwMethod
                | TokenKind::KwRecursive => MemberKind::Method(self.parse_method()?),
                other => {
                    self.err_here(format!("expected a member, found {}", other.describe()));
                    return Err(());
                }
            };
            members.push(Member { id, pos, kind });
        }
    }

    fn parse_method(&mut self) -> PResult<MethodDecl> {
        let mut is_abstract = false;
        let mut is_override = false;
        loop {
            if self.eat(&TokenKind::KwAbstract) {
                is_abstract = true;
            } else if self.eat(&TokenKind::KwOverride) {
                is_override = true;
            } else {
                break;
            }
        }
        let recursive = self.eat(&TokenKind::KwRecursive);
        self.expect(&TokenKind::KwMethod, "`method`")?;
        let is_ref = self.eat(&TokenKind::KwRef);
        let func = self.parse_fn_tail(recursive, is_abstract)?;
        Ok(MethodDecl { func, is_abstract, is_override, is_ref })
    }

    fn parse_function(&mut self, _member: bool) -> PResult<FunctionDecl> {
        let recursive = self.eat(&TokenKind::KwRecursive);
        self.expect(&TokenKind::KwFunction, "`function`")?;
        self.parse_fn_tail(recursive, false)
    }

    fn parse_fn_tail(&mut self, recursive: bool, is_abstract: bool) -> PResult<FunctionDecl> {
        let id = self.fresh_id();
        let (name, pos) = self.expect_ident("a function name")?;
        self.expect(&TokenKind::LParen, "`(`")?;
        let mut params = Vec::new();
        if !self.eat(&TokenKind::RParen) {
            loop {
                let (pname, ppos) = self.expect_ident("a parameter name")?;
                self.expect(&TokenKind::Colon, "`:`")?;
                let ty = self.parse_type()?;
                params.push(Param { pos: ppos, name: pname, ty });
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
            self.expect(&TokenKind::RParen, "`)`")?;
        }
        let result =
            if self.eat(&TokenKind::Colon) { Some(self.parse_type()?) } else { None };

        let mut requires = Vec::new();
        let mut ensures = Vec::new();
        let mut examples = Vec::new();
        loop {
            match self.peek() {
                TokenKind::KwRequires => {
                    self.bump();
                    let level = self.parse_opt_level();
                    let e = self.parse_expr()?;
                    self.expect(&TokenKind::Semi, "`;`")?;
                    requires.push((level, e));
                }
                TokenKind::KwEnsures => {
                    self.bump();
                    let level = self.parse_opt_level();
                    let e = self.parse_expr()?;
                    self.expect(&TokenKind::Semi, "`;`")?;
                    ensures.push((level, e));
                }
                TokenKind::KwExamples => {
                    self.bump();
                    self.expect(&TokenKind::LBracket, "`[`")?;
                    loop {
                        let epos = self.pos();
                        self.expect(&TokenKind::LBracket, "`[`")?;
                        let mut args = Vec::new();
                        if !self.eat(&TokenKind::RBracket) {
                            loop {
                                args.push(self.parse_expr()?);
                                if !self.eat(&TokenKind::Comma) {
                                    break;
                                }
                            }
                            self.expect(&TokenKind::RBracket, "`]`")?;
                        }
                        self.expect(&TokenKind::Arrow, "`=>`")?;
                        let expected = self.parse_expr()?;
                        examples.push(Example { pos: epos, args, expected });
                        if !self.eat(&TokenKind::Comma) {
                            break;
                        }
                        if self.at(&TokenKind::RBracket) {
                            break;
                        }
                    }
                    self.expect(&TokenKind::RBracket, "`]`")?;
                    self.expect(&TokenKind::Semi, "`;`")?;
                }
                _ => break,
            }
        }

        let body = if is_abstract {
            self.expect(&TokenKind::Semi, "`;`")?;
            FnBody::Absent
        } else if self.at(&TokenKind::LBrace)
            && *self.peek_at(1) == TokenKind::KwDefer
            && *self.peek_at(2) == TokenKind::Semi
            && *self.peek_at(3) == TokenKind::RBrace
        {
            self.bump();
            self.bump();
            self.bump();
            self.bump();
            FnBody::Defer
        } else {
            FnBody::Block(self.parse_block()?)
        };

        Ok(FunctionDecl { id, pos, recursive, name, params, result, requires, ensures, examples, body })
    }

    /// Accepts a check level name when the following token can start an
    /// expression; otherwise the name is the expression itself.
    fn parse_opt_level(&mut self) -> Option<CheckLevelName> {
        let level = match self.peek() {
            TokenKind::Ident(s) => match s.as_str() {
                "spec" => CheckLevelName::Spec,
                "debug" => CheckLevelName::Debug,
                "test" => CheckLevelName::Test,
                "release" => CheckLevelName::Release,
                "safety" => CheckLevelName::Safety,
                _ => return None,
            },
            _ => return None,
        };
        if self.token_starts_expr(self.peek_at(1)) {
            self.bump();
            Some(level)
        } else {
            None
        }
    }

    fn token_starts_expr(&self, t: &TokenKind) -> bool {
        matches!(
            t,
            TokenKind::Ident(_)
                | TokenKind::Num(..)
                | TokenKind::TypedNum(..)
                | TokenKind::Str(_)
                | TokenKind::TypedStr(..)
                | TokenKind::KwTrue
                | TokenKind::KwFalse
                | TokenKind::KwNone
                | TokenKind::KwThis
                | TokenKind::KwFn
                | TokenKind::KwPred
                | TokenKind::KwIf
                | TokenKind::LParen
                | TokenKind::LBracket
                | TokenKind::LBrace
                | TokenKind::Bang
                | TokenKind::Minus
                | TokenKind::Dollar
                | TokenKind::DollarIdent(_)
        )
    }

    fn parse_block(&mut self) -> PResult<Block> {
        let pos = self.pos();
        self.expect(&TokenKind::LBrace, "`{`")?;
        let mut stmts = Vec::new();
        while !self.eat(&TokenKind::RBrace) {
            if self.at(&TokenKind::Eof) {
                self.err_here("unterminated block".to_string());
                return Err(());
            }
            stmts.push(self.parse_stmt()?);
        }
        Ok(Block { pos, stmts })
    }

    fn parse_stmt(&mut self) -> PResult<Stmt> {
        let pos = self.pos();
        let id = self.fresh_id();
        let kind = match self.peek().clone() {
            TokenKind::KwLet => {
                self.bump();
                let (name, _) = self.expect_ident("a binding name")?;
                let ty = if self.eat(&TokenKind::Colon) { Some(self.parse_type()?) } else { None };
                self.expect(&TokenKind::Eq, "`=`")?;
                if self.at(&TokenKind::KwRef) {
                    let (receiver, method, args, recursive) = self.parse_ref_call()?;
                    self.expect(&TokenKind::Semi, "`;`")?;
                    StmtKind::RefCall {
                        bind: Some((name, ty, false)),
                        receiver,
                        method,
                        args,
                        recursive,
                    }
                } else {
                    let init = self.parse_expr()?;
                    self.expect(&TokenKind::Semi, "`;`")?;
                    StmtKind::Let { name, ty, init }
                }
            }
            TokenKind::KwVar => {
                self.bump();
                let (name, _) = self.expect_ident("a binding name")?;
                let ty = if self.eat(&TokenKind::Colon) { Some(self.parse_type()?) } else { None };
                if self.eat(&TokenKind::Eq) {
                    if self.at(&TokenKind::KwRef) {
                        let (receiver, method, args, recursive) = self.parse_ref_call()?;
                        self.expect(&TokenKind::Semi, "`;`")?;
                        StmtKind::RefCall {
                            bind: Some((name, ty, true)),
                            receiver,
                            method,
                            args,
                            recursive,
                        }
                    } else {
                        let init = self.parse_expr()?;
                        self.expect(&TokenKind::Semi, "`;`")?;
                        StmtKind::Var { name, ty, init: Some(init) }
                    }
                } else {
                    self.expect(&TokenKind::Semi, "`;`")?;
                    StmtKind::Var { name, ty, init: None }
                }
            }
            TokenKind::KwIf => return self.parse_if_stmt(pos, id),
            TokenKind::KwMatch => {
                self.bump();
                self.expect(&TokenKind::LParen, "`(`")?;
                let scrutinee = self.parse_expr()?;
                self.expect(&TokenKind::RParen, "`)`")?;
                self.expect(&TokenKind::LBrace, "`{`")?;
                let mut arms = Vec::new();
                self.eat(&TokenKind::Pipe);
                loop {
                    arms.push(self.parse_match_arm()?);
                    if self.eat(&TokenKind::Pipe) {
                        continue;
                    }
                    self.expect(&TokenKind::RBrace, "`}`")?;
                    break;
                }
                StmtKind::Match { scrutinee, arms }
            }
            TokenKind::KwReturn => {
                self.bump();
                let value = self.parse_expr()?;
                self.expect(&TokenKind::Semi, "`;`")?;
                StmtKind::Return { value }
            }
            TokenKind::KwAssert => {
                self.bump();
                let level = self.parse_opt_level();
                let cond = self.parse_expr()?;
                self.expect(&TokenKind::Semi, "`;`")?;
                StmtKind::Assert { level, cond }
            }
            TokenKind::KwRef => {
                let (receiver, method, args, recursive) = self.parse_ref_call()?;
                self.expect(&TokenKind::Semi, "`;`")?;
                StmtKind::RefCall { bind: None, receiver, method, args, recursive }
            }
            TokenKind::KwThis
                if *self.peek_at(1) == TokenKind::Dot && *self.peek_at(2) == TokenKind::LBrace =>
            {
                self.bump();
                self.bump();
                let updates = self.parse_update_list()?;
                self.expect(&TokenKind::Semi, "`;`")?;
                StmtKind::ThisUpdate { updates }
            }
            TokenKind::Ident(name) if *self.peek_at(1) == TokenKind::Eq => {
                self.bump();
                self.bump();
                let value = self.parse_expr()?;
                self.expect(&TokenKind::Semi, "`;`")?;
                StmtKind::Assign { name, value }
            }
            TokenKind::Ident(name)
                if matches!(self.peek_at(1), TokenKind::At | TokenKind::AtAt)
                    && self.narrow_lookahead() =>
            {
                self.bump();
                let early = self.bump().kind == TokenKind::AtAt;
                let op = self.parse_flow_op()?;
                self.expect(&TokenKind::Semi, "`;`")?;
                StmtKind::Narrow { name, op, early }
            }
            _ => {
                let expr = self.parse_expr()?;
                self.expect(&TokenKind::Semi, "`;`")?;
                StmtKind::Expr { expr }
            }
        };
        Ok(Stmt { id, pos, kind })
    }

    /// Distinguishes the statement `x@<T>;` from an expression statement
    /// starting with a flow cast (for example `x@some.f;`): it is a narrow
    /// statement only when the flow op is followed directly by `;`.
    fn narrow_lookahead(&self) -> bool {
        // tokens: Ident (@ | @@) <flowop> ;
        let mut i = 2;
        if matches!(self.peek_at(i), TokenKind::Bang) {
            i += 1;
        }
        match self.peek_at(i) {
            TokenKind::KwNone => *self.peek_at(i + 1) == TokenKind::Semi,
            TokenKind::Ident(s)
                if matches!(s.as_str(), "some" | "ok" | "err" | "result") =>
            {
                *self.peek_at(i + 1) == TokenKind::Semi
            }
            TokenKind::Lt => {
                // scan to matching `>` then require `;`
                let mut depth = 0usize;
                let mut j = i;
                loop {
                    match self.peek_at(j) {
                        TokenKind::Lt => depth += 1,
                        TokenKind::Gt => {
                            depth -= 1;
                            if depth == 0 {
                                return *self.peek_at(j + 1) == TokenKind::Semi;
                            }
                        }
                        TokenKind::Ge if depth == 1 => {
                            // `>=` cannot occur; treat as failure.
                            return false;
                        }
                        TokenKind::Semi | TokenKind::Eof | TokenKind::LBrace => return false,
                        _ => {}
                    }
                    j += 1;
                    if j > self.idx + 64 {
                        return false;
                    }
                }
            }
            TokenKind::LBracket => {
                let mut j = i;
                let mut depth = 0usize;
                loop {
                    match self.peek_at(j) {
                        TokenKind::LBracket => depth += 1,
                        TokenKind::RBracket => {
                            depth -= 1;
                            if depth == 0 {
                                return *self.peek_at(j + 1) == TokenKind::Semi;
                            }
                        }
                        TokenKind::Semi | TokenKind::Eof => return false,
                        _ => {}
                    }
                    j += 1;
                    if j > self.idx + 64 {
                        return false;
                    }
                }
            }
            _ => false,
        }
    }

    fn parse_ref_call(&mut self) -> PResult<(String, String, Vec<Expr>, bool)> {
        self.expect(&TokenKind::KwRef, "`ref`")?;
        let (receiver, _) = self.expect_ident("a variable name")?;
        self.expect(&TokenKind::Dot, "`.`")?;
        let (method, _) = self.expect_ident("a method name")?;
        let recursive = self.parse_recursive_tag()?;
        self.expect(&TokenKind::LParen, "`(`")?;
        let args = self.parse_args()?;
        Ok((receiver, method, args, recursive))
    }

    fn parse_recursive_tag(&mut self) -> PResult<bool> {
        if self.at(&TokenKind::LBracket) && *self.peek_at(1) == TokenKind::KwRecursive {
            self.bump();
            self.bump();
            self.expect(&TokenKind::RBracket, "`]`")?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn parse_if_stmt(&mut self, pos: SourcePos, id: NodeId) -> PResult<Stmt> {
        let mut arms = Vec::new();
        loop {
            let apos = self.pos();
            self.expect(&TokenKind::KwIf, "`if`")?;
            let cond = if self.at(&TokenKind::LParen) {
                self.bump();
                let c = self.parse_expr()?;
                self.expect(&TokenKind::RParen, "`)`")?;
                IfCond::Plain(c)
            } else {
                let op = self.parse_flow_op()?;
                self.expect(&TokenKind::LParen, "`(`")?;
                let subject = self.parse_expr()?;
                self.expect(&TokenKind::RParen, "`)`")?;
                IfCond::Flow { op, subject }
            };
            let block = self.parse_block()?;
            arms.push(IfArm { pos: apos, cond, block });
            if self.eat(&TokenKind::KwElse) {
                if self.at(&TokenKind::KwIf) {
                    continue;
                }
                let else_block = self.parse_block()?;
                return Ok(Stmt { id, pos, kind: StmtKind::If { arms, else_block: Some(else_block) } });
            }
            return Ok(Stmt { id, pos, kind: StmtKind::If { arms, else_block: None } });
        }
    }

    fn parse_match_arm(&mut self) -> PResult<MatchArm> {
        let pos = self.pos();
        let pat = match self.peek().clone() {
            TokenKind::Ident(s) if *self.peek_at(1) == TokenKind::Arrow => {
                self.bump();
                if s == "_" {
                    MatchPat::Wildcard
                } else {
                    MatchPat::Type(s)
                }
            }
            _ => {
                let e = self.parse_expr()?;
                MatchPat::Literal(e)
            }
        };
        self.expect(&TokenKind::Arrow, "`=>`")?;
        let body = if self.at(&TokenKind::LBrace) {
            self.parse_block()?
        } else {
            let spos = self.pos();
            let stmt = self.parse_stmt()?;
            Block { pos: spos, stmts: vec![stmt] }
        };
        Ok(MatchArm { pos, pat, body })
    }

    fn parse_flow_op(&mut self) -> PResult<FlowOp> {
        let pos = self.pos();
        let negated = self.eat(&TokenKind::Bang);
        let kind = match self.peek().clone() {
            TokenKind::KwNone => {
                self.bump();
                FlowOpKind::Special(FlowSpecial::None)
            }
            TokenKind::Ident(s) => {
                let sp = match s.as_str() {
                    "some" => FlowSpecial::Some,
                    "ok" => FlowSpecial::Ok,
                    "err" => FlowSpecial::Err,
                    "result" => FlowSpecial::Result,
                    _ => {
                        self.err_here(format!(
                            "expected a flow operator (none/some/ok/err/result, <Type>, or [literal]), found identifier `{}`",
                            s
                        ));
                        return Err(());
                    }
                };
                self.bump();
                FlowOpKind::Special(sp)
            }
            TokenKind::Lt => {
                self.bump();
                let ty = self.parse_type()?;
                self.expect(&TokenKind::Gt, "`>`")?;
                FlowOpKind::Type(ty)
            }
            TokenKind::LBracket => {
                self.bump();
                let lit = self.parse_expr()?;
                self.expect(&TokenKind::RBracket, "`]`")?;
                FlowOpKind::Literal(Box::new(lit))
            }
            other => {
                self.err_here(format!("expected a flow operator, found {}", other.describe()));
                return Err(());
            }
        };
        Ok(FlowOp { pos, negated, kind })
    }

    fn parse_update_list(&mut self) -> PResult<Vec<(String, Expr)>> {
        self.expect(&TokenKind::LBrace, "`{`")?;
        let mut updates = Vec::new();
        loop {
            let (name, _) = self.expect_ident("a field name")?;
            self.expect(&TokenKind::Eq, "`=`")?;
            let value = self.parse_expr()?;
            updates.push((name, value));
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        self.expect(&TokenKind::RBrace, "`}`")?;
        Ok(updates)
    }

    fn parse_args(&mut self) -> PResult<Vec<Expr>> {
        // Opening paren already consumed.
        let mut args = Vec::new();
        if self.eat(&TokenKind::RParen) {
            return Ok(args);
        }
        loop {
            args.push(self.parse_expr()?);
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        self.expect(&TokenKind::RParen, "`)`")?;
        Ok(args)
    }

    // ----- expressions -----

    pub(crate) fn parse_expr(&mut self) -> PResult<Expr> {
        let lhs = self.parse_implies()?;
        if matches!(self.peek(), TokenKind::QuestionQuestion | TokenKind::AtAt) {
            let is_cast = self.bump().kind == TokenKind::AtAt;
            let op = self.parse_flow_op()?;
            let pos = lhs.pos.clone();
            let id = self.fresh_id();
            return Ok(Expr {
                id,
                pos,
                kind: ExprKind::EarlyFlow { subject: Box::new(lhs), op, is_cast },
            });
        }
        Ok(lhs)
    }

    fn mk(&mut self, pos: SourcePos, kind: ExprKind) -> Expr {
        Expr { id: self.fresh_id(), pos, kind }
    }

    fn parse_implies(&mut self) -> PResult<Expr> {
        let lhs = self.parse_or()?;
        if self.eat(&TokenKind::Implies) {
            let rhs = self.parse_implies()?;
            let pos = lhs.pos.clone();
            return Ok(self.mk(
                pos,
                ExprKind::Binary {
                    op: BinaryOp::Implies,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
            ));
        }
        Ok(lhs)
    }

    fn parse_or(&mut self) -> PResult<Expr> {
        let mut lhs = self.parse_and()?;
        while self.eat(&TokenKind::PipePipe) {
            let rhs = self.parse_and()?;
            let pos = lhs.pos.clone();
            lhs = self.mk(
                pos,
                ExprKind::Binary { op: BinaryOp::Or, lhs: Box::new(lhs), rhs: Box::new(rhs) },
            );
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> PResult<Expr> {
        let mut lhs = self.parse_equality()?;
        while self.eat(&TokenKind::AmpAmp) {
            let rhs = self.parse_equality()?;
            let pos = lhs.pos.clone();
            lhs = self.mk(
                pos,
                ExprKind::Binary { op: BinaryOp::And, lhs: Box::new(lhs), rhs: Box::new(rhs) },
            );
        }
        Ok(lhs)
    }

    fn parse_equality(&mut self) -> PResult<Expr> {
        let mut lhs = self.parse_relational()?;
        loop {
            let op = match self.peek() {
                TokenKind::EqEq => BinaryOp::Eq,
                TokenKind::BangEq => BinaryOp::Neq,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_relational()?;
            let pos = lhs.pos.clone();
            lhs = self.mk(pos, ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) });
        }
        Ok(lhs)
    }

    fn parse_relational(&mut self) -> PResult<Expr> {
        let mut lhs = self.parse_additive()?;
        loop {
            let op = match self.peek() {
                TokenKind::Lt => BinaryOp::Lt,
                TokenKind::Le => BinaryOp::Le,
                TokenKind::Gt => BinaryOp::Gt,
                TokenKind::Ge => BinaryOp::Ge,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_additive()?;
            let pos = lhs.pos.clone();
            lhs = self.mk(pos, ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) });
        }
        Ok(lhs)
    }

    fn parse_additive(&mut self) -> PResult<Expr> {
        let mut lhs = self.parse_multiplicative()?;
        loop {
            let op = match self.peek() {
                TokenKind::Plus => BinaryOp::Add,
                TokenKind::Minus => BinaryOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_multiplicative()?;
            let pos = lhs.pos.clone();
            lhs = self.mk(pos, ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) });
        }
        Ok(lhs)
    }

    fn parse_multiplicative(&mut self) -> PResult<Expr> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match self.peek() {
                TokenKind::Star => BinaryOp::Mul,
                TokenKind::Slash => BinaryOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_unary()?;
            let pos = lhs.pos.clone();
            lhs = self.mk(pos, ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) });
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        if self.eat(&TokenKind::Bang) {
            let operand = self.parse_unary()?;
            return Ok(self.mk(pos, ExprKind::Unary { op: UnaryOp::Not, operand: Box::new(operand) }));
        }
        if self.eat(&TokenKind::Minus) {
            let operand = self.parse_unary()?;
            return Ok(self.mk(pos, ExprKind::Unary { op: UnaryOp::Neg, operand: Box::new(operand) }));
        }
        self.parse_postfix()
    }

    fn parse_postfix(&mut self) -> PResult<Expr> {
        let mut e = self.parse_primary()?;
        loop {
            match self.peek().clone() {
                TokenKind::Dot => {
                    match self.peek_at(1).clone() {
                        TokenKind::LBrace => {
                            self.bump();
                            let updates = self.parse_update_list()?;
                            let pos = e.pos.clone();
                            e = self.mk(
                                pos,
                                ExprKind::BulkUpdate { target: Box::new(e), updates },
                            );
                        }
                        TokenKind::Num(text, NumKind::UnsuffixedInt) => {
                            self.bump();
                            self.bump();
                            let index: u32 = text.parse().unwrap_or(u32::MAX);
                            let pos = e.pos.clone();
                            e = self.mk(pos, ExprKind::TupleIndex { receiver: Box::new(e), index });
                        }
                        TokenKind::Num(text, NumKind::UnsuffixedFloat) => {
                            // `.0.1` lexes as the float `0.1`; split it back
                            // into two tuple indexes.
                            self.bump();
                            self.bump();
                            let mut parts = text.split('.');
                            let a: u32 = parts.next().unwrap_or("0").parse().unwrap_or(u32::MAX);
                            let b: u32 = parts.next().unwrap_or("0").parse().unwrap_or(u32::MAX);
                            let pos = e.pos.clone();
                            e = self.mk(
                                pos.clone(),
                                ExprKind::TupleIndex { receiver: Box::new(e), index: a },
                            );
                            e = self.mk(pos, ExprKind::TupleIndex { receiver: Box::new(e), index: b });
                        }
                        TokenKind::Ident(name) => {
                            self.bump();
                            self.bump();
                            // Optional type args, recursive tag, then call parens.
                            let save = self.idx;
                            let mut targs = Vec::new();
                            if self.at(&TokenKind::Lt) {
                                match self.try_parse_targs() {
                                    Some(ts) => targs = ts,
                                    None => {
                                        self.idx = save;
                                    }
                                }
                            }
                            let recursive = self.parse_recursive_tag()?;
                            if self.eat(&TokenKind::LParen) {
                                let args = self.parse_args()?;
                                let pos = e.pos.clone();
                                e = self.mk(
                                    pos,
                                    ExprKind::MethodCall {
                                        receiver: Box::new(e),
                                        name,
                                        targs,
                                        args,
                                        recursive,
                                    },
                                );
                            } else {
                                if !targs.is_empty() || recursive {
                                    self.err_here(
                                        "expected `(` to complete the call".to_string(),
                                    );
                                    return Err(());
                                }
                                let pos = e.pos.clone();
                                e = self.mk(
                                    pos,
                                    ExprKind::FieldAccess { receiver: Box::new(e), name },
                                );
                            }
                        }
                        other => {
                            self.bump();
                            self.err_here(format!(
                                "expected a member name after `.`, found {}",
                                other.describe()
                            ));
                            return Err(());
                        }
                    }
                }
                TokenKind::Question => {
                    self.bump();
                    let op = self.parse_flow_op()?;
                    let pos = e.pos.clone();
                    e = self.mk(pos, ExprKind::FlowTest { subject: Box::new(e), op });
                }
                TokenKind::At => {
                    self.bump();
                    let op = self.parse_flow_op()?;
                    let pos = e.pos.clone();
                    e = self.mk(pos, ExprKind::FlowCast { subject: Box::new(e), op });
                }
                _ => return Ok(e),
            }
        }
    }

    /// Attempts `<T, ...>`; returns None (without consuming) on failure.
    fn try_parse_targs(&mut self) -> Option<Vec<TypeExpr>> {
        let save = self.idx;
        let save_diags = self.diags.items.len();
        if !self.eat(&TokenKind::Lt) {
            return None;
        }
        let mut targs = Vec::new();
        loop {
            match self.parse_type() {
                Ok(t) => targs.push(t),
                Err(()) => {
                    self.idx = save;
                    self.diags.items.truncate(save_diags);
                    return None;
                }
            }
            if self.eat(&TokenKind::Comma) {
                continue;
            }
            if self.eat(&TokenKind::Gt) {
                return Some(targs);
            }
            self.idx = save;
            self.diags.items.truncate(save_diags);
            return None;
        }
    }

    fn parse_primary(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        match self.peek().clone() {
            TokenKind::KwNone => {
                self.bump();
                Ok(self.mk(pos, ExprKind::NoneLit))
            }
            TokenKind::KwTrue => {
                self.bump();
                Ok(self.mk(pos, ExprKind::BoolLit(true)))
            }
            TokenKind::KwFalse => {
                self.bump();
                Ok(self.mk(pos, ExprKind::BoolLit(false)))
            }
            TokenKind::Num(text, kind) => {
                self.bump();
                Ok(self.mk(pos, ExprKind::NumLit { text, kind }))
            }
            TokenKind::TypedNum(text, ty_name) => {
                self.bump();
                Ok(self.mk(pos, ExprKind::TypedLit { text, is_string: false, ty_name }))
            }
            TokenKind::Str(s) => {
                self.bump();
                Ok(self.mk(pos, ExprKind::StrLit(s)))
            }
            TokenKind::TypedStr(s, ty_name) => {
                self.bump();
                Ok(self.mk(pos, ExprKind::TypedLit { text: s, is_string: true, ty_name }))
            }
            TokenKind::KwThis => {
                self.bump();
                Ok(self.mk(pos, ExprKind::This))
            }
            TokenKind::Dollar => {
                self.bump();
                Ok(self.mk(pos, ExprKind::Binder))
            }
            TokenKind::DollarIdent(name) => {
                self.bump();
                Ok(self.mk(pos, ExprKind::NamedBinder(name)))
            }
            TokenKind::KwIf => {
                self.bump();
                let cond = self.parse_expr()?;
                self.expect(&TokenKind::KwThen, "`then`")?;
                let then = self.parse_expr()?;
                self.expect(&TokenKind::KwElse, "`else`")?;
                let els = self.parse_expr()?;
                Ok(self.mk(
                    pos,
                    ExprKind::IfExpr {
                        cond: Box::new(cond),
                        then: Box::new(then),
                        els: Box::new(els),
                    },
                ))
            }
            TokenKind::KwFn | TokenKind::KwPred => {
                let is_pred = self.bump().kind == TokenKind::KwPred;
                self.expect(&TokenKind::LParen, "`(`")?;
                let mut params = Vec::new();
                if !self.eat(&TokenKind::RParen) {
                    loop {
                        let (p, _) = self.expect_ident("a parameter name")?;
                        params.push(p);
                        if !self.eat(&TokenKind::Comma) {
                            break;
                        }
                    }
                    self.expect(&TokenKind::RParen, "`)`")?;
                }
                self.expect(&TokenKind::Arrow, "`=>`")?;
                let body = self.parse_expr()?;
                Ok(self.mk(pos, ExprKind::Lambda { is_pred, params, body: Box::new(body) }))
            }
            TokenKind::LParen => {
                self.bump();
                let e = self.parse_expr()?;
                self.expect(&TokenKind::RParen, "`)`")?;
                Ok(e)
            }
            TokenKind::LBracket => {
                self.bump();
                let mut items = Vec::new();
                if !self.eat(&TokenKind::RBracket) {
                    loop {
                        items.push(self.parse_expr()?);
                        if !self.eat(&TokenKind::Comma) {
                            break;
                        }
                    }
                    self.expect(&TokenKind::RBracket, "`]`")?;
                }
                Ok(self.mk(pos, ExprKind::Tuple(items)))
            }
            TokenKind::LBrace => {
                self.bump();
                let mut fields = Vec::new();
                if !self.eat(&TokenKind::RBrace) {
                    loop {
                        let (name, _) = self.expect_ident("a property name")?;
                        self.expect(&TokenKind::Eq, "`=`")?;
                        let value = self.parse_expr()?;
                        fields.push((name, value));
                        if !self.eat(&TokenKind::Comma) {
                            break;
                        }
                    }
                    self.expect(&TokenKind::RBrace, "`}`")?;
                }
                Ok(self.mk(pos, ExprKind::Record(fields)))
            }
            TokenKind::Ident(name) => {
                self.bump();
                self.parse_ident_expr(pos, name)
            }
            other => {
                self.err_here(format!("expected an expression, found {}", other.describe()));
                Err(())
            }
        }
    }

    fn parse_ident_expr(&mut self, pos: SourcePos, name: String) -> PResult<Expr> {
        // `Name::member`, `Name::member(args)`, `Name::member<T>(args)`
        if self.eat(&TokenKind::ColonColon) {
            let (member, _) = self.expect_ident("a member name")?;
            let mut targs = Vec::new();
            if self.at(&TokenKind::Lt) {
                if let Some(ts) = self.try_parse_targs() {
                    targs = ts;
                }
            }
            let recursive = self.parse_recursive_tag()?;
            let args = if self.eat(&TokenKind::LParen) { Some(self.parse_args()?) } else { None };
            return Ok(self.mk(
                pos,
                ExprKind::StaticAccess { owner: name, name: member, targs, args, recursive },
            ));
        }

        // `f(args)` / `f[recursive](args)`
        if self.at(&TokenKind::LParen) {
            self.bump();
            let args = self.parse_args()?;
            return Ok(self.mk(pos, ExprKind::Call { name, args, recursive: false }));
        }
        if self.at(&TokenKind::LBracket) && *self.peek_at(1) == TokenKind::KwRecursive {
            let recursive = self.parse_recursive_tag()?;
            self.expect(&TokenKind::LParen, "`(`")?;
            let args = self.parse_args()?;
            return Ok(self.mk(pos, ExprKind::Call { name, args, recursive }));
        }

        // `Name{...}` construction, `List<T>{...}`, `Map<K,V>{...}`.
        if self.at(&TokenKind::LBrace) {
            return self.parse_construct(pos, name, Vec::new());
        }
        if self.at(&TokenKind::Lt) {
            let save = self.idx;
            if let Some(targs) = self.try_parse_targs() {
                if self.at(&TokenKind::LBrace) {
                    return self.parse_construct(pos, name, targs);
                }
                self.idx = save;
            }
        }

        Ok(self.mk(pos, ExprKind::Ident(name)))
    }

    fn parse_construct(
        &mut self,
        pos: SourcePos,
        name: String,
        targs: Vec<TypeExpr>,
    ) -> PResult<Expr> {
        self.expect(&TokenKind::LBrace, "`{`")?;
        if name == "Map" {
            let mut items = Vec::new();
            if !self.eat(&TokenKind::RBrace) {
                loop {
                    let k = self.parse_expr()?;
                    self.expect(&TokenKind::Arrow, "`=>`")?;
                    let v = self.parse_expr()?;
                    items.push((k, v));
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
                self.expect(&TokenKind::RBrace, "`}`")?;
            }
            return Ok(self.mk(pos, ExprKind::MapLit { targs, items }));
        }
        let mut args = Vec::new();
        if !self.eat(&TokenKind::RBrace) {
            loop {
                args.push(self.parse_expr()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
            self.expect(&TokenKind::RBrace, "`}`")?;
        }
        if name == "List" {
            return Ok(self.mk(pos, ExprKind::ListLit { targs, items: args }));
        }
        Ok(self.mk(pos, ExprKind::Construct { name, targs, args }))
    }

    // ----- types -----

    fn parse_type(&mut self) -> PResult<TypeExpr> {
        let first = self.parse_postfix_type()?;
        if !self.at(&TokenKind::Pipe) {
            return Ok(first);
        }
        let pos = first.pos.clone();
        let mut members = Vec::new();
        splice_union(&mut members, first);
        while self.eat(&TokenKind::Pipe) {
            let next = self.parse_postfix_type()?;
            splice_union(&mut members, next);
        }
        Ok(TypeExpr { pos, kind: TypeExprKind::Union(members) })
    }

    /// `T?` is sugar for `T | None` and is normalized here, so downstream
    /// passes only ever see unions.
    fn parse_postfix_type(&mut self) -> PResult<TypeExpr> {
        let t = self.parse_atom_type()?;
        if !self.at(&TokenKind::Question) {
            return Ok(t);
        }
        let pos = t.pos.clone();
        let mut members = Vec::new();
        splice_union(&mut members, t);
        while self.eat(&TokenKind::Question) {}
        if !members.iter().any(is_none_type) {
            members.push(TypeExpr {
                pos: pos.clone(),
                kind: TypeExprKind::Named { name: "None".into(), targs: Vec::new() },
            });
        }
        Ok(TypeExpr { pos, kind: TypeExprKind::Union(members) })
    }

    fn parse_atom_type(&mut self) -> PResult<TypeExpr> {
        let pos = self.pos();
        match self.peek().clone() {
            TokenKind::Ident(name) => {
                self.bump();
                let mut targs = Vec::new();
                if self.at(&TokenKind::Lt) {
                    self.bump();
                    loop {
                        targs.push(self.parse_type()?);
                        if self.eat(&TokenKind::Comma) {
                            continue;
                        }
                        break;
                    }
                    self.expect(&TokenKind::Gt, "`>`")?;
                }
                Ok(TypeExpr { pos, kind: TypeExprKind::Named { name, targs } })
            }
            TokenKind::KwNone => {
                // `None` is written capitalized as a type; plain `none` here
                // is a literal, not a type, so reject it.
                self.err_here("expected a type, found the literal `none` (the type is `None`)".to_string());
                Err(())
            }
            TokenKind::LBracket => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    items.push(self.parse_type()?);
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
                self.expect(&TokenKind::RBracket, "`]`")?;
                Ok(TypeExpr { pos, kind: TypeExprKind::Tuple(items) })
            }
            TokenKind::LBrace => {
                self.bump();
                let mut fields = Vec::new();
                loop {
                    let (name, _) = self.expect_ident("a property name")?;
                    self.expect(&TokenKind::Colon, "`:`")?;
                    let ty = self.parse_type()?;
                    fields.push((name, ty));
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
                self.expect(&TokenKind::RBrace, "`}`")?;
                Ok(TypeExpr { pos, kind: TypeExprKind::Record(fields) })
            }
            TokenKind::LParen => {
                self.bump();
                let t = self.parse_type()?;
                self.expect(&TokenKind::RParen, "`)`")?;
                Ok(t)
            }
            other => {
                self.err_here(format!("expected a type, found {}", other.describe()));
                Err(())
            }
        }
    }
}

/// Appends `t` to a union member list, flattening if `t` is itself a union.
fn splice_union(members: &mut Vec<TypeExpr>, t: TypeExpr) {
    match t.kind {
        TypeExprKind::Union(inner) => members.extend(inner),
        _ => members.push(t),
    }
}

fn is_none_type(t: &TypeExpr) -> bool {
    matches!(&t.kind, TypeExprKind::Named { name, targs } if name == "None" && targs.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_ok(text: &str) -> SurfaceProgram {
        let r = parse_program(&[("t.lx".to_string(), text.to_string())]);
        if r.program.is_none() {
            panic!("parse failed:\n{}", r.diags.render());
        }
        r.program.unwrap()
    }

    fn parse_err(text: &str) -> Diagnostics {
        let r = parse_program(&[("t.lx".to_string(), text.to_string())]);
        assert!(r.program.is_none(), "expected a parse failure");
        r.diags
    }

    #[test]
    fn function_with_clauses() {
        let p = parse_ok(
            "function process(sales: SaleInfo, order: SaleOrder): SaleInfo?\n\
             ensures $return != none ==> $return@<SaleInfo>.available <= sales.available;\n\
             {\n  if(sales.available < order.quantity) { return none; }\n  else { return sales.{available=$available - order.quantity, orders=$orders.pushBack(order)}; }\n}",
        );
        assert_eq!(p.decls.len(), 1);
        match &p.decls[0].kind {
            DeclKind::Function(f) => {
                assert_eq!(f.name, "process");
                assert_eq!(f.params.len(), 2);
                assert_eq!(f.ensures.len(), 1);
                assert!(matches!(f.body, FnBody::Block(_)));
            }
            _ => panic!("expected a function"),
        }
    }

    #[test]
    fn typedecl_forms() {
        let p = parse_ok(
            "typedecl ZipcodeValidator = /[0-9]{5}(-[0-9]{4})?/;\n\
             typedecl Zipcode = StringOf<ZipcodeValidator>;\n\
             typedecl Celsius = Float;",
        );
        assert_eq!(p.decls.len(), 3);
        assert!(matches!(&p.decls[0].kind, DeclKind::Validator { regex, .. } if regex == "[0-9]{5}(-[0-9]{4})?"));
        assert!(matches!(&p.decls[1].kind, DeclKind::Typedecl { .. }));
    }

    #[test]
    fn datatype_with_cases_and_attached_members() {
        let p = parse_ok(
            "datatype ITree using {\n  size: Nat\n} of\n Nil {}\n | Leaf { v: Int }\n | Node {\n    invariant test size == l.size + r.size + 1n;\n    field v: Int;\n    field l: ITree;\n    field r: ITree;\n  }\n& {\n  const empty = Nil{0n};\n  method isEmpty() {\n    return this?<Nil>;\n  }\n  recursive method has(x: Int): Bool {\n    match(this) {\n      Nil => return false;\n      | Leaf => return $.v == x;\n      | Node => { return true; }\n    }\n  }\n}",
        );
        match &p.decls[0].kind {
            DeclKind::Datatype { name, using, cases, attached } => {
                assert_eq!(name, "ITree");
                assert_eq!(using.len(), 1);
                assert_eq!(cases.len(), 3);
                assert_eq!(cases[1].members.len(), 1);
                assert_eq!(cases[2].members.len(), 4);
                assert_eq!(attached.len(), 3);
            }
            _ => panic!("expected a datatype"),
        }
    }

    #[test]
    fn flow_op_statements_and_expressions() {
        let p = parse_ok(
            "function bar(k: Int): Nat | Int | None {\n\
               let x: Nat | Int = foo(k) ?? !none;\n\
               x @@ <Nat>;\n\
               x@<Nat>;\n\
               if none (x) { return 0n; } else { return $ + 10n; }\n\
             }",
        );
        match &p.decls[0].kind {
            DeclKind::Function(f) => {
                let FnBody::Block(b) = &f.body else { panic!() };
                assert!(matches!(&b.stmts[0].kind, StmtKind::Let { .. }));
                assert!(matches!(&b.stmts[1].kind, StmtKind::Narrow { early: true, .. }));
                assert!(matches!(&b.stmts[2].kind, StmtKind::Narrow { early: false, .. }));
                match &b.stmts[3].kind {
                    StmtKind::If { arms, else_block } => {
                        assert!(matches!(arms[0].cond, IfCond::Flow { .. }));
                        assert!(else_block.is_some());
                    }
                    _ => panic!("expected if"),
                }
            }
            _ => panic!("expected function"),
        }
    }

    #[test]
    fn static_calls_and_functor_type_args() {
        parse_ok(
            "function maxPair(x: List<Int>, y: List<Int>): [Int, Int]\n\
             ensures x.contains($return.0);\n\
             examples [ [List{3i, 2i}, List{3i, 5i}] => [2i, 5i] ];\n\
             { defer; }\n\
             function alt(x: List<Int>, y: List<Int>): [Int, Int] {\n\
               return List::zip<Int, Int>(x, y).maxArg<Int>(fn(v) => v.0 + v.1);\n\
             }",
        );
    }

    #[test]
    fn defer_body_shape() {
        let p = parse_ok("function f(x: Int): Int { defer; }");
        match &p.decls[0].kind {
            DeclKind::Function(f) => assert!(matches!(f.body, FnBody::Defer)),
            _ => panic!(),
        }
    }

    #[test]
    fn ref_method_calls() {
        let p = parse_ok(
            "function main(): Nat {\n\
               var ctr = Counter::create();\n\
               let id1 = ref ctr.generateNextID();\n\
               ref ctr.generateNextID();\n\
               return id1;\n\
             }",
        );
        match &p.decls[0].kind {
            DeclKind::Function(f) => {
                let FnBody::Block(b) = &f.body else { panic!() };
                assert!(matches!(&b.stmts[1].kind, StmtKind::RefCall { bind: Some(_), .. }));
                assert!(matches!(&b.stmts[2].kind, StmtKind::RefCall { bind: None, .. }));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn comparison_is_not_type_args() {
        let p = parse_ok("function f(a: Int, b: Int, c: Bool, d: Bool): Bool { return a < b == c > d; }");
        // Parses as ((a < b) == (c > d)) with no construct in sight.
        match &p.decls[0].kind {
            DeclKind::Function(f) => {
                let FnBody::Block(blk) = &f.body else { panic!() };
                match &blk.stmts[0].kind {
                    StmtKind::Return { value } => {
                        assert!(matches!(
                            &value.kind,
                            ExprKind::Binary { op: BinaryOp::Eq, .. }
                        ));
                    }
                    _ => panic!(),
                }
            }
            _ => panic!(),
        }
    }

    #[test]
    fn reserved_identifiers_rejected() {
        let d = parse_err("function __f(x: Int): Int { return x; }");
        assert!(d.render().contains("reserved"));
    }

    #[test]
    fn level_prefix_disambiguation() {
        let p = parse_ok(
            "entity E {\n  field test: Int;\n  invariant test >= 0i;\n  invariant test test >= 0i;\n}",
        );
        match &p.decls[0].kind {
            DeclKind::Entity { members, .. } => {
                assert!(matches!(&members[1].kind, MemberKind::Invariant { level: None, .. }));
                assert!(matches!(
                    &members[2].kind,
                    MemberKind::Invariant { level: Some(CheckLevelName::Test), .. }
                ));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn recovers_at_declaration_boundaries() {
        let d = parse_err(
            "function broken(x: Int: Int { return x; }\n\
             function also_broken(: Int { return 1i; }",
        );
        // Both functions produce their own diagnostics.
        assert!(d.items.len() >= 2, "{}", d.render());
    }
}
