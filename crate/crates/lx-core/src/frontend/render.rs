//! Canonical pretty-printer for the surface AST.
//!
//! Rendering a parsed program and reparsing it yields the same tree, which
//! the round-trip tests check by comparing the render of both parses. The
//! printer always writes explicit precedence-driven parentheses, so output
//! is unambiguous even where the input leaned on binding strength.

use alloc::string::String;

use crate::frontend::ast::*;
use crate::frontend::token::NumKind;

pub fn render_program(p: &SurfaceProgram) -> String {
    let mut r = Renderer { out: String::new(), indent: 0 };
    for (i, d) in p.decls.iter().enumerate() {
        if i > 0 {
            r.out.push('\n');
        }
        r.decl(d);
    }
    r.out
}

pub fn render_expr(e: &Expr) -> String {
    let mut r = Renderer { out: String::new(), indent: 0 };
    r.expr(e, Prec::Lowest);
    r.out
}

pub fn render_type(t: &TypeExpr) -> String {
    let mut r = Renderer { out: String::new(), indent: 0 };
    r.ty(t);
    r.out
}

struct Renderer {
    out: String,
    indent: usize,
}

/// Precedence levels used to decide where parentheses are required.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Lowest,
    Implies,
    Or,
    And,
    Equality,
    Relational,
    Additive,
    Multiplicative,
    Unary,
    Postfix,
}

fn bin_prec(op: BinaryOp) -> Prec {
    match op {
        BinaryOp::Implies => Prec::Implies,
        BinaryOp::Or => Prec::Or,
        BinaryOp::And => Prec::And,
        BinaryOp::Eq | BinaryOp::Neq => Prec::Equality,
        BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => Prec::Relational,
        BinaryOp::Add | BinaryOp::Sub => Prec::Additive,
        BinaryOp::Mul | BinaryOp::Div => Prec::Multiplicative,
    }
}

impl Renderer {
    fn nl(&mut self) {
        self.out.push('\n');
        for _ in 0..self.indent {
            self.out.push_str("    ");
        }
    }

    fn push(&mut self, s: &str) {
        self.out.push_str(s);
    }

    fn decl(&mut self, d: &Decl) {
        match &d.kind {
            DeclKind::Validator { name, regex } => {
                self.push("typedecl ");
                self.push(name);
                self.push(" = /");
                self.push(regex);
                self.push("/;");
                self.nl();
            }
            DeclKind::Typedecl { name, base } => {
                self.push("typedecl ");
                self.push(name);
                self.push(" = ");
                self.ty(base);
                self.push(";");
                self.nl();
            }
            DeclKind::Concept { name, provides, members } => {
                self.push("concept ");
                self.push(name);
                self.provides(provides);
                self.member_block(members);
                self.nl();
            }
            DeclKind::Entity { name, provides, members } => {
                self.push("entity ");
                self.push(name);
                self.provides(provides);
                self.member_block(members);
                self.nl();
            }
            DeclKind::Datatype { name, using, cases, attached } => {
                self.push("datatype ");
                self.push(name);
                if !using.is_empty() {
                    self.push(" using");
                    self.member_block(using);
                }
                self.push(" of");
                self.indent += 1;
                for (i, c) in cases.iter().enumerate() {
                    self.nl();
                    if i > 0 {
                        self.push("| ");
                    }
                    self.push(&c.name);
                    if c.members.is_empty() {
                        self.push(" {}");
                    } else {
                        self.member_block(&c.members);
                    }
                }
                self.indent -= 1;
                if !attached.is_empty() {
                    self.nl();
                    self.push("&");
                    self.member_block(attached);
                }
                self.push(";");
                self.nl();
            }
            DeclKind::Function(f) => {
                self.function(f, "function");
                self.nl();
            }
            DeclKind::Const { name, ty, init } => {
                self.push("const ");
                self.push(name);
                if let Some(t) = ty {
                    self.push(": ");
                    self.ty(t);
                }
                self.push(" = ");
                self.expr(init, Prec::Lowest);
                self.push(";");
                self.nl();
            }
        }
    }

    fn provides(&mut self, provides: &[String]) {
        for (i, p) in provides.iter().enumerate() {
            self.push(if i == 0 { " provides " } else { ", " });
            self.push(p);
        }
    }

    fn member_block(&mut self, members: &[Member]) {
        self.push(" {");
        self.indent += 1;
        for m in members {
            self.nl();
            self.member(m);
        }
        self.indent -= 1;
        self.nl();
        self.push("}");
    }

    fn member(&mut self, m: &Member) {
        match &m.kind {
            MemberKind::Field { name, ty } => {
                self.push("field ");
                self.push(name);
                self.push(": ");
                self.ty(ty);
                self.push(";");
            }
            MemberKind::Const { name, ty, init } => {
                self.push("const ");
                self.push(name);
                if let Some(t) = ty {
                    self.push(": ");
                    self.ty(t);
                }
                self.push(" = ");
                self.expr(init, Prec::Lowest);
                self.push(";");
            }
            MemberKind::Invariant { level, cond } => {
                self.push("invariant ");
                if let Some(l) = level {
                    self.push(l.as_str());
                    self.push(" ");
                }
                self.expr(cond, Prec::Lowest);
                self.push(";");
            }
            MemberKind::Validate { cond } => {
                self.push("validate ");
                self.expr(cond, Prec::Lowest);
                self.push(";");
            }
            MemberKind::Function(f) => self.function(f, "function"),
            MemberKind::Method(m) => {
                if m.is_abstract {
                    self.push("abstract ");
                }
                if m.is_override {
                    self.push("override ");
                }
                let kw = if m.is_ref { "method ref" } else { "method" };
                self.function(&m.func, kw);
            }
        }
    }

    fn function(&mut self, f: &FunctionDecl, kw: &str) {
        if f.recursive {
            self.push("recursive ");
        }
        self.push(kw);
        self.push(" ");
        self.push(&f.name);
        self.push("(");
        for (i, p) in f.params.iter().enumerate() {
            if i > 0 {
                self.push(", ");
            }
            self.push(&p.name);
            self.push(": ");
            self.ty(&p.ty);
        }
        self.push(")");
        if let Some(r) = &f.result {
            self.push(": ");
            self.ty(r);
        }
        self.indent += 1;
        for (level, e) in &f.requires {
            self.nl();
            self.push("requires ");
            if let Some(l) = level {
                self.push(l.as_str());
                self.push(" ");
            }
            self.expr(e, Prec::Lowest);
            self.push(";");
        }
        for (level, e) in &f.ensures {
            self.nl();
            self.push("ensures ");
            if let Some(l) = level {
                self.push(l.as_str());
                self.push(" ");
            }
            self.expr(e, Prec::Lowest);
            self.push(";");
        }
        if !f.examples.is_empty() {
            self.nl();
            self.push("examples [");
            for (i, ex) in f.examples.iter().enumerate() {
                if i > 0 {
                    self.push(",");
                }
                self.push(" [");
                for (j, a) in ex.args.iter().enumerate() {
                    if j > 0 {
                        self.push(", ");
                    }
                    self.expr(a, Prec::Lowest);
                }
                self.push("] => ");
                self.expr(&ex.expected, Prec::Lowest);
            }
            self.push(" ];");
        }
        self.indent -= 1;
        match &f.body {
            FnBody::Absent => self.push(";"),
            FnBody::Defer => {
                if !f.requires.is_empty() || !f.ensures.is_empty() || !f.examples.is_empty() {
                    self.nl();
                } else {
                    self.push(" ");
                }
                self.push("{ defer; }");
            }
            FnBody::Block(b) => {
                if !f.requires.is_empty() || !f.ensures.is_empty() || !f.examples.is_empty() {
                    self.nl();
                } else {
                    self.push(" ");
                }
                self.block(b);
            }
        }
    }

    fn block(&mut self, b: &Block) {
        self.push("{");
        self.indent += 1;
        for s in &b.stmts {
            self.nl();
            self.stmt(s);
        }
        self.indent -= 1;
        self.nl();
        self.push("}");
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Let { name, ty, init } => {
                self.push("let ");
                self.push(name);
                if let Some(t) = ty {
                    self.push(": ");
                    self.ty(t);
                }
                self.push(" = ");
                self.expr(init, Prec::Lowest);
                self.push(";");
            }
            StmtKind::Var { name, ty, init } => {
                self.push("var ");
                self.push(name);
                if let Some(t) = ty {
                    self.push(": ");
                    self.ty(t);
                }
                if let Some(e) = init {
                    self.push(" = ");
                    self.expr(e, Prec::Lowest);
                }
                self.push(";");
            }
            StmtKind::Assign { name, value } => {
                self.push(name);
                self.push(" = ");
                self.expr(value, Prec::Lowest);
                self.push(";");
            }
            StmtKind::ThisUpdate { updates } => {
                self.push("this.");
                self.updates(updates);
                self.push(";");
            }
            StmtKind::If { arms, else_block } => {
                for (i, arm) in arms.iter().enumerate() {
                    if i > 0 {
                        self.push(" else ");
                    }
                    self.push("if ");
                    match &arm.cond {
                        IfCond::Plain(c) => {
                            self.push("(");
                            self.expr(c, Prec::Lowest);
                            self.push(")");
                        }
                        IfCond::Flow { op, subject } => {
                            self.flow_op(op);
                            self.push(" (");
                            self.expr(subject, Prec::Lowest);
                            self.push(")");
                        }
                    }
                    self.push(" ");
                    self.block(&arm.block);
                }
                if let Some(eb) = else_block {
                    self.push(" else ");
                    self.block(eb);
                }
            }
            StmtKind::Match { scrutinee, arms } => {
                self.push("match (");
                self.expr(scrutinee, Prec::Lowest);
                self.push(") {");
                self.indent += 1;
                for (i, arm) in arms.iter().enumerate() {
                    self.nl();
                    if i > 0 {
                        self.push("| ");
                    }
                    match &arm.pat {
                        MatchPat::Type(n) => self.push(n),
                        MatchPat::Literal(e) => self.expr(e, Prec::Lowest),
                        MatchPat::Wildcard => self.push("_"),
                    }
                    self.push(" => ");
                    self.block(&arm.body);
                }
                self.indent -= 1;
                self.nl();
                self.push("}");
            }
            StmtKind::Return { value } => {
                self.push("return ");
                self.expr(value, Prec::Lowest);
                self.push(";");
            }
            StmtKind::Assert { level, cond } => {
                self.push("assert ");
                if let Some(l) = level {
                    self.push(l.as_str());
                    self.push(" ");
                }
                self.expr(cond, Prec::Lowest);
                self.push(";");
            }
            StmtKind::Narrow { name, op, early } => {
                self.push(name);
                self.push(if *early { "@@" } else { "@" });
                self.flow_op(op);
                self.push(";");
            }
            StmtKind::RefCall { bind, receiver, method, args, recursive } => {
                if let Some((name, ty, is_var)) = bind {
                    self.push(if *is_var { "var " } else { "let " });
                    self.push(name);
                    if let Some(t) = ty {
                        self.push(": ");
                        self.ty(t);
                    }
                    self.push(" = ");
                }
                self.push("ref ");
                self.push(receiver);
                self.push(".");
                self.push(method);
                if *recursive {
                    self.push("[recursive]");
                }
                self.push("(");
                self.expr_list(args);
                self.push(");");
            }
            StmtKind::Expr { expr } => {
                self.expr(expr, Prec::Lowest);
                self.push(";");
            }
        }
    }

    fn updates(&mut self, updates: &[(String, Expr)]) {
        self.push("{");
        for (i, (name, e)) in updates.iter().enumerate() {
            if i > 0 {
                self.push(", ");
            }
            self.push(name);
            self.push("=");
            self.expr(e, Prec::Lowest);
        }
        self.push("}");
    }

    fn flow_op(&mut self, op: &FlowOp) {
        if op.negated {
            self.push("!");
        }
        match &op.kind {
            FlowOpKind::Special(s) => self.push(s.as_str()),
            FlowOpKind::Type(t) => {
                self.push("<");
                self.ty(t);
                self.push(">");
            }
            FlowOpKind::Literal(e) => {
                self.push("[");
                self.expr(e, Prec::Lowest);
                self.push("]");
            }
        }
    }

    fn expr_list(&mut self, items: &[Expr]) {
        for (i, e) in items.iter().enumerate() {
            if i > 0 {
                self.push(", ");
            }
            self.expr(e, Prec::Lowest);
        }
    }

    fn targs(&mut self, targs: &[TypeExpr]) {
        if targs.is_empty() {
            return;
        }
        self.push("<");
        for (i, t) in targs.iter().enumerate() {
            if i > 0 {
                self.push(", ");
            }
            self.ty(t);
        }
        self.push(">");
    }

    fn expr(&mut self, e: &Expr, min: Prec) {
        match &e.kind {
            ExprKind::NoneLit => self.push("none"),
            ExprKind::BoolLit(b) => self.push(if *b { "true" } else { "false" }),
            ExprKind::NumLit { text, kind } => {
                self.push(text);
                let suffix = match kind {
                    NumKind::Nat => "n",
                    NumKind::Int => "i",
                    NumKind::BigNat => "N",
                    NumKind::BigInt => "I",
                    NumKind::Float => "f",
                    NumKind::Decimal => "d",
                    NumKind::Rational => "R",
                    NumKind::UnsuffixedInt | NumKind::UnsuffixedFloat => "",
                };
                self.push(suffix);
            }
            ExprKind::StrLit(s) => self.string_lit(s),
            ExprKind::TypedLit { text, is_string, ty_name } => {
                if *is_string {
                    self.string_lit(text);
                    self.push(ty_name);
                } else {
                    self.push(text);
                    self.push("_");
                    self.push(ty_name);
                }
            }
            ExprKind::Ident(n) => self.push(n),
            ExprKind::This => self.push("this"),
            ExprKind::Binder => self.push("$"),
            ExprKind::NamedBinder(n) => {
                self.push("$");
                self.push(n);
            }
            ExprKind::Tuple(items) => {
                self.push("[");
                self.expr_list(items);
                self.push("]");
            }
            ExprKind::Record(fields) => {
                self.push("{");
                for (i, (n, v)) in fields.iter().enumerate() {
                    if i > 0 {
                        self.push(", ");
                    }
                    self.push(n);
                    self.push("=");
                    self.expr(v, Prec::Lowest);
                }
                self.push("}");
            }
            ExprKind::ListLit { targs, items } => {
                self.push("List");
                self.targs(targs);
                self.push("{");
                self.expr_list(items);
                self.push("}");
            }
            ExprKind::MapLit { targs, items } => {
                self.push("Map");
                self.targs(targs);
                self.push("{");
                for (i, (k, v)) in items.iter().enumerate() {
                    if i > 0 {
                        self.push(", ");
                    }
                    self.expr(k, Prec::Lowest);
                    self.push(" => ");
                    self.expr(v, Prec::Lowest);
                }
                self.push("}");
            }
            ExprKind::Construct { name, targs, args } => {
                self.push(name);
                self.targs(targs);
                self.push("{");
                self.expr_list(args);
                self.push("}");
            }
            ExprKind::BulkUpdate { target, updates } => {
                self.expr(target, Prec::Postfix);
                self.push(".");
                self.updates(updates);
            }
            ExprKind::Call { name, args, recursive } => {
                self.push(name);
                if *recursive {
                    self.push("[recursive]");
                }
                self.push("(");
                self.expr_list(args);
                self.push(")");
            }
            ExprKind::StaticAccess { owner, name, targs, args, recursive } => {
                self.push(owner);
                self.push("::");
                self.push(name);
                self.targs(targs);
                if *recursive {
                    self.push("[recursive]");
                }
                if let Some(args) = args {
                    self.push("(");
                    self.expr_list(args);
                    self.push(")");
                }
            }
            ExprKind::MethodCall { receiver, name, targs, args, recursive } => {
                self.expr(receiver, Prec::Postfix);
                self.push(".");
                self.push(name);
                self.targs(targs);
                if *recursive {
                    self.push("[recursive]");
                }
                self.push("(");
                self.expr_list(args);
                self.push(")");
            }
            ExprKind::FieldAccess { receiver, name } => {
                self.expr(receiver, Prec::Postfix);
                self.push(".");
                self.push(name);
            }
            ExprKind::TupleIndex { receiver, index } => {
                self.expr(receiver, Prec::Postfix);
                self.push(".");
                let mut buf = [0u8; 10];
                self.push(u32_str(*index, &mut buf));
            }
            ExprKind::Lambda { is_pred, params, body } => {
                let needs = min > Prec::Lowest;
                if needs {
                    self.push("(");
                }
                self.push(if *is_pred { "pred(" } else { "fn(" });
                for (i, p) in params.iter().enumerate() {
                    if i > 0 {
                        self.push(", ");
                    }
                    self.push(p);
                }
                self.push(") => ");
                self.expr(body, Prec::Lowest);
                if needs {
                    self.push(")");
                }
            }
            ExprKind::Unary { op, operand } => {
                let needs = min > Prec::Unary;
                if needs {
                    self.push("(");
                }
                self.push(match op {
                    UnaryOp::Neg => "-",
                    UnaryOp::Not => "!",
                });
                self.expr(operand, Prec::Unary);
                if needs {
                    self.push(")");
                }
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let prec = bin_prec(*op);
                let needs = min > prec;
                if needs {
                    self.push("(");
                }
                // Left-associative operators keep the left side at the same
                // level; implies is right-associative.
                let (lp, rp) = if *op == BinaryOp::Implies {
                    (Prec::Or, Prec::Implies)
                } else {
                    (prec, next_tighter(prec))
                };
                self.expr(lhs, lp);
                self.push(" ");
                self.push(op.glyph());
                self.push(" ");
                self.expr(rhs, rp);
                if needs {
                    self.push(")");
                }
            }
            ExprKind::FlowTest { subject, op } => {
                self.expr(subject, Prec::Postfix);
                self.push("?");
                self.flow_op(op);
            }
            ExprKind::FlowCast { subject, op } => {
                self.expr(subject, Prec::Postfix);
                self.push("@");
                self.flow_op(op);
            }
            ExprKind::EarlyFlow { subject, op, is_cast } => {
                let needs = min > Prec::Lowest;
                if needs {
                    self.push("(");
                }
                self.expr(subject, Prec::Implies);
                self.push(if *is_cast { " @@ " } else { " ?? " });
                self.flow_op(op);
                if needs {
                    self.push(")");
                }
            }
            ExprKind::IfExpr { cond, then, els } => {
                let needs = min > Prec::Lowest;
                if needs {
                    self.push("(");
                }
                self.push("if ");
                self.expr(cond, Prec::Implies);
                self.push(" then ");
                self.expr(then, Prec::Implies);
                self.push(" else ");
                self.expr(els, Prec::Lowest);
                if needs {
                    self.push(")");
                }
            }
        }
    }

    fn string_lit(&mut self, s: &str) {
        self.push("\"");
        for c in s.chars() {
            match c {
                '"' => self.push("\\\""),
                '\\' => self.push("\\\\"),
                '\n' => self.push("\\n"),
                '\t' => self.push("\\t"),
                '\r' => self.push("\\r"),
                _ => {
                    let mut buf = [0u8; 4];
                    self.push(c.encode_utf8(&mut buf));
                }
            }
        }
        self.push("\"");
    }

    fn ty(&mut self, t: &TypeExpr) {
        match &t.kind {
            TypeExprKind::Named { name, targs } => {
                self.push(name);
                self.targs(targs);
            }
            TypeExprKind::Tuple(items) => {
                self.push("[");
                for (i, t) in items.iter().enumerate() {
                    if i > 0 {
                        self.push(", ");
                    }
                    self.ty(t);
                }
                self.push("]");
            }
            TypeExprKind::Record(fields) => {
                self.push("{");
                for (i, (n, t)) in fields.iter().enumerate() {
                    if i > 0 {
                        self.push(", ");
                    }
                    self.push(n);
                    self.push(": ");
                    self.ty(t);
                }
                self.push("}");
            }
            TypeExprKind::Union(members) => {
                for (i, m) in members.iter().enumerate() {
                    if i > 0 {
                        self.push(" | ");
                    }
                    // Nested unions flatten; other members never need parens
                    // because `|` is the loosest type operator.
                    self.ty(m);
                }
            }
        }
    }
}

fn next_tighter(p: Prec) -> Prec {
    match p {
        Prec::Lowest => Prec::Implies,
        Prec::Implies => Prec::Or,
        Prec::Or => Prec::And,
        Prec::And => Prec::Equality,
        Prec::Equality => Prec::Relational,
        Prec::Relational => Prec::Additive,
        Prec::Additive => Prec::Multiplicative,
        Prec::Multiplicative => Prec::Unary,
        Prec::Unary | Prec::Postfix => Prec::Postfix,
    }
}

fn u32_str(mut n: u32, buf: &mut [u8; 10]) -> &str {
    let mut i = buf.len();
    loop {
        i -= 1;
        buf[i] = b'0' + (n % 10) as u8;
        n /= 10;
        if n == 0 {
            break;
        }
    }
    core::str::from_utf8(&buf[i..]).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parser::parse_program;
    use alloc::string::ToString;

    fn roundtrip(text: &str) {
        let p1 = parse_program(&[("a.lx".to_string(), text.to_string())]);
        let p1 = p1.program.unwrap_or_else(|| panic!("first parse failed:\n{}", p1.diags.render()));
        let r1 = render_program(&p1);
        let p2 = parse_program(&[("a.lx".to_string(), r1.clone())]);
        let p2 = p2
            .program
            .unwrap_or_else(|| panic!("reparse failed:\n{}\nsource was:\n{}", p2.diags.render(), r1));
        let r2 = render_program(&p2);
        assert_eq!(r1, r2, "render not stable");
    }

    #[test]
    fn roundtrip_expressions() {
        roundtrip(
            "function f(a: Int, b: Int, c: Bool): Int {\n\
               let x = a + b * -a - b / a;\n\
               let y = c && a < b || a >= b ==> c == true;\n\
               let z = if c then a else b;\n\
               let w = [a, b].0 + {p=a, q=b}.q;\n\
               return x + z + w;\n\
             }",
        );
    }

    #[test]
    fn roundtrip_declarations() {
        roundtrip(
            "typedecl V = /[ab]+c?/;\n\
             typedecl S = StringOf<V>;\n\
             typedecl Celsius = Float;\n\
             concept Named { field name: String; }\n\
             entity Dog provides Named {\n\
               field age: Nat;\n\
               invariant age < 100n;\n\
               method speak(): String { return String::concat(this.name, \" barks\"); }\n\
             }\n\
             const answer: Int = 42i;",
        );
    }

    #[test]
    fn roundtrip_flow_and_match() {
        roundtrip(
            "function bar(k: Int, x: Nat | Int | None): Nat | Int | None {\n\
               let v: Nat | Int = bar(k, x) ?? !none;\n\
               v @@ <Nat>;\n\
               if none (x) { return 0n; } else { return $ ?none; }\n\
               match (x) {\n\
                 Nat => { return x@<Nat> + 1n; }\n\
                 | -1i => { return none; }\n\
                 | _ => { return x; }\n\
               }\n\
             }",
        );
    }
}
