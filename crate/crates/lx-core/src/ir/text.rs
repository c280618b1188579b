//! Canonical text form for IR programs (`.lxir`).
//!
//! The file is a sequence of s-expressions: a version header, the type
//! universe (validators, typedecls, concepts, entities), the invariant and
//! validate tables, entry points, then one `fn` form per function sorted by
//! name. Every expression node carries its position and static type as the
//! two trailing elements, so a reader needs no type reconstruction.
//! [`serialize_ir`] emits a canonical layout (deterministic for a given
//! program); [`parse_ir`] accepts any whitespace arrangement and rebuilds
//! the program, renumbering node ids.

use alloc::borrow::ToOwned;
use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt::Write as _;

use num_bigint::{BigInt as NumBigInt, BigUint};
use num_rational::BigRational;

use crate::diag::SourcePos;
use crate::eval::value::{ErrorCode, Value};
use crate::hir::CheckRef;
use crate::types::{
    CheckLevel, FieldInfo, TypeInfo, TypeSig, TypeUniverse, TypedeclInfo, ValidatorInfo,
};

use super::{
    renumber_program, IRClause, IRExpr, IRFunction, IRKind, IRProgram, PrimOp,
};

// ----- s-expressions -----

#[derive(Clone, Debug)]
enum Sexp {
    Atom(String, u32),
    Str(String, u32),
    List(Vec<Sexp>, u32),
}

impl Sexp {
    fn line(&self) -> u32 {
        match self {
            Sexp::Atom(_, l) | Sexp::Str(_, l) | Sexp::List(_, l) => *l,
        }
    }

    fn atom(s: impl Into<String>) -> Sexp {
        Sexp::Atom(s.into(), 0)
    }

    fn list(items: Vec<Sexp>) -> Sexp {
        Sexp::List(items, 0)
    }

    fn as_atom(&self) -> Result<&str, String> {
        match self {
            Sexp::Atom(a, _) => Ok(a),
            other => Err(format!("line {}: expected a name", other.line())),
        }
    }

    fn as_str(&self) -> Result<&str, String> {
        match self {
            Sexp::Str(s, _) => Ok(s),
            other => Err(format!("line {}: expected a string literal", other.line())),
        }
    }

    fn as_list(&self) -> Result<&[Sexp], String> {
        match self {
            Sexp::List(items, _) => Ok(items),
            other => Err(format!("line {}: expected a list", other.line())),
        }
    }
}

fn escape_str(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{{{:x}}}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

struct Lexer<'a> {
    src: &'a str,
    chars: core::iter::Peekable<core::str::Chars<'a>>,
    line: u32,
}

#[derive(Debug)]
enum Tok {
    LParen(u32),
    RParen(u32),
    Atom(String, u32),
    Str(String, u32),
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src, chars: src.chars().peekable(), line: 1 }
    }

    fn next_tok(&mut self) -> Result<Option<Tok>, String> {
        loop {
            let Some(&c) = self.chars.peek() else { return Ok(None) };
            match c {
                '\n' => {
                    self.line += 1;
                    self.chars.next();
                }
                c if c.is_whitespace() => {
                    self.chars.next();
                }
                ';' => {
                    while let Some(&c) = self.chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.chars.next();
                    }
                }
                '(' => {
                    self.chars.next();
                    return Ok(Some(Tok::LParen(self.line)));
                }
                ')' => {
                    self.chars.next();
                    return Ok(Some(Tok::RParen(self.line)));
                }
                '"' => {
                    self.chars.next();
                    return Ok(Some(Tok::Str(self.string_body()?, self.line)));
                }
                _ => {
                    let mut a = String::new();
                    while let Some(&c) = self.chars.peek() {
                        if c.is_whitespace() || c == '(' || c == ')' || c == '"' || c == ';' {
                            break;
                        }
                        a.push(c);
                        self.chars.next();
                    }
                    return Ok(Some(Tok::Atom(a, self.line)));
                }
            }
        }
    }

    fn string_body(&mut self) -> Result<String, String> {
        let mut s = String::new();
        loop {
            let Some(c) = self.chars.next() else {
                return Err(format!("line {}: unterminated string", self.line));
            };
            match c {
                '"' => return Ok(s),
                '\n' => return Err(format!("line {}: unterminated string", self.line)),
                '\\' => match self.chars.next() {
                    Some('"') => s.push('"'),
                    Some('\\') => s.push('\\'),
                    Some('n') => s.push('\n'),
                    Some('r') => s.push('\r'),
                    Some('t') => s.push('\t'),
                    Some('u') => {
                        if self.chars.next() != Some('{') {
                            return Err(format!("line {}: bad \\u escape", self.line));
                        }
                        let mut hex = String::new();
                        loop {
                            match self.chars.next() {
                                Some('}') => break,
                                Some(h) => hex.push(h),
                                None => {
                                    return Err(format!("line {}: bad \\u escape", self.line))
                                }
                            }
                        }
                        let n = u32::from_str_radix(&hex, 16)
                            .map_err(|_| format!("line {}: bad \\u escape", self.line))?;
                        s.push(
                            char::from_u32(n)
                                .ok_or_else(|| format!("line {}: bad \\u escape", self.line))?,
                        );
                    }
                    other => {
                        return Err(format!(
                            "line {}: unknown escape `\\{}`",
                            self.line,
                            other.map(String::from).unwrap_or_default()
                        ))
                    }
                },
                c => s.push(c),
            }
        }
    }
}

fn read_all(src: &str) -> Result<Vec<Sexp>, String> {
    let mut lx = Lexer::new(src);
    let _ = lx.src;
    let mut stack: Vec<(Vec<Sexp>, u32)> = Vec::new();
    let mut top = Vec::new();
    while let Some(tok) = lx.next_tok()? {
        match tok {
            Tok::LParen(l) => stack.push((core::mem::take(&mut top), l)),
            Tok::RParen(l) => {
                let (mut outer, open_line) = stack
                    .pop()
                    .ok_or_else(|| format!("line {l}: unbalanced `)`"))?;
                let items = core::mem::replace(&mut top, Vec::new());
                outer.push(Sexp::List(items, open_line));
                top = outer;
            }
            Tok::Atom(a, l) => top.push(Sexp::Atom(a, l)),
            Tok::Str(s, l) => top.push(Sexp::Str(s, l)),
        }
    }
    if let Some((_, l)) = stack.last() {
        return Err(format!("line {l}: unclosed `(`"));
    }
    Ok(top)
}

// ----- pretty printing -----

const INLINE_WIDTH: usize = 100;

fn inline(s: &Sexp, out: &mut String) {
    match s {
        Sexp::Atom(a, _) => out.push_str(a),
        Sexp::Str(v, _) => escape_str(v, out),
        Sexp::List(items, _) => {
            out.push('(');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                inline(item, out);
            }
            out.push(')');
        }
    }
}

fn write_sexp(s: &Sexp, indent: usize, out: &mut String) {
    let mut flat = String::new();
    inline(s, &mut flat);
    if indent + flat.len() <= INLINE_WIDTH {
        out.push_str(&flat);
        return;
    }
    let Sexp::List(items, _) = s else {
        out.push_str(&flat);
        return;
    };
    out.push('(');
    let mut it = items.iter().peekable();
    // Leading atoms and strings share the head line.
    let mut first = true;
    while let Some(item) = it.peek() {
        if matches!(item, Sexp::List(..)) {
            break;
        }
        if !first {
            out.push(' ');
        }
        let mut a = String::new();
        inline(item, &mut a);
        out.push_str(&a);
        first = false;
        it.next();
    }
    for item in it {
        out.push('\n');
        for _ in 0..indent + 2 {
            out.push(' ');
        }
        write_sexp(item, indent + 2, out);
    }
    out.push(')');
}

// ----- positions -----

fn pos_atom(p: &SourcePos) -> Sexp {
    Sexp::atom(format!("@{}:{}:{}", p.file, p.line, p.col))
}

fn parse_pos(s: &Sexp) -> Result<SourcePos, String> {
    let a = s.as_atom()?;
    let body = a
        .strip_prefix('@')
        .ok_or_else(|| format!("line {}: expected a position, found `{a}`", s.line()))?;
    let bad = || format!("line {}: malformed position `{a}`", s.line());
    let (rest, col) = body.rsplit_once(':').ok_or_else(bad)?;
    let (file, line) = rest.rsplit_once(':').ok_or_else(bad)?;
    let line: u32 = line.parse().map_err(|_| bad())?;
    let col: u32 = col.parse().map_err(|_| bad())?;
    let file: Arc<str> = Arc::from(file);
    Ok(SourcePos::new(&file, line, col))
}

fn is_pos(s: &Sexp) -> bool {
    matches!(s, Sexp::Atom(a, _) if a.starts_with('@'))
}

// ----- types -----

fn type_sexp(t: &TypeSig) -> Sexp {
    match t {
        TypeSig::None => Sexp::atom("None"),
        TypeSig::Bool => Sexp::atom("Bool"),
        TypeSig::Nat => Sexp::atom("Nat"),
        TypeSig::Int => Sexp::atom("Int"),
        TypeSig::BigNat => Sexp::atom("BigNat"),
        TypeSig::BigInt => Sexp::atom("BigInt"),
        TypeSig::Float => Sexp::atom("Float"),
        TypeSig::Decimal => Sexp::atom("Decimal"),
        TypeSig::Rational => Sexp::atom("Rational"),
        TypeSig::String => Sexp::atom("String"),
        TypeSig::ASCIIString => Sexp::atom("ASCIIString"),
        TypeSig::StringOf(v) => Sexp::list(alloc::vec![Sexp::atom("stringof"), Sexp::atom(v)]),
        TypeSig::Typedecl { name, base } => Sexp::list(alloc::vec![
            Sexp::atom("decl"),
            Sexp::atom(name),
            type_sexp(base),
        ]),
        TypeSig::Ok(t) => Sexp::list(alloc::vec![Sexp::atom("ok"), type_sexp(t)]),
        TypeSig::Err(t) => Sexp::list(alloc::vec![Sexp::atom("err"), type_sexp(t)]),
        TypeSig::Tuple(ts) => {
            let mut items = alloc::vec![Sexp::atom("tuple")];
            items.extend(ts.iter().map(type_sexp));
            Sexp::list(items)
        }
        TypeSig::Record(props) => {
            let mut items = alloc::vec![Sexp::atom("record")];
            for (n, t) in props {
                items.push(Sexp::list(alloc::vec![Sexp::atom(n), type_sexp(t)]));
            }
            Sexp::list(items)
        }
        TypeSig::Union(ms) => {
            let mut items = alloc::vec![Sexp::atom("union")];
            items.extend(ms.iter().map(type_sexp));
            Sexp::list(items)
        }
        TypeSig::Nominal(n) => Sexp::list(alloc::vec![Sexp::atom("nom"), Sexp::atom(n)]),
        TypeSig::List(t) => Sexp::list(alloc::vec![Sexp::atom("list"), type_sexp(t)]),
        TypeSig::Map(k, v) => {
            Sexp::list(alloc::vec![Sexp::atom("map"), type_sexp(k), type_sexp(v)])
        }
    }
}

fn parse_type(s: &Sexp) -> Result<TypeSig, String> {
    match s {
        Sexp::Atom(a, l) => Ok(match a.as_str() {
            "None" => TypeSig::None,
            "Bool" => TypeSig::Bool,
            "Nat" => TypeSig::Nat,
            "Int" => TypeSig::Int,
            "BigNat" => TypeSig::BigNat,
            "BigInt" => TypeSig::BigInt,
            "Float" => TypeSig::Float,
            "Decimal" => TypeSig::Decimal,
            "Rational" => TypeSig::Rational,
            "String" => TypeSig::String,
            "ASCIIString" => TypeSig::ASCIIString,
            other => return Err(format!("line {l}: unknown type `{other}`")),
        }),
        Sexp::Str(_, l) => Err(format!("line {l}: expected a type")),
        Sexp::List(items, l) => {
            let head = items
                .first()
                .ok_or_else(|| format!("line {l}: empty type form"))?
                .as_atom()?;
            let arity = |n: usize| -> Result<(), String> {
                if items.len() == n + 1 {
                    Ok(())
                } else {
                    Err(format!("line {l}: `{head}` type takes {n} arguments"))
                }
            };
            match head {
                "stringof" => {
                    arity(1)?;
                    Ok(TypeSig::StringOf(items[1].as_atom()?.to_string()))
                }
                "decl" => {
                    arity(2)?;
                    Ok(TypeSig::Typedecl {
                        name: items[1].as_atom()?.to_string(),
                        base: Box::new(parse_type(&items[2])?),
                    })
                }
                "ok" => {
                    arity(1)?;
                    Ok(TypeSig::Ok(Box::new(parse_type(&items[1])?)))
                }
                "err" => {
                    arity(1)?;
                    Ok(TypeSig::Err(Box::new(parse_type(&items[1])?)))
                }
                "tuple" => Ok(TypeSig::Tuple(
                    items[1..].iter().map(parse_type).collect::<Result<_, _>>()?,
                )),
                "record" => {
                    let mut props = Vec::new();
                    for p in &items[1..] {
                        let pair = p.as_list()?;
                        if pair.len() != 2 {
                            return Err(format!("line {l}: record prop needs (name type)"));
                        }
                        props.push((pair[0].as_atom()?.to_string(), parse_type(&pair[1])?));
                    }
                    Ok(TypeSig::Record(props))
                }
                "union" => Ok(TypeSig::Union(
                    items[1..].iter().map(parse_type).collect::<Result<_, _>>()?,
                )),
                "nom" => {
                    arity(1)?;
                    Ok(TypeSig::Nominal(items[1].as_atom()?.to_string()))
                }
                "list" => {
                    arity(1)?;
                    Ok(TypeSig::list(parse_type(&items[1])?))
                }
                "map" => {
                    arity(2)?;
                    Ok(TypeSig::map(parse_type(&items[1])?, parse_type(&items[2])?))
                }
                other => Err(format!("line {l}: unknown type form `{other}`")),
            }
        }
    }
}

// ----- scalar values -----

fn value_sexp(v: &Value) -> Sexp {
    match v {
        Value::None => Sexp::atom("none"),
        Value::Bool(true) => Sexp::atom("true"),
        Value::Bool(false) => Sexp::atom("false"),
        Value::Nat(n) => Sexp::list(alloc::vec![Sexp::atom("nat"), Sexp::atom(n.to_string())]),
        Value::Int(n) => Sexp::list(alloc::vec![Sexp::atom("int"), Sexp::atom(n.to_string())]),
        Value::BigNat(n) => {
            Sexp::list(alloc::vec![Sexp::atom("bignat"), Sexp::atom(n.to_string())])
        }
        Value::BigInt(n) => {
            Sexp::list(alloc::vec![Sexp::atom("bigint"), Sexp::atom(n.to_string())])
        }
        Value::Float(f) => {
            Sexp::list(alloc::vec![Sexp::atom("float"), Sexp::atom(format!("{f}"))])
        }
        Value::Decimal(d) => {
            Sexp::list(alloc::vec![Sexp::atom("decimal"), Sexp::atom(d.to_string())])
        }
        Value::Rational(r) => Sexp::list(alloc::vec![
            Sexp::atom("rational"),
            Sexp::atom(r.numer().to_string()),
            Sexp::atom(r.denom().to_string()),
        ]),
        Value::Str(s) => Sexp::list(alloc::vec![Sexp::atom("str"), Sexp::Str(s.clone(), 0)]),
        Value::Ascii(s) => Sexp::list(alloc::vec![Sexp::atom("ascii"), Sexp::Str(s.clone(), 0)]),
        other => {
            // validate_ir rejects these before serialization.
            Sexp::list(alloc::vec![
                Sexp::atom("opaque"),
                Sexp::Str(format!("{other:?}"), 0),
            ])
        }
    }
}

fn parse_value(s: &Sexp) -> Result<Value, String> {
    match s {
        Sexp::Atom(a, l) => match a.as_str() {
            "none" => Ok(Value::None),
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            other => Err(format!("line {l}: unknown constant `{other}`")),
        },
        Sexp::Str(_, l) => Err(format!("line {l}: bare string constant")),
        Sexp::List(items, l) => {
            let head = items
                .first()
                .ok_or_else(|| format!("line {l}: empty constant"))?
                .as_atom()?;
            let num = |i: usize| -> Result<&str, String> {
                items
                    .get(i)
                    .ok_or_else(|| format!("line {l}: `{head}` constant is incomplete"))?
                    .as_atom()
            };
            let bad = |what: &str| format!("line {l}: malformed {what} constant");
            match head {
                "nat" => Ok(Value::Nat(num(1)?.parse().map_err(|_| bad("nat"))?)),
                "int" => Ok(Value::Int(num(1)?.parse().map_err(|_| bad("int"))?)),
                "bignat" => Ok(Value::BigNat(
                    num(1)?.parse::<BigUint>().map_err(|_| bad("bignat"))?,
                )),
                "bigint" => Ok(Value::BigInt(
                    num(1)?.parse::<NumBigInt>().map_err(|_| bad("bigint"))?,
                )),
                "float" => Ok(Value::Float(num(1)?.parse().map_err(|_| bad("float"))?)),
                "decimal" => Ok(Value::Decimal(num(1)?.parse().map_err(|_| bad("decimal"))?)),
                "rational" => {
                    let n = num(1)?.parse::<NumBigInt>().map_err(|_| bad("rational"))?;
                    let d = num(2)?.parse::<NumBigInt>().map_err(|_| bad("rational"))?;
                    Ok(Value::Rational(BigRational::new(n, d)))
                }
                "str" => Ok(Value::Str(
                    items
                        .get(1)
                        .ok_or_else(|| bad("string"))?
                        .as_str()?
                        .to_string(),
                )),
                "ascii" => Ok(Value::Ascii(
                    items
                        .get(1)
                        .ok_or_else(|| bad("string"))?
                        .as_str()?
                        .to_string(),
                )),
                other => Err(format!("line {l}: unknown constant form `{other}`")),
            }
        }
    }
}

// ----- expressions -----

fn expr_sexp(e: &IRExpr) -> Sexp {
    let mut items: Vec<Sexp> = match &e.kind {
        IRKind::Const(v) => alloc::vec![Sexp::atom("const"), value_sexp(v)],
        IRKind::Var(n) => alloc::vec![Sexp::atom("var"), Sexp::atom(n)],
        IRKind::Let { name, bound, body } => {
            alloc::vec![Sexp::atom("let"), Sexp::atom(name), expr_sexp(bound), expr_sexp(body)]
        }
        IRKind::Ite { cond, then_branch, else_branch } => alloc::vec![
            Sexp::atom("ite"),
            expr_sexp(cond),
            expr_sexp(then_branch),
            expr_sexp(else_branch),
        ],
        IRKind::Call { func, args } => {
            let mut v = alloc::vec![Sexp::atom("call"), Sexp::atom(func)];
            v.extend(args.iter().map(expr_sexp));
            v
        }
        IRKind::Functor { name, spec, captures, args } => alloc::vec![
            Sexp::atom("functor"),
            Sexp::atom(name),
            Sexp::atom(spec.as_deref().unwrap_or("-")),
            Sexp::list(captures.iter().map(expr_sexp).collect()),
            Sexp::list(args.iter().map(expr_sexp).collect()),
        ],
        IRKind::Tuple(args) => {
            let mut v = alloc::vec![Sexp::atom("tuple")];
            v.extend(args.iter().map(expr_sexp));
            v
        }
        IRKind::Record(props) => {
            let mut v = alloc::vec![Sexp::atom("record")];
            for (n, p) in props {
                v.push(Sexp::list(alloc::vec![Sexp::atom(n), expr_sexp(p)]));
            }
            v
        }
        IRKind::ConstructEntity { entity, args, checked } => {
            let mut v = alloc::vec![
                Sexp::atom("construct"),
                Sexp::atom(entity),
                Sexp::atom(if *checked { "checked" } else { "raw" }),
            ];
            v.extend(args.iter().map(expr_sexp));
            v
        }
        IRKind::ListLit(args) => {
            let mut v = alloc::vec![Sexp::atom("listlit")];
            v.extend(args.iter().map(expr_sexp));
            v
        }
        IRKind::MapLit(entries) => {
            let mut v = alloc::vec![Sexp::atom("maplit")];
            for (k, val) in entries {
                v.push(Sexp::list(alloc::vec![expr_sexp(k), expr_sexp(val)]));
            }
            v
        }
        IRKind::TupleIndex { recv, index } => alloc::vec![
            Sexp::atom("index"),
            expr_sexp(recv),
            Sexp::atom(index.to_string()),
        ],
        IRKind::RecordProp { recv, prop } => {
            alloc::vec![Sexp::atom("prop"), expr_sexp(recv), Sexp::atom(prop)]
        }
        IRKind::Field { recv, field } => {
            alloc::vec![Sexp::atom("field"), expr_sexp(recv), Sexp::atom(field)]
        }
        IRKind::IsTest { subject, test } => {
            alloc::vec![Sexp::atom("is"), expr_sexp(subject), type_sexp(test)]
        }
        IRKind::AsCast { subject, target } => {
            alloc::vec![Sexp::atom("as"), expr_sexp(subject), type_sexp(target)]
        }
        IRKind::Inject { value } => alloc::vec![Sexp::atom("inject"), expr_sexp(value)],
        IRKind::Extract { value } => alloc::vec![Sexp::atom("extract"), expr_sexp(value)],
        IRKind::Equality { negated, lhs, rhs } => alloc::vec![
            Sexp::atom(if *negated { "neq" } else { "eq" }),
            expr_sexp(lhs),
            expr_sexp(rhs),
        ],
        IRKind::Prim { op, args } => {
            let mut v = alloc::vec![Sexp::atom("prim"), Sexp::atom(op.as_str())];
            v.extend(args.iter().map(expr_sexp));
            v
        }
        IRKind::Assert { level, code, message, cond } => alloc::vec![
            Sexp::atom("assert"),
            Sexp::atom(level.as_str()),
            Sexp::atom(code.as_str()),
            Sexp::Str(message.clone(), 0),
            expr_sexp(cond),
        ],
        IRKind::Error { code, message } => alloc::vec![
            Sexp::atom("error"),
            Sexp::atom(code.as_str()),
            Sexp::Str(message.clone(), 0),
        ],
    };
    items.push(pos_atom(&e.pos));
    items.push(type_sexp(&e.ty));
    Sexp::list(items)
}

fn parse_expr(s: &Sexp) -> Result<IRExpr, String> {
    let items = s.as_list()?;
    let l = s.line();
    if items.len() < 3 {
        return Err(format!("line {l}: expression node needs a position and type"));
    }
    let head = items[0].as_atom()?;
    let ty = parse_type(&items[items.len() - 1])?;
    let pos_s = &items[items.len() - 2];
    if !is_pos(pos_s) {
        return Err(format!("line {l}: `{head}` node is missing its position"));
    }
    let pos = parse_pos(pos_s)?;
    let mid = &items[1..items.len() - 2];
    let need = |n: usize| -> Result<(), String> {
        if mid.len() == n {
            Ok(())
        } else {
            Err(format!("line {l}: `{head}` takes {n} parts, found {}", mid.len()))
        }
    };
    let kind = match head {
        "const" => {
            need(1)?;
            IRKind::Const(parse_value(&mid[0])?)
        }
        "var" => {
            need(1)?;
            IRKind::Var(mid[0].as_atom()?.to_string())
        }
        "let" => {
            need(3)?;
            IRKind::Let {
                name: mid[0].as_atom()?.to_string(),
                bound: Box::new(parse_expr(&mid[1])?),
                body: Box::new(parse_expr(&mid[2])?),
            }
        }
        "ite" => {
            need(3)?;
            IRKind::Ite {
                cond: Box::new(parse_expr(&mid[0])?),
                then_branch: Box::new(parse_expr(&mid[1])?),
                else_branch: Box::new(parse_expr(&mid[2])?),
            }
        }
        "call" => {
            if mid.is_empty() {
                return Err(format!("line {l}: `call` needs a function name"));
            }
            IRKind::Call {
                func: mid[0].as_atom()?.to_string(),
                args: mid[1..].iter().map(parse_expr).collect::<Result<_, _>>()?,
            }
        }
        "functor" => {
            need(4)?;
            let spec = mid[1].as_atom()?;
            IRKind::Functor {
                name: mid[0].as_atom()?.to_string(),
                spec: if spec == "-" { None } else { Some(spec.to_string()) },
                captures: mid[2]
                    .as_list()?
                    .iter()
                    .map(parse_expr)
                    .collect::<Result<_, _>>()?,
                args: mid[3]
                    .as_list()?
                    .iter()
                    .map(parse_expr)
                    .collect::<Result<_, _>>()?,
            }
        }
        "tuple" => IRKind::Tuple(mid.iter().map(parse_expr).collect::<Result<_, _>>()?),
        "record" => {
            let mut props = Vec::new();
            for p in mid {
                let pair = p.as_list()?;
                if pair.len() != 2 {
                    return Err(format!("line {l}: record prop needs (name expr)"));
                }
                props.push((pair[0].as_atom()?.to_string(), parse_expr(&pair[1])?));
            }
            IRKind::Record(props)
        }
        "construct" => {
            if mid.len() < 2 {
                return Err(format!("line {l}: `construct` needs an entity and a check flag"));
            }
            let checked = match mid[1].as_atom()? {
                "checked" => true,
                "raw" => false,
                other => return Err(format!("line {l}: bad check flag `{other}`")),
            };
            IRKind::ConstructEntity {
                entity: mid[0].as_atom()?.to_string(),
                checked,
                args: mid[2..].iter().map(parse_expr).collect::<Result<_, _>>()?,
            }
        }
        "listlit" => IRKind::ListLit(mid.iter().map(parse_expr).collect::<Result<_, _>>()?),
        "maplit" => {
            let mut entries = Vec::new();
            for p in mid {
                let pair = p.as_list()?;
                if pair.len() != 2 {
                    return Err(format!("line {l}: map entry needs (key value)"));
                }
                entries.push((parse_expr(&pair[0])?, parse_expr(&pair[1])?));
            }
            IRKind::MapLit(entries)
        }
        "index" => {
            need(2)?;
            IRKind::TupleIndex {
                recv: Box::new(parse_expr(&mid[0])?),
                index: mid[1]
                    .as_atom()?
                    .parse()
                    .map_err(|_| format!("line {l}: bad tuple index"))?,
            }
        }
        "prop" => {
            need(2)?;
            IRKind::RecordProp {
                recv: Box::new(parse_expr(&mid[0])?),
                prop: mid[1].as_atom()?.to_string(),
            }
        }
        "field" => {
            need(2)?;
            IRKind::Field {
                recv: Box::new(parse_expr(&mid[0])?),
                field: mid[1].as_atom()?.to_string(),
            }
        }
        "is" => {
            need(2)?;
            IRKind::IsTest {
                subject: Box::new(parse_expr(&mid[0])?),
                test: parse_type(&mid[1])?,
            }
        }
        "as" => {
            need(2)?;
            IRKind::AsCast {
                subject: Box::new(parse_expr(&mid[0])?),
                target: parse_type(&mid[1])?,
            }
        }
        "inject" => {
            need(1)?;
            IRKind::Inject { value: Box::new(parse_expr(&mid[0])?) }
        }
        "extract" => {
            need(1)?;
            IRKind::Extract { value: Box::new(parse_expr(&mid[0])?) }
        }
        "eq" | "neq" => {
            need(2)?;
            IRKind::Equality {
                negated: head == "neq",
                lhs: Box::new(parse_expr(&mid[0])?),
                rhs: Box::new(parse_expr(&mid[1])?),
            }
        }
        "prim" => {
            if mid.is_empty() {
                return Err(format!("line {l}: `prim` needs an operator"));
            }
            let op = PrimOp::parse(mid[0].as_atom()?)
                .ok_or_else(|| format!("line {l}: unknown operator"))?;
            IRKind::Prim {
                op,
                args: mid[1..].iter().map(parse_expr).collect::<Result<_, _>>()?,
            }
        }
        "assert" => {
            need(4)?;
            IRKind::Assert {
                level: CheckLevel::parse(mid[0].as_atom()?)
                    .ok_or_else(|| format!("line {l}: unknown check level"))?,
                code: ErrorCode::parse(mid[1].as_atom()?)
                    .ok_or_else(|| format!("line {l}: unknown error code"))?,
                message: mid[2].as_str()?.to_string(),
                cond: Box::new(parse_expr(&mid[3])?),
            }
        }
        "error" => {
            need(2)?;
            IRKind::Error {
                code: ErrorCode::parse(mid[0].as_atom()?)
                    .ok_or_else(|| format!("line {l}: unknown error code"))?,
                message: mid[1].as_str()?.to_string(),
            }
        }
        other => return Err(format!("line {l}: unknown expression form `{other}`")),
    };
    Ok(IRExpr::new(ty, pos, kind))
}

// ----- universe -----

fn field_sexp(f: &FieldInfo) -> Sexp {
    Sexp::list(alloc::vec![
        Sexp::atom(&f.name),
        type_sexp(&f.ty),
        Sexp::atom(&f.owner),
        pos_atom(&f.pos),
    ])
}

fn parse_field(s: &Sexp) -> Result<FieldInfo, String> {
    let items = s.as_list()?;
    if items.len() != 4 {
        return Err(format!("line {}: field needs (name type owner pos)", s.line()));
    }
    Ok(FieldInfo {
        name: items[0].as_atom()?.to_string(),
        ty: parse_type(&items[1])?,
        owner: items[2].as_atom()?.to_string(),
        pos: parse_pos(&items[3])?,
    })
}

fn type_info_sexp(info: &TypeInfo) -> Sexp {
    let mut items = alloc::vec![
        Sexp::atom(if info.is_entity { "entity" } else { "concept" }),
        Sexp::atom(&info.name),
        pos_atom(&info.pos),
    ];
    let mut provides = alloc::vec![Sexp::atom("provides")];
    provides.extend(info.provides.iter().map(Sexp::atom));
    items.push(Sexp::list(provides));
    let mut lineage = alloc::vec![Sexp::atom("lineage")];
    lineage.extend(info.lineage.iter().map(Sexp::atom));
    items.push(Sexp::list(lineage));
    let mut fields = alloc::vec![Sexp::atom("fields")];
    fields.extend(info.own_fields.iter().map(field_sexp));
    items.push(Sexp::list(fields));
    if info.is_entity {
        let mut ctor = alloc::vec![Sexp::atom("ctor")];
        ctor.extend(info.ctor_fields.iter().map(field_sexp));
        items.push(Sexp::list(ctor));
    }
    Sexp::list(items)
}

fn universe_sexps(u: &TypeUniverse) -> Vec<Sexp> {
    let mut out = Vec::new();
    for v in u.validators.values() {
        out.push(Sexp::list(alloc::vec![
            Sexp::atom("validator"),
            Sexp::atom(&v.name),
            Sexp::Str(v.pattern.clone(), 0),
            pos_atom(&v.pos),
        ]));
    }
    for t in u.typedecls.values() {
        out.push(Sexp::list(alloc::vec![
            Sexp::atom("typedecl"),
            Sexp::atom(&t.name),
            type_sexp(&t.base),
            pos_atom(&t.pos),
        ]));
    }
    for c in u.concepts.values() {
        out.push(type_info_sexp(c));
    }
    for e in u.entities.values() {
        out.push(type_info_sexp(e));
    }
    out
}

// ----- program -----

fn check_table_sexp(tag: &str, table: &BTreeMap<String, Vec<CheckRef>>) -> Vec<Sexp> {
    let mut out = Vec::new();
    for (owner, checks) in table {
        let mut items = alloc::vec![Sexp::atom(tag), Sexp::atom(owner)];
        for c in checks {
            items.push(Sexp::list(alloc::vec![
                Sexp::atom(&c.func),
                Sexp::atom(&c.owner),
                Sexp::atom(c.level.as_str()),
                pos_atom(&c.pos),
            ]));
        }
        out.push(Sexp::list(items));
    }
    out
}

fn parse_check_entry(s: &Sexp) -> Result<CheckRef, String> {
    let items = s.as_list()?;
    if items.len() != 4 {
        return Err(format!("line {}: check needs (func owner level pos)", s.line()));
    }
    Ok(CheckRef {
        func: items[0].as_atom()?.to_string(),
        owner: items[1].as_atom()?.to_string(),
        level: CheckLevel::parse(items[2].as_atom()?)
            .ok_or_else(|| format!("line {}: unknown check level", s.line()))?,
        pos: parse_pos(&items[3])?,
    })
}

fn clause_sexp(c: &IRClause) -> Sexp {
    Sexp::list(alloc::vec![
        Sexp::atom(c.level.as_str()),
        expr_sexp(&c.cond),
        pos_atom(&c.pos),
    ])
}

fn parse_clause(s: &Sexp) -> Result<IRClause, String> {
    let items = s.as_list()?;
    if items.len() != 3 {
        return Err(format!("line {}: clause needs (level expr pos)", s.line()));
    }
    Ok(IRClause {
        level: CheckLevel::parse(items[0].as_atom()?)
            .ok_or_else(|| format!("line {}: unknown check level", s.line()))?,
        cond: parse_expr(&items[1])?,
        pos: parse_pos(&items[2])?,
    })
}

fn function_sexp(f: &IRFunction) -> Sexp {
    let mut params = Vec::new();
    for (n, t) in &f.params {
        params.push(Sexp::list(alloc::vec![Sexp::atom(n), type_sexp(t)]));
    }
    let mut requires = alloc::vec![Sexp::atom("requires")];
    requires.extend(f.requires.iter().map(clause_sexp));
    let mut ensures = alloc::vec![Sexp::atom("ensures")];
    ensures.extend(f.ensures.iter().map(clause_sexp));
    Sexp::list(alloc::vec![
        Sexp::atom("fn"),
        Sexp::atom(&f.name),
        pos_atom(&f.pos),
        Sexp::atom(if f.recursive { "rec" } else { "norec" }),
        Sexp::list(params),
        type_sexp(&f.result),
        Sexp::list(requires),
        Sexp::list(ensures),
        expr_sexp(&f.body),
    ])
}

fn parse_function(s: &Sexp) -> Result<IRFunction, String> {
    let items = s.as_list()?;
    let l = s.line();
    if items.len() != 9 {
        return Err(format!("line {l}: malformed `fn` form"));
    }
    let name = items[1].as_atom()?.to_string();
    let pos = parse_pos(&items[2])?;
    let recursive = match items[3].as_atom()? {
        "rec" => true,
        "norec" => false,
        other => return Err(format!("line {l}: bad recursion flag `{other}`")),
    };
    let mut params = Vec::new();
    for p in items[4].as_list()? {
        let pair = p.as_list()?;
        if pair.len() != 2 {
            return Err(format!("line {l}: parameter needs (name type)"));
        }
        params.push((pair[0].as_atom()?.to_string(), parse_type(&pair[1])?));
    }
    let result = parse_type(&items[5])?;
    let section = |s: &Sexp, tag: &str| -> Result<Vec<IRClause>, String> {
        let items = s.as_list()?;
        match items.first() {
            Some(h) if h.as_atom()? == tag => {
                items[1..].iter().map(parse_clause).collect::<Result<_, _>>()
            }
            _ => Err(format!("line {}: expected `({tag} ...)`", s.line())),
        }
    };
    Ok(IRFunction {
        name,
        pos,
        params,
        result,
        requires: section(&items[6], "requires")?,
        ensures: section(&items[7], "ensures")?,
        body: parse_expr(&items[8])?,
        recursive,
    })
}

/// Renders the canonical text form.
pub fn serialize_ir(p: &IRProgram) -> String {
    let mut forms = alloc::vec![Sexp::list(alloc::vec![
        Sexp::atom("lxir"),
        Sexp::atom("1"),
    ])];
    forms.extend(universe_sexps(&p.universe));
    forms.extend(check_table_sexp("invariants", &p.invariants));
    forms.extend(check_table_sexp("validates", &p.validates));
    for e in &p.entry_points {
        forms.push(Sexp::list(alloc::vec![Sexp::atom("entry"), Sexp::atom(e)]));
    }
    for f in p.functions.values() {
        forms.push(function_sexp(f));
    }
    let mut out = String::new();
    for form in &forms {
        write_sexp(form, 0, &mut out);
        out.push('\n');
    }
    out
}

/// Parses the text form back into a program and renumbers node ids.
pub fn parse_ir(src: &str) -> Result<IRProgram, String> {
    let forms = read_all(src)?;
    let mut it = forms.iter();
    match it.next() {
        Some(header) => {
            let items = header.as_list()?;
            if items.len() != 2
                || items[0].as_atom()? != "lxir"
                || items[1].as_atom()? != "1"
            {
                return Err(format!("line {}: expected `(lxir 1)` header", header.line()));
            }
        }
        None => return Err("empty input".to_string()),
    }
    let mut p = IRProgram {
        universe: TypeUniverse::default(),
        functions: BTreeMap::new(),
        entry_points: Vec::new(),
        invariants: BTreeMap::new(),
        validates: BTreeMap::new(),
    };
    for form in it {
        let items = form.as_list()?;
        let l = form.line();
        let head = items
            .first()
            .ok_or_else(|| format!("line {l}: empty form"))?
            .as_atom()?;
        match head {
            "validator" => {
                if items.len() != 4 {
                    return Err(format!("line {l}: malformed validator"));
                }
                let v = ValidatorInfo {
                    name: items[1].as_atom()?.to_string(),
                    pattern: items[2].as_str()?.to_string(),
                    pos: parse_pos(&items[3])?,
                };
                p.universe.validators.insert(v.name.clone(), v);
            }
            "typedecl" => {
                if items.len() != 4 {
                    return Err(format!("line {l}: malformed typedecl"));
                }
                let t = TypedeclInfo {
                    name: items[1].as_atom()?.to_string(),
                    base: parse_type(&items[2])?,
                    pos: parse_pos(&items[3])?,
                };
                p.universe.typedecls.insert(t.name.clone(), t);
            }
            "concept" | "entity" => {
                let info = parse_declared_type(form, head == "entity")?;
                if head == "entity" {
                    p.universe.entities.insert(info.name.clone(), info);
                } else {
                    p.universe.concepts.insert(info.name.clone(), info);
                }
            }
            "invariants" | "validates" => {
                if items.len() < 2 {
                    return Err(format!("line {l}: malformed check table"));
                }
                let owner = items[1].as_atom()?.to_string();
                let checks = items[2..]
                    .iter()
                    .map(parse_check_entry)
                    .collect::<Result<Vec<_>, _>>()?;
                if head == "invariants" {
                    p.invariants.insert(owner, checks);
                } else {
                    p.validates.insert(owner, checks);
                }
            }
            "entry" => {
                if items.len() != 2 {
                    return Err(format!("line {l}: malformed entry"));
                }
                p.entry_points.push(items[1].as_atom()?.to_string());
            }
            "fn" => {
                let f = parse_function(form)?;
                p.functions.insert(f.name.clone(), f);
            }
            other => return Err(format!("line {l}: unknown form `{other}`")),
        }
    }
    link_implementors(&mut p.universe);
    renumber_program(&mut p);
    Ok(p)
}

fn parse_declared_type(s: &Sexp, is_entity: bool) -> Result<TypeInfo, String> {
    let items = s.as_list()?;
    let l = s.line();
    let want = if is_entity { 7 } else { 6 };
    if items.len() != want {
        return Err(format!("line {l}: malformed type declaration"));
    }
    let section = |s: &Sexp, tag: &str| -> Result<&[Sexp], String> {
        let items = s.as_list()?;
        match items.first() {
            Some(h) if h.as_atom()? == tag => Ok(&items[1..]),
            _ => Err(format!("line {}: expected `({tag} ...)`", s.line())),
        }
    };
    let names = |x: &[Sexp]| -> Result<Vec<String>, String> {
        x.iter().map(|a| a.as_atom().map(str::to_string)).collect()
    };
    let name = items[1].as_atom()?.to_string();
    let pos = parse_pos(&items[2])?;
    let provides = names(section(&items[3], "provides")?)?;
    let lineage = names(section(&items[4], "lineage")?)?;
    let own_fields = section(&items[5], "fields")?
        .iter()
        .map(parse_field)
        .collect::<Result<Vec<_>, _>>()?;
    let ctor_fields = if is_entity {
        section(&items[6], "ctor")?
            .iter()
            .map(parse_field)
            .collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    let closure = lineage.iter().filter(|n| **n != name).cloned().collect();
    Ok(TypeInfo {
        name,
        pos,
        is_entity,
        provides,
        closure,
        lineage,
        own_fields,
        ctor_fields,
        methods: Vec::new(),
        statics: Vec::new(),
        consts: Vec::new(),
        implementors: Vec::new(),
    })
}

/// Rebuilds each concept's implementor list from entity closures.
fn link_implementors(u: &mut TypeUniverse) {
    let mut by_concept: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for e in u.entities.values() {
        for c in &e.closure {
            by_concept.entry(c.clone()).or_default().push(e.name.clone());
        }
    }
    for (name, c) in u.concepts.iter_mut() {
        c.implementors = by_concept.remove(name).unwrap_or_default();
        c.implementors.sort();
    }
}
