//! The flat intermediate representation: loop-free, let-bound, first-order
//! expression trees.
//!
//! Everything block-structured is gone by this level. A function body is a
//! single expression built from constants, variables, `let`, `ite`, direct
//! calls, catalog functors specialized by top-level function names, value
//! constructors, accessors, type tests and casts, wrapper inject/extract,
//! key equality, primitive operators, level-gated asserts, and explicit
//! error nodes. There is no assignment, no lambda, and no dynamic dispatch;
//! evaluation order is strict left-to-right.
//!
//! Each node carries its static type and source position, plus a function
//! local preorder `id` (requires clauses, then the body, then ensures)
//! assigned by [`renumber_program`]; error-site enumeration and witness
//! reports address nodes by these ids.
//!
//! [`validate_ir`] checks the structural rules. [`text`] gives the `.lxir`
//! serialization; [`struct_eq`]/[`alpha_eq`] compare programs modulo ids
//! and, for alpha, bound-name choices.

pub mod text;

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::diag::SourcePos;
use crate::eval::value::{Value, ErrorCode};
use crate::hir::CheckRef;
use crate::types::{CheckLevel, TypeSig, TypeUniverse};

#[derive(Clone, Debug)]
pub struct IRProgram {
    pub universe: TypeUniverse,
    pub functions: BTreeMap<String, IRFunction>,
    /// User-visible entry points, declaration order.
    pub entry_points: Vec<String>,
    /// Entity -> invariant checks run at construction (ancestors first).
    pub invariants: BTreeMap<String, Vec<CheckRef>>,
    /// Entity -> ingestion-only checks.
    pub validates: BTreeMap<String, Vec<CheckRef>>,
}

#[derive(Clone, Debug)]
pub struct IRFunction {
    pub name: String,
    pub pos: SourcePos,
    pub params: Vec<(String, TypeSig)>,
    pub result: TypeSig,
    pub requires: Vec<IRClause>,
    /// May reference the reserved result variable `__ret`.
    pub ensures: Vec<IRClause>,
    pub body: IRExpr,
    pub recursive: bool,
}

#[derive(Clone, Debug)]
pub struct IRClause {
    pub level: CheckLevel,
    pub cond: IRExpr,
    pub pos: SourcePos,
}

#[derive(Clone, Debug)]
pub struct IRExpr {
    /// Preorder index within the enclosing function; 0 until renumbered.
    pub id: u32,
    pub ty: TypeSig,
    pub pos: SourcePos,
    pub kind: IRKind,
}

#[derive(Clone, Debug)]
pub enum IRKind {
    /// Scalar literal: none, bool, numeric, or plain string.
    Const(Value),
    Var(String),
    Let { name: String, bound: Box<IRExpr>, body: Box<IRExpr> },
    Ite { cond: Box<IRExpr>, then_branch: Box<IRExpr>, else_branch: Box<IRExpr> },
    Call { func: String, args: Vec<IRExpr> },
    /// Catalog operation. `args` are the operation's direct operands
    /// (receiver first, then scalars such as indexes or a fold seed);
    /// `spec` names the top-level specialization function for the
    /// operations that take one, and `captures` are passed to it before
    /// the element arguments.
    Functor { name: String, spec: Option<String>, captures: Vec<IRExpr>, args: Vec<IRExpr> },
    Tuple(Vec<IRExpr>),
    /// Props sorted by name.
    Record(Vec<(String, IRExpr)>),
    /// Positional construction; `checked` runs the entity's enabled
    /// invariants. The builtin wrappers `Ok` and `Err` construct result
    /// values.
    ConstructEntity { entity: String, args: Vec<IRExpr>, checked: bool },
    ListLit(Vec<IRExpr>),
    /// Entries in source order; evaluation sorts and rejects duplicates.
    MapLit(Vec<(IRExpr, IRExpr)>),
    TupleIndex { recv: Box<IRExpr>, index: u32 },
    RecordProp { recv: Box<IRExpr>, prop: String },
    /// Entity field, resolved by name against the receiver's runtime
    /// entity (receivers may be concept-typed).
    Field { recv: Box<IRExpr>, field: String },
    /// Runtime membership test of the subject against a type.
    IsTest { subject: Box<IRExpr>, test: TypeSig },
    /// Checked narrowing; `cast-fail` when the subject does not fit.
    AsCast { subject: Box<IRExpr>, target: TypeSig },
    /// Wrap a base value as the node's (typedecl / validated-string)
    /// type, running the validator; `regex-mismatch` on failure.
    Inject { value: Box<IRExpr> },
    /// Unwrap a typedecl, validated string, or result payload.
    Extract { value: Box<IRExpr> },
    /// Key equality; operands are KeyTypes.
    Equality { negated: bool, lhs: Box<IRExpr>, rhs: Box<IRExpr> },
    Prim { op: PrimOp, args: Vec<IRExpr> },
    /// Evaluate `cond` when `level` is enabled; false yields `code`.
    /// The node itself evaluates to none.
    Assert { level: CheckLevel, code: ErrorCode, message: String, cond: Box<IRExpr> },
    /// Unconditional error outcome.
    Error { code: ErrorCode, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrimOp {
    Neg,
    Not,
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    StrConcat,
}

impl PrimOp {
    pub fn as_str(self) -> &'static str {
        match self {
            PrimOp::Neg => "neg",
            PrimOp::Not => "not",
            PrimOp::Add => "add",
            PrimOp::Sub => "sub",
            PrimOp::Mul => "mul",
            PrimOp::Div => "div",
            PrimOp::Lt => "lt",
            PrimOp::Le => "le",
            PrimOp::Gt => "gt",
            PrimOp::Ge => "ge",
            PrimOp::StrConcat => "strconcat",
        }
    }

    pub fn parse(s: &str) -> Option<PrimOp> {
        Some(match s {
            "neg" => PrimOp::Neg,
            "not" => PrimOp::Not,
            "add" => PrimOp::Add,
            "sub" => PrimOp::Sub,
            "mul" => PrimOp::Mul,
            "div" => PrimOp::Div,
            "lt" => PrimOp::Lt,
            "le" => PrimOp::Le,
            "gt" => PrimOp::Gt,
            "ge" => PrimOp::Ge,
            "strconcat" => PrimOp::StrConcat,
            _ => return None,
        })
    }

    pub fn arity(self) -> usize {
        match self {
            PrimOp::Neg | PrimOp::Not => 1,
            _ => 2,
        }
    }
}

impl IRExpr {
    pub fn new(ty: TypeSig, pos: SourcePos, kind: IRKind) -> IRExpr {
        IRExpr { id: 0, ty, pos, kind }
    }

    /// Children in evaluation order.
    pub fn children(&self) -> Vec<&IRExpr> {
        match &self.kind {
            IRKind::Const(_) | IRKind::Var(_) | IRKind::Error { .. } => Vec::new(),
            IRKind::Let { bound, body, .. } => alloc::vec![&**bound, &**body],
            IRKind::Ite { cond, then_branch, else_branch } => {
                alloc::vec![&**cond, &**then_branch, &**else_branch]
            }
            IRKind::Call { args, .. }
            | IRKind::Tuple(args)
            | IRKind::ListLit(args)
            | IRKind::Prim { args, .. } => args.iter().collect(),
            IRKind::Functor { captures, args, .. } => captures.iter().chain(args.iter()).collect(),
            IRKind::Record(props) => props.iter().map(|(_, e)| e).collect(),
            IRKind::ConstructEntity { args, .. } => args.iter().collect(),
            IRKind::MapLit(entries) => {
                entries.iter().flat_map(|(k, v)| [k, v].into_iter()).collect()
            }
            IRKind::TupleIndex { recv, .. } => alloc::vec![&**recv],
            IRKind::RecordProp { recv, .. } => alloc::vec![&**recv],
            IRKind::Field { recv, .. } => alloc::vec![&**recv],
            IRKind::IsTest { subject, .. } => alloc::vec![&**subject],
            IRKind::AsCast { subject, .. } => alloc::vec![&**subject],
            IRKind::Inject { value } | IRKind::Extract { value } => alloc::vec![&**value],
            IRKind::Equality { lhs, rhs, .. } => alloc::vec![&**lhs, &**rhs],
            IRKind::Assert { cond, .. } => alloc::vec![&**cond],
        }
    }

    fn children_mut(&mut self) -> Vec<&mut IRExpr> {
        match &mut self.kind {
            IRKind::Const(_) | IRKind::Var(_) | IRKind::Error { .. } => Vec::new(),
            IRKind::Let { bound, body, .. } => alloc::vec![&mut **bound, &mut **body],
            IRKind::Ite { cond, then_branch, else_branch } => {
                alloc::vec![&mut **cond, &mut **then_branch, &mut **else_branch]
            }
            IRKind::Call { args, .. }
            | IRKind::Tuple(args)
            | IRKind::ListLit(args)
            | IRKind::Prim { args, .. } => args.iter_mut().collect(),
            IRKind::Functor { captures, args, .. } => {
                captures.iter_mut().chain(args.iter_mut()).collect()
            }
            IRKind::Record(props) => props.iter_mut().map(|(_, e)| e).collect(),
            IRKind::ConstructEntity { args, .. } => args.iter_mut().collect(),
            IRKind::MapLit(entries) => {
                entries.iter_mut().flat_map(|(k, v)| [k, v].into_iter()).collect()
            }
            IRKind::TupleIndex { recv, .. } => alloc::vec![&mut **recv],
            IRKind::RecordProp { recv, .. } => alloc::vec![&mut **recv],
            IRKind::Field { recv, .. } => alloc::vec![&mut **recv],
            IRKind::IsTest { subject, .. } => alloc::vec![&mut **subject],
            IRKind::AsCast { subject, .. } => alloc::vec![&mut **subject],
            IRKind::Inject { value } | IRKind::Extract { value } => alloc::vec![&mut **value],
            IRKind::Equality { lhs, rhs, .. } => alloc::vec![&mut **lhs, &mut **rhs],
            IRKind::Assert { cond, .. } => alloc::vec![&mut **cond],
        }
    }

    /// Node count, the treeification duplication measure.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }
}

/// Assigns function-local preorder ids: requires clauses in order, then the
/// body, then ensures clauses.
pub fn renumber_function(f: &mut IRFunction) {
    let mut next = 0u32;
    for c in &mut f.requires {
        number(&mut c.cond, &mut next);
    }
    number(&mut f.body, &mut next);
    for c in &mut f.ensures {
        number(&mut c.cond, &mut next);
    }
}

fn number(e: &mut IRExpr, next: &mut u32) {
    e.id = *next;
    *next += 1;
    for c in e.children_mut() {
        number(c, next);
    }
}

pub fn renumber_program(p: &mut IRProgram) {
    for f in p.functions.values_mut() {
        renumber_function(f);
    }
}

/// Functor names valid on lists.
pub const LIST_FUNCTORS: &[&str] = &[
    "size", "get", "slice", "concat", "map", "filter", "join", "has", "find", "count", "sum",
    "reduce", "allOf", "unique", "sumOf", "maxArg", "max", "pushBack", "contains", "zip",
];

/// Functor names valid on maps.
pub const MAP_FUNCTORS: &[&str] = &["size", "get", "has", "map", "filter"];

/// List operations that take a specialization function.
pub const LIST_SPECIALIZED: &[&str] =
    &["map", "filter", "join", "has", "find", "count", "reduce", "allOf", "unique", "sumOf", "maxArg"];

/// Map operations that take a specialization function.
pub const MAP_SPECIALIZED: &[&str] = &["map", "filter"];

/// One structural-rule violation found by [`validate_ir`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub function: String,
    /// Preorder id of the offending node (0 for function-level rules).
    pub node: u32,
    pub rule: String,
}

impl core::fmt::Display for Violation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{} (node {}): {}", self.function, self.node, self.rule)
    }
}

/// Checks the representation rules: scalar constants only; `let` names
/// unique per function and never shadowing params; every variable bound
/// before use; all call and specialization targets resolve; functor names
/// belong to the catalog for their container kind; equality operands are
/// KeyTypes; constructed entities exist and get the right number of
/// fields; recursion only through `recursive` functions.
pub fn validate_ir(p: &IRProgram) -> Vec<Violation> {
    let mut vs = Vec::new();
    for (name, f) in &p.functions {
        if name != &f.name {
            vs.push(Violation {
                function: name.clone(),
                node: 0,
                rule: format!("registered under `{name}` but named `{}`", f.name),
            });
        }
        let mut cx = FnCx {
            p,
            f,
            bound: f.params.iter().map(|(n, _)| n.clone()).collect(),
            lets: BTreeSet::new(),
            vs: &mut vs,
        };
        for c in &f.requires {
            cx.expr(&c.cond);
        }
        cx.expr(&f.body);
        cx.bound.insert("__ret".to_string());
        for c in &f.ensures {
            cx.expr(&c.cond);
        }
    }
    call_graph_rules(p, &mut vs);
    vs
}

struct FnCx<'a> {
    p: &'a IRProgram,
    f: &'a IRFunction,
    /// Names visible at the current point.
    bound: BTreeSet<String>,
    /// Every let name seen in this function.
    lets: BTreeSet<String>,
    vs: &'a mut Vec<Violation>,
}

impl<'a> FnCx<'a> {
    fn fail(&mut self, node: &IRExpr, rule: String) {
        self.vs.push(Violation { function: self.f.name.clone(), node: node.id, rule });
    }

    fn expr(&mut self, e: &IRExpr) {
        match &e.kind {
            IRKind::Const(v) => {
                if !matches!(
                    v,
                    Value::None
                        | Value::Bool(_)
                        | Value::Nat(_)
                        | Value::Int(_)
                        | Value::BigNat(_)
                        | Value::BigInt(_)
                        | Value::Float(_)
                        | Value::Decimal(_)
                        | Value::Rational(_)
                        | Value::Str(_)
                        | Value::Ascii(_)
                ) {
                    self.fail(e, "constants must be scalar".to_string());
                }
            }
            IRKind::Var(n) => {
                if !self.bound.contains(n) {
                    self.fail(e, format!("unbound variable `{n}`"));
                }
            }
            IRKind::Let { name, bound, body } => {
                self.expr(bound);
                if !self.lets.insert(name.clone()) {
                    self.fail(e, format!("duplicate binding `{name}`"));
                }
                if self.f.params.iter().any(|(p, _)| p == name) {
                    self.fail(e, format!("`{name}` shadows a parameter"));
                }
                let fresh = self.bound.insert(name.clone());
                self.expr(body);
                if fresh {
                    self.bound.remove(name);
                }
            }
            IRKind::Call { func, args } => {
                if !self.p.functions.contains_key(func) {
                    self.fail(e, format!("call to unknown function `{func}`"));
                }
                for a in args {
                    self.expr(a);
                }
            }
            IRKind::Functor { name, spec, captures, args } => {
                self.functor(e, name, spec, args);
                if let Some(s) = spec {
                    if !self.p.functions.contains_key(s) {
                        self.fail(e, format!("unknown specialization `{s}`"));
                    }
                }
                for a in captures.iter().chain(args.iter()) {
                    self.expr(a);
                }
            }
            IRKind::ConstructEntity { entity, args, .. } => {
                if entity == "Ok" || entity == "Err" {
                    if args.len() != 1 {
                        self.fail(e, format!("`{entity}` wraps exactly one value"));
                    }
                } else {
                    match self.p.universe.entities.get(entity) {
                        None => self.fail(e, format!("unknown entity `{entity}`")),
                        Some(info) if info.ctor_fields.len() != args.len() => self.fail(
                            e,
                            format!(
                                "`{entity}` has {} fields, constructed with {}",
                                info.ctor_fields.len(),
                                args.len()
                            ),
                        ),
                        _ => {}
                    }
                }
                for a in args {
                    self.expr(a);
                }
            }
            IRKind::Equality { lhs, rhs, .. } => {
                if !crate::types::is_key_type(&lhs.ty) {
                    self.fail(e, format!("equality on non-key type `{}`", lhs.ty));
                }
                if !crate::types::is_key_type(&rhs.ty) {
                    self.fail(e, format!("equality on non-key type `{}`", rhs.ty));
                }
                self.expr(lhs);
                self.expr(rhs);
            }
            IRKind::Prim { op, args } => {
                if args.len() != op.arity() {
                    self.fail(e, format!("`{}` takes {} operands", op.as_str(), op.arity()));
                }
                for a in args {
                    self.expr(a);
                }
            }
            _ => {
                let kids: Vec<&IRExpr> = e.children();
                for k in kids {
                    self.expr(k);
                }
            }
        }
    }

    fn functor(&mut self, e: &IRExpr, name: &str, spec: &Option<String>, args: &[IRExpr]) {
        let Some(container) = args.first() else {
            self.fail(e, "functor without a container operand".to_string());
            return;
        };
        let (catalog, specialized): (&[&str], &[&str]) = match &container.ty {
            TypeSig::List(_) => (LIST_FUNCTORS, LIST_SPECIALIZED),
            TypeSig::Map(..) => (MAP_FUNCTORS, MAP_SPECIALIZED),
            other => {
                self.fail(e, format!("functor receiver must be a container, found `{other}`"));
                return;
            }
        };
        if !catalog.contains(&name) {
            self.fail(e, format!("`{name}` is not a catalog operation"));
        } else if specialized.contains(&name) != spec.is_some() {
            let want = if spec.is_some() { "takes no" } else { "needs a" };
            self.fail(e, format!("`{name}` {want} specialization"));
        }
    }
}

fn call_graph_rules(p: &IRProgram, vs: &mut Vec<Violation>) {
    // Cycles are admissible only when every function on the cycle carries
    // the recursive flag. Tarjan is overkill at this scale: iterative DFS
    // with colors, flagging back edges.
    let mut edges: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (name, f) in &p.functions {
        let mut out = BTreeSet::new();
        let mut stack: Vec<&IRExpr> = alloc::vec![&f.body];
        for c in f.requires.iter().chain(f.ensures.iter()) {
            stack.push(&c.cond);
        }
        while let Some(e) = stack.pop() {
            match &e.kind {
                IRKind::Call { func, .. } => {
                    out.insert(func.as_str());
                }
                IRKind::Functor { spec: Some(s), .. } => {
                    out.insert(s.as_str());
                }
                _ => {}
            }
            stack.extend(e.children());
        }
        edges.insert(name.as_str(), out);
    }
    // A function on any cycle must be recursive; detect by DFS from each
    // node looking for a path back to it through the edge set.
    for (name, f) in &p.functions {
        if f.recursive {
            continue;
        }
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut stack: Vec<&str> =
            edges.get(name.as_str()).map(|s| s.iter().copied().collect()).unwrap_or_default();
        let mut on_cycle = false;
        while let Some(n) = stack.pop() {
            if n == name.as_str() {
                on_cycle = true;
                break;
            }
            if seen.insert(n) {
                if let Some(next) = edges.get(n) {
                    stack.extend(next.iter().copied());
                }
            }
        }
        if on_cycle {
            vs.push(Violation {
                function: name.clone(),
                node: 0,
                rule: "on a call cycle without the recursive flag".to_string(),
            });
        }
    }
}

/// Structural equality ignoring node ids (which are derived) and nothing
/// else: names, types, positions, levels, codes, and messages all count.
pub fn struct_eq(a: &IRProgram, b: &IRProgram) -> bool {
    if a.entry_points != b.entry_points {
        return false;
    }
    if a.functions.len() != b.functions.len() {
        return false;
    }
    for ((an, af), (bn, bf)) in a.functions.iter().zip(b.functions.iter()) {
        if an != bn || !fn_struct_eq(af, bf) {
            return false;
        }
    }
    check_tables_eq(&a.invariants, &b.invariants)
        && check_tables_eq(&a.validates, &b.validates)
        && universe_eq(&a.universe, &b.universe)
}

fn check_tables_eq(
    a: &BTreeMap<String, Vec<CheckRef>>,
    b: &BTreeMap<String, Vec<CheckRef>>,
) -> bool {
    a.len() == b.len()
        && a.iter().zip(b.iter()).all(|((an, avs), (bn, bvs))| {
            an == bn
                && avs.len() == bvs.len()
                && avs.iter().zip(bvs.iter()).all(|(x, y)| {
                    x.func == y.func && x.owner == y.owner && x.level == y.level && x.pos == y.pos
                })
        })
}

fn universe_eq(a: &TypeUniverse, b: &TypeUniverse) -> bool {
    // The serialized portion: names, shapes, validators; method tables are
    // dropped by serialization and do not count.
    if a.validators.len() != b.validators.len()
        || a.typedecls.len() != b.typedecls.len()
        || a.concepts.len() != b.concepts.len()
        || a.entities.len() != b.entities.len()
    {
        return false;
    }
    for ((an, av), (bn, bv)) in a.validators.iter().zip(b.validators.iter()) {
        if an != bn || av.pattern != bv.pattern {
            return false;
        }
    }
    for ((an, av), (bn, bv)) in a.typedecls.iter().zip(b.typedecls.iter()) {
        if an != bn || av.base != bv.base {
            return false;
        }
    }
    let infos = |u: &TypeUniverse| {
        u.concepts
            .values()
            .chain(u.entities.values())
            .map(|i| {
                (
                    i.name.clone(),
                    i.is_entity,
                    i.provides.clone(),
                    i.lineage.clone(),
                    i.own_fields.iter().map(|f| (f.name.clone(), f.ty.clone())).collect::<Vec<_>>(),
                    i.ctor_fields
                        .iter()
                        .map(|f| (f.name.clone(), f.ty.clone()))
                        .collect::<Vec<_>>(),
                    i.implementors.clone(),
                )
            })
            .collect::<Vec<_>>()
    };
    infos(a) == infos(b)
}

fn fn_struct_eq(a: &IRFunction, b: &IRFunction) -> bool {
    a.name == b.name
        && a.pos == b.pos
        && a.params == b.params
        && a.result == b.result
        && a.recursive == b.recursive
        && clauses_struct_eq(&a.requires, &b.requires)
        && clauses_struct_eq(&a.ensures, &b.ensures)
        && expr_struct_eq(&a.body, &b.body)
}

fn clauses_struct_eq(a: &[IRClause], b: &[IRClause]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b.iter()).all(|(x, y)| {
            x.level == y.level && x.pos == y.pos && expr_struct_eq(&x.cond, &y.cond)
        })
}

fn expr_struct_eq(a: &IRExpr, b: &IRExpr) -> bool {
    if a.ty != b.ty || a.pos != b.pos {
        return false;
    }
    if !kind_heads_eq(&a.kind, &b.kind, &mut |x, y| x == y) {
        return false;
    }
    let (ka, kb) = (a.children(), b.children());
    ka.len() == kb.len() && ka.iter().zip(kb.iter()).all(|(x, y)| expr_struct_eq(x, y))
}

/// Compares the non-child payload of two kinds; bound/used names go through
/// `names` so alpha equivalence can remap them.
fn kind_heads_eq(
    a: &IRKind,
    b: &IRKind,
    names: &mut dyn FnMut(&str, &str) -> bool,
) -> bool {
    use IRKind::*;
    match (a, b) {
        (Const(x), Const(y)) => crate::eval::value_eq(x, y),
        (Var(x), Var(y)) => names(x, y),
        (Let { name: x, .. }, Let { name: y, .. }) => names(x, y),
        (Ite { .. }, Ite { .. }) => true,
        (Call { func: x, args: xa }, Call { func: y, args: ya }) => x == y && xa.len() == ya.len(),
        (
            Functor { name: xn, spec: xs, captures: xc, .. },
            Functor { name: yn, spec: ys, captures: yc, .. },
        ) => xn == yn && xs == ys && xc.len() == yc.len(),
        (Tuple(xs), Tuple(ys)) => xs.len() == ys.len(),
        (Record(xs), Record(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys.iter()).all(|((xn, _), (yn, _))| xn == yn)
        }
        (
            ConstructEntity { entity: xe, checked: xc, .. },
            ConstructEntity { entity: ye, checked: yc, .. },
        ) => xe == ye && xc == yc,
        (ListLit(xs), ListLit(ys)) => xs.len() == ys.len(),
        (MapLit(xs), MapLit(ys)) => xs.len() == ys.len(),
        (TupleIndex { index: x, .. }, TupleIndex { index: y, .. }) => x == y,
        (RecordProp { prop: x, .. }, RecordProp { prop: y, .. }) => x == y,
        (Field { field: x, .. }, Field { field: y, .. }) => x == y,
        (IsTest { test: x, .. }, IsTest { test: y, .. }) => x == y,
        (AsCast { target: x, .. }, AsCast { target: y, .. }) => x == y,
        (Inject { .. }, Inject { .. }) => true,
        (Extract { .. }, Extract { .. }) => true,
        (Equality { negated: x, .. }, Equality { negated: y, .. }) => x == y,
        (Prim { op: x, .. }, Prim { op: y, .. }) => x == y,
        (
            Assert { level: xl, code: xc, message: xm, .. },
            Assert { level: yl, code: yc, message: ym, .. },
        ) => xl == yl && xc == yc && xm == ym,
        (Error { code: xc, message: xm }, Error { code: yc, message: ym }) => {
            xc == yc && xm == ym
        }
        _ => false,
    }
}

/// Equality modulo bound-variable names, node ids, positions, and
/// assert/error message wording. Free variables (parameters) must match by
/// name; types and everything else must match exactly.
pub fn alpha_eq(a: &IRExpr, b: &IRExpr) -> bool {
    let mut env: Vec<(String, String)> = Vec::new();
    alpha_rec(a, b, &mut env)
}

fn alpha_rec(a: &IRExpr, b: &IRExpr, env: &mut Vec<(String, String)>) -> bool {
    if a.ty != b.ty {
        return false;
    }
    // Messages restate function names and positions; ignore them here.
    if let (IRKind::Assert { level: xl, code: xc, .. }, IRKind::Assert { level: yl, code: yc, .. }) =
        (&a.kind, &b.kind)
    {
        if xl != yl || xc != yc {
            return false;
        }
    } else if let (IRKind::Error { code: xc, .. }, IRKind::Error { code: yc, .. }) =
        (&a.kind, &b.kind)
    {
        if xc != yc {
            return false;
        }
    } else {
        let matched = kind_heads_eq(&a.kind, &b.kind, &mut |x, y| {
            for (ax, bx) in env.iter().rev() {
                if ax == x || bx == y {
                    return ax == x && bx == y;
                }
            }
            x == y
        });
        if !matched {
            return false;
        }
    }
    match (&a.kind, &b.kind) {
        (IRKind::Let { name: xn, bound: xb, body: xbody }, IRKind::Let { name: yn, bound: yb, body: ybody }) => {
            if !alpha_rec(xb, yb, env) {
                return false;
            }
            env.push((xn.clone(), yn.clone()));
            let ok = alpha_rec(xbody, ybody, env);
            env.pop();
            ok
        }
        _ => {
            let (ka, kb) = (a.children(), b.children());
            ka.len() == kb.len() && ka.iter().zip(kb.iter()).all(|(x, y)| alpha_rec(x, y, env))
        }
    }
}

