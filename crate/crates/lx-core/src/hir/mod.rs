//! Typed, name-resolved program representation.
//!
//! Elaboration turns the surface tree into this form: every expression
//! carries its type, every name is resolved (locals, fields, methods,
//! functors), flow tests carry their statically narrowed pass/fail types,
//! and `$` binders are materialized as ordinary variables with reserved
//! `__b` names. Matches, flow-ifs, narrows, early returns, bulk updates,
//! ref calls, and lambdas all survive to this level; the reference
//! interpreter executes them directly, and lowering desugars them step by
//! step into the flat IR.

pub mod elaborate;

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::diag::SourcePos;
use crate::eval::value::Value;
use crate::types::{CheckLevel, TypeSig, TypeUniverse};

pub use elaborate::elaborate;

#[derive(Clone, Debug)]
pub struct HProgram {
    pub universe: TypeUniverse,
    /// Every runnable function, keyed by qualified name: `abs`,
    /// `ITree::has`, `Counter::create`, generated `__inv_*`/`__validate_*`,
    /// and consts as zero-parameter functions.
    pub functions: BTreeMap<String, HFunction>,
    /// Top-level user functions in declaration order.
    pub entry_points: Vec<String>,
    /// Entity name -> invariant checks to run on construction, in lineage
    /// order (ancestors first), then declaration order.
    pub invariants: BTreeMap<String, Vec<CheckRef>>,
    /// Entity name -> validate checks, same ordering, run only when
    /// admitting external data.
    pub validates: BTreeMap<String, Vec<CheckRef>>,
}

/// A generated membership check: a `Bool` function over `this`.
#[derive(Clone, Debug)]
pub struct CheckRef {
    pub func: String,
    /// Declaring type (an ancestor concept or the entity itself).
    pub owner: String,
    pub level: CheckLevel,
    pub pos: SourcePos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FnKind {
    TopFn,
    Method { owner: String, is_ref: bool, dynamic: bool },
    Static { owner: String },
    Const { owner: Option<String> },
    Generated,
}

#[derive(Clone, Debug)]
pub struct HFunction {
    pub name: String,
    pub pos: SourcePos,
    pub kind: FnKind,
    /// Methods carry `this` as their first parameter.
    pub params: Vec<(String, TypeSig)>,
    pub result: TypeSig,
    pub requires: Vec<HClause>,
    pub ensures: Vec<HClause>,
    pub examples: Vec<HExample>,
    pub recursive: bool,
    pub body: HBody,
}

#[derive(Clone, Debug)]
pub enum HBody {
    Block(HBlock),
    /// A hole for the candidate-ranking harness.
    Defer,
}

#[derive(Clone, Debug)]
pub struct HClause {
    pub level: CheckLevel,
    pub cond: HExpr,
    pub pos: SourcePos,
}

/// A test vector: closed argument expressions and the expected result.
#[derive(Clone, Debug)]
pub struct HExample {
    pub args: Vec<HExpr>,
    pub expected: HExpr,
    pub pos: SourcePos,
}

#[derive(Clone, Debug)]
pub struct HBlock {
    pub stmts: Vec<HStmt>,
}

#[derive(Clone, Debug)]
pub struct HStmt {
    pub pos: SourcePos,
    pub kind: HStmtKind,
}

#[derive(Clone, Debug)]
pub enum HStmtKind {
    /// `let`/`var` with an initializer.
    Let { name: String, ty: TypeSig, mutable: bool, init: HExpr },
    /// `var x: T;` without an initializer; definite assignment was checked.
    Declare { name: String, ty: TypeSig },
    Assign { name: String, value: HExpr },
    /// `this.{f = e, ...};` inside a ref method.
    ThisUpdate { updates: Vec<(String, HExpr)> },
    If { arms: Vec<HIfArm>, else_block: Option<HBlock> },
    /// `match (subject) { ... }`; the subject is bound to `binder` and `$`
    /// in arm bodies resolves to it at the arm's narrowed type.
    Match { subject: HExpr, binder: String, arms: Vec<HMatchArm> },
    Return { value: HExpr },
    Assert { level: CheckLevel, cond: HExpr },
    /// `x@F;` / `x@@F;` — rebind `name` to the cast result; the `early`
    /// form returns the fail-side value instead of erroring.
    Narrow { name: String, op: HFlowOp, early: bool },
    /// `ref recv.m(args);`, optionally binding the method result.
    RefCall {
        bind: Option<RefBind>,
        receiver: String,
        method: String,
        owner: String,
        args: Vec<HExpr>,
    },
    Expr(HExpr),
}

#[derive(Clone, Debug)]
pub struct RefBind {
    pub name: String,
    pub ty: TypeSig,
    pub mutable: bool,
    /// Rebinding an existing variable (`id = ref ...`) vs a fresh binding.
    pub fresh: bool,
}

#[derive(Clone, Debug)]
pub struct HIfArm {
    pub cond: HCond,
    pub body: HBlock,
    pub pos: SourcePos,
}

#[derive(Clone, Debug)]
pub enum HCond {
    Plain(HExpr),
    /// `if none (x)`: in the arm body `binder` holds the pass-narrowed
    /// subject; in a directly following else it holds the fail-narrowed one.
    Flow { subject: Box<HExpr>, op: HFlowOp, binder: String },
}

#[derive(Clone, Debug)]
pub struct HMatchArm {
    pub pat: HPat,
    pub body: HBlock,
    pub pos: SourcePos,
    /// Subject type within this arm (what `$` sees).
    pub narrowed: TypeSig,
}

#[derive(Clone, Debug)]
pub enum HPat {
    Type(TypeSig),
    Literal(Value),
    Wildcard,
}

/// A resolved flow test with its statically computed narrowings.
#[derive(Clone, Debug)]
pub struct HFlowOp {
    pub test: HTest,
    pub negated: bool,
    /// Subject type when the (possibly negated) test passes.
    pub t_pass: TypeSig,
    /// Subject type when it fails.
    pub t_fail: TypeSig,
    pub pos: SourcePos,
}

#[derive(Clone, Debug)]
pub enum HTest {
    IsNone,
    IsSome,
    IsOk,
    IsErr,
    IsResult,
    Type(TypeSig),
    Literal(Value),
}

#[derive(Clone, Debug)]
pub struct HExpr {
    pub ty: TypeSig,
    pub pos: SourcePos,
    pub kind: HExprKind,
}

#[derive(Clone, Debug)]
pub enum HExprKind {
    Const(Value),
    Var(String),
    /// `$f` inside a bulk update: the receiver's field before the update.
    OldField(String),
    Tuple(Vec<HExpr>),
    /// Props sorted by name.
    RecordLit(Vec<(String, HExpr)>),
    ListLit(Vec<HExpr>),
    MapLit(Vec<(HExpr, HExpr)>),
    /// Positional entity construction in full constructor order; invariants
    /// run on evaluation.
    Construct { entity: String, args: Vec<HExpr> },
    /// `Zipcode{s}` / `Celsius{x}`: wrap a base value, validating when the
    /// target is a validated string type.
    Inject { value: Box<HExpr> },
    OkWrap(Box<HExpr>),
    ErrWrap(Box<HExpr>),
    /// Top-level function, static function, or const (zero-arg function),
    /// by qualified name.
    Call { func: String, args: Vec<HExpr> },
    MethodCall {
        receiver: Box<HExpr>,
        target: MethodTarget,
        method: String,
        args: Vec<HExpr>,
    },
    /// Catalog operation on a list or map.
    FunctorCall {
        container: Box<HExpr>,
        name: String,
        args: Vec<HExpr>,
    },
    Lambda {
        params: Vec<(String, TypeSig)>,
        body: Box<HExpr>,
        /// Enclosing locals the body reads, in first-use order.
        captures: Vec<(String, TypeSig)>,
        is_pred: bool,
    },
    FieldAccess { receiver: Box<HExpr>, field: String },
    TupleIndex { receiver: Box<HExpr>, index: u32 },
    /// `e.{f = e2, ...}`: functional update producing a new entity.
    BulkUpdate { receiver: Box<HExpr>, updates: Vec<(String, HExpr)> },
    Unary { op: HUnary, operand: Box<HExpr> },
    Binary { op: HBinary, lhs: Box<HExpr>, rhs: Box<HExpr> },
    /// `x?F` -> Bool.
    FlowTest { subject: Box<HExpr>, op: HFlowOp },
    /// `x@F` -> pass-narrowed value or `cast-fail`.
    FlowCast { subject: Box<HExpr>, op: HFlowOp },
    /// `e ?? F` / `e @@ F`: if the test fails, return the fail-narrowed
    /// value from the enclosing function; otherwise continue with the
    /// pass-narrowed value.
    EarlyFlow { subject: Box<HExpr>, op: HFlowOp },
    IfExpr { cond: Box<HExpr>, then_branch: Box<HExpr>, else_branch: Box<HExpr> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HUnary {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HBinary {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Neq,
    And,
    Or,
    Implies,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MethodTarget {
    /// Resolved to one concrete body: `Owner::method`.
    Static { owner: String },
    /// Dispatch over the receiver's concrete entity at runtime; resolved
    /// per-entity during lowering.
    Dynamic { concept: String },
}

impl HExpr {
    pub fn new(ty: TypeSig, pos: SourcePos, kind: HExprKind) -> Self {
        HExpr { ty, pos, kind }
    }
}

/// Qualified name for a method: `Owner::name`.
pub fn method_fn_name(owner: &str, method: &str) -> String {
    let mut s = String::with_capacity(owner.len() + method.len() + 2);
    s.push_str(owner);
    s.push_str("::");
    s.push_str(method);
    s
}
