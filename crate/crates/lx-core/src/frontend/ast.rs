//! Surface abstract syntax.
//!
//! Parse trees keep source positions and per-node ids (dense, assigned by the
//! parser) so later stages can report precise diagnostics and attach side
//! tables without mutating the tree.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::diag::SourcePos;
use crate::frontend::token::NumKind;

pub type NodeId = u32;

/// A whole translation unit: one or more files' declarations, in order.
#[derive(Clone, Debug)]
pub struct SurfaceProgram {
    pub decls: Vec<Decl>,
}

#[derive(Clone, Debug)]
pub struct Decl {
    pub id: NodeId,
    pub pos: SourcePos,
    pub kind: DeclKind,
}

#[derive(Clone, Debug)]
pub enum DeclKind {
    /// `typedecl Name = /re/;`
    Validator { name: String, regex: String },
    /// `typedecl Name = Type;` (including `StringOf<V>` bases)
    Typedecl { name: String, base: TypeExpr },
    Concept { name: String, provides: Vec<String>, members: Vec<Member> },
    Entity { name: String, provides: Vec<String>, members: Vec<Member> },
    Datatype {
        name: String,
        using: Vec<Member>,
        cases: Vec<DatatypeCase>,
        /// Members of the trailing `& { ... }` block, attached to the concept.
        attached: Vec<Member>,
    },
    Function(FunctionDecl),
    /// Top-level `const name: Type = expr;` (type optional).
    Const { name: String, ty: Option<TypeExpr>, init: Expr },
}

#[derive(Clone, Debug)]
pub struct DatatypeCase {
    pub pos: SourcePos,
    pub name: String,
    pub members: Vec<Member>,
}

#[derive(Clone, Debug)]
pub struct Member {
    pub id: NodeId,
    pub pos: SourcePos,
    pub kind: MemberKind,
}

#[derive(Clone, Debug)]
pub enum MemberKind {
    Field { name: String, ty: TypeExpr },
    Const { name: String, ty: Option<TypeExpr>, init: Expr },
    Invariant { level: Option<CheckLevelName>, cond: Expr },
    Validate { cond: Expr },
    Function(FunctionDecl),
    Method(MethodDecl),
}

/// Check level names as written; resolution to semantics happens later.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckLevelName {
    Spec,
    Debug,
    Test,
    Release,
    Safety,
}

impl CheckLevelName {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckLevelName::Spec => "spec",
            CheckLevelName::Debug => "debug",
            CheckLevelName::Test => "test",
            CheckLevelName::Release => "release",
            CheckLevelName::Safety => "safety",
        }
    }
}

#[derive(Clone, Debug)]
pub struct FunctionDecl {
    pub id: NodeId,
    pub pos: SourcePos,
    pub recursive: bool,
    pub name: String,
    pub params: Vec<Param>,
    pub result: Option<TypeExpr>,
    pub requires: Vec<(Option<CheckLevelName>, Expr)>,
    pub ensures: Vec<(Option<CheckLevelName>, Expr)>,
    pub examples: Vec<Example>,
    pub body: FnBody,
}

#[derive(Clone, Debug)]
pub struct MethodDecl {
    pub func: FunctionDecl,
    pub is_abstract: bool,
    pub is_override: bool,
    pub is_ref: bool,
}

#[derive(Clone, Debug)]
pub struct Param {
    pub pos: SourcePos,
    pub name: String,
    pub ty: TypeExpr,
}

#[derive(Clone, Debug)]
pub struct Example {
    pub pos: SourcePos,
    pub args: Vec<Expr>,
    pub expected: Expr,
}

#[derive(Clone, Debug)]
pub enum FnBody {
    Block(Block),
    /// `{ defer; }` — body intentionally left unwritten.
    Defer,
    /// Abstract methods have no body at all.
    Absent,
}

#[derive(Clone, Debug)]
pub struct Block {
    pub pos: SourcePos,
    pub stmts: Vec<Stmt>,
}

#[derive(Clone, Debug)]
pub struct Stmt {
    pub id: NodeId,
    pub pos: SourcePos,
    pub kind: StmtKind,
}

#[derive(Clone, Debug)]
pub enum StmtKind {
    /// `let x: T = e;` (type optional)
    Let { name: String, ty: Option<TypeExpr>, init: Expr },
    /// `var x: T = e;` (type optional when initialized, init optional when typed)
    Var { name: String, ty: Option<TypeExpr>, init: Option<Expr> },
    /// `x = e;`
    Assign { name: String, value: Expr },
    /// `this.{f=e, ...};` — bulk update of the receiver in a ref method.
    ThisUpdate { updates: Vec<(String, Expr)> },
    If { arms: Vec<IfArm>, else_block: Option<Block> },
    Match { scrutinee: Expr, arms: Vec<MatchArm> },
    Return { value: Expr },
    Assert { level: Option<CheckLevelName>, cond: Expr },
    /// `x@F;` statement narrowing; `early` distinguishes `x@@F;`.
    Narrow { name: String, op: FlowOp, early: bool },
    /// `let x = ref recv.m(args);` or bare `ref recv.m(args);`
    RefCall { bind: Option<(String, Option<TypeExpr>, bool)>, receiver: String, method: String, args: Vec<Expr>, recursive: bool },
    /// Expression evaluated for its checks; only useful diagnostically.
    Expr { expr: Expr },
}

#[derive(Clone, Debug)]
pub struct IfArm {
    pub pos: SourcePos,
    pub cond: IfCond,
    pub block: Block,
}

#[derive(Clone, Debug)]
pub enum IfCond {
    Plain(Expr),
    /// `if <flow-op> (subject)` — binds `$` in both branches.
    Flow { op: FlowOp, subject: Expr },
}

#[derive(Clone, Debug)]
pub struct MatchArm {
    pub pos: SourcePos,
    pub pat: MatchPat,
    pub body: Block,
}

#[derive(Clone, Debug)]
pub enum MatchPat {
    Type(String),
    Literal(Expr),
    Wildcard,
}

/// A flow-typing operator from the test/cast family.
#[derive(Clone, Debug)]
pub struct FlowOp {
    pub pos: SourcePos,
    pub negated: bool,
    pub kind: FlowOpKind,
}

#[derive(Clone, Debug)]
pub enum FlowOpKind {
    /// `none`, `some`, `ok`, `err`, `result`
    Special(FlowSpecial),
    /// `<T>`
    Type(TypeExpr),
    /// `[literal]`
    Literal(Box<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowSpecial {
    None,
    Some,
    Ok,
    Err,
    Result,
}

impl FlowSpecial {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowSpecial::None => "none",
            FlowSpecial::Some => "some",
            FlowSpecial::Ok => "ok",
            FlowSpecial::Err => "err",
            FlowSpecial::Result => "result",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Expr {
    pub id: NodeId,
    pub pos: SourcePos,
    pub kind: ExprKind,
}

#[derive(Clone, Debug)]
pub enum ExprKind {
    NoneLit,
    BoolLit(bool),
    NumLit { text: String, kind: NumKind },
    StrLit(String),
    /// `"40502"Zipcode` or `10_Celsius`; payload is the raw literal text.
    TypedLit { text: String, is_string: bool, ty_name: String },
    Ident(String),
    This,
    /// `$` inside flow-if branches and match arms.
    Binder,
    /// `$name` inside bulk updates ( `$f` ) and postconditions ( `$return` ).
    NamedBinder(String),
    /// `[e1, e2]`
    Tuple(Vec<Expr>),
    /// `{p1=e1, p2=e2}`
    Record(Vec<(String, Expr)>),
    /// `List<T>{...}` (type args optional when inferable)
    ListLit { targs: Vec<TypeExpr>, items: Vec<Expr> },
    /// `Map<K,V>{k => v, ...}`
    MapLit { targs: Vec<TypeExpr>, items: Vec<(Expr, Expr)> },
    /// `Name{e1, e2}` — positional entity construction.
    Construct { name: String, targs: Vec<TypeExpr>, args: Vec<Expr> },
    /// `e.{f=e1, ...}` expression form.
    BulkUpdate { target: Box<Expr>, updates: Vec<(String, Expr)> },
    /// `f(args)` / `f[recursive](args)`
    Call { name: String, args: Vec<Expr>, recursive: bool },
    /// `Type::name` constant access or `Type::name(args)` static call.
    StaticAccess { owner: String, name: String, targs: Vec<TypeExpr>, args: Option<Vec<Expr>>, recursive: bool },
    /// `e.name(args)` / `e.name<T>(args)` / `e.name[recursive](args)`
    MethodCall { receiver: Box<Expr>, name: String, targs: Vec<TypeExpr>, args: Vec<Expr>, recursive: bool },
    /// `e.name`
    FieldAccess { receiver: Box<Expr>, name: String },
    /// `e.0`
    TupleIndex { receiver: Box<Expr>, index: u32 },
    /// `fn(x, y) => e` or `pred(x, y) => e`
    Lambda { is_pred: bool, params: Vec<String>, body: Box<Expr> },
    Unary { op: UnaryOp, operand: Box<Expr> },
    Binary { op: BinaryOp, lhs: Box<Expr>, rhs: Box<Expr> },
    /// `e ? F`
    FlowTest { subject: Box<Expr>, op: FlowOp },
    /// `e @ F`
    FlowCast { subject: Box<Expr>, op: FlowOp },
    /// `e ?? F` / `e @@ F` — early-return ops.
    EarlyFlow { subject: Box<Expr>, op: FlowOp, is_cast: bool },
    /// `if c then a else b`
    IfExpr { cond: Box<Expr>, then: Box<Expr>, els: Box<Expr> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Implies,
}

impl BinaryOp {
    pub fn glyph(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Eq => "==",
            BinaryOp::Neq => "!==",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::And => "&&",
            BinaryOp::Or => "||",
            BinaryOp::Implies => "==>",
        }
    }
}

#[derive(Clone, Debug)]
pub struct TypeExpr {
    pub pos: SourcePos,
    pub kind: TypeExprKind,
}

#[derive(Clone, Debug)]
pub enum TypeExprKind {
    /// Primitive or nominal name, optionally with type arguments:
    /// `Int`, `ITree`, `List<Int>`, `Map<K,V>`, `StringOf<V>`, `Result<T,E>`,
    /// `Ok<T>`, `Err<E>`.
    Named { name: String, targs: Vec<TypeExpr> },
    /// `[T1, T2]`
    Tuple(Vec<TypeExpr>),
    /// `{p1: T1, p2: T2}`
    Record(Vec<(String, TypeExpr)>),
    /// `A | B`. The postfix sugar `T?` is normalized to `T | None` while
    /// parsing, so an option type never appears as a distinct node.
    Union(Vec<TypeExpr>),
}
