//! Reference interpreter over the typed surface-level representation.
//!
//! Executes matches, flow-ifs, narrows, early returns, bulk updates, ref
//! calls, and lambdas directly, without lowering. The flat-IR machine must
//! agree with this interpreter on every program; differential tests hold
//! the two together.
//!
//! Every run is total: it either produces a value or stops at the first
//! failing check or implicit operation. A call-depth budget turns runaway
//! recursion into `recursion-budget-exceeded`.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::eval::fits::value_fits;
use crate::eval::functors::{self, zero_of_type, ErrSite};
use crate::eval::num::{self, ArithOp};
use crate::eval::value::{print_value, value_eq, ErrorCode, Outcome, RuntimeError, Value};
use crate::hir::{
    HBinary, HBlock, HBody, HCond, HExpr, HExprKind, HFlowOp, HFunction, HPat, HProgram, HStmt,
    HStmtKind, HTest, HUnary, MethodTarget,
};
use crate::rx;
use crate::types::{CheckMode, TypeSig};

/// Maximum call depth before a run is cut off.
pub const RECURSION_BUDGET: usize = 10_000;

/// Why evaluation of an expression stopped early: a runtime error, or an
/// early return (`??`/`@@`) unwinding to the enclosing function.
enum Interrupt {
    Fail(RuntimeError),
    Early(Value),
}

type XRes<T> = Result<T, Interrupt>;

enum Flow {
    Normal,
    Return(Value),
}

/// Locals of one call, as a stack of block scopes, plus the `$field`
/// snapshots of any in-flight bulk updates.
struct Env {
    scopes: Vec<Vec<(String, Value)>>,
    old_frames: Vec<Vec<(String, Value)>>,
}

impl Env {
    fn new() -> Env {
        Env { scopes: Vec::new(), old_frames: Vec::new() }
    }

    fn push_scope(&mut self) {
        self.scopes.push(Vec::new());
    }

    fn pop_scope(&mut self) {
        self.scopes.pop();
    }

    fn declare(&mut self, name: &str, v: Value) {
        self.scopes.last_mut().expect("open scope").push((name.to_string(), v));
    }

    fn lookup(&self, name: &str) -> &Value {
        for scope in self.scopes.iter().rev() {
            if let Some((_, v)) = scope.iter().rev().find(|(n, _)| n == name) {
                return v;
            }
        }
        unreachable!("unresolved local `{name}`")
    }

    fn assign(&mut self, name: &str, v: Value) {
        for scope in self.scopes.iter_mut().rev() {
            if let Some((_, slot)) = scope.iter_mut().rev().find(|(n, _)| n == name) {
                *slot = v;
                return;
            }
        }
        unreachable!("unresolved local `{name}`")
    }

    fn old_field(&self, name: &str) -> &Value {
        let frame = self.old_frames.last().expect("open update frame");
        &frame.iter().find(|(n, _)| n == name).expect("known field").1
    }
}

pub struct Interp<'p> {
    program: &'p HProgram,
    mode: CheckMode,
    depth: usize,
    budget: usize,
    /// Compiled string validators, built on first use.
    validators: BTreeMap<String, rx::Regex>,
}

fn truth(v: &Value) -> bool {
    match v {
        Value::Bool(b) => *b,
        _ => unreachable!("typechecked boolean"),
    }
}

impl<'p> Interp<'p> {
    pub fn new(program: &'p HProgram, mode: CheckMode) -> Interp<'p> {
        Self::with_budget(program, mode, RECURSION_BUDGET)
    }

    /// Like [`Interp::new`] but with a custom call-depth budget. Hosts that
    /// run untrusted candidates on small stacks pass something tighter than
    /// the default.
    pub fn with_budget(program: &'p HProgram, mode: CheckMode, budget: usize) -> Interp<'p> {
        Interp { program, mode, depth: 0, budget, validators: BTreeMap::new() }
    }

    /// Runs a function by qualified name. Arguments must already fit the
    /// parameter types.
    pub fn call_function(&mut self, name: &str, args: Vec<Value>) -> Outcome<Value> {
        self.invoke(name, args).map(|(v, _)| v)
    }

    /// Evaluates a closed expression (an example's argument or expected
    /// value).
    pub fn eval_closed(&mut self, e: &HExpr) -> Outcome<Value> {
        let mut env = Env::new();
        env.push_scope();
        match self.eval_expr(e, &mut env, "<example>") {
            Ok(v) => Ok(v),
            Err(Interrupt::Fail(err)) => Err(err),
            Err(Interrupt::Early(_)) => unreachable!("early return in a closed expression"),
        }
    }

    /// Re-runs the enabled membership invariants of `v`'s entity, as
    /// construction does; used when admitting external data.
    pub fn check_invariants(&mut self, v: &Value, function: &str) -> Outcome<()> {
        let Value::Entity { name, .. } = v else {
            return Ok(());
        };
        self.run_checks(&name.clone(), v, function, false)
    }

    /// Runs the entity's `validate` checks (ingestion boundary only).
    pub fn check_validates(&mut self, v: &Value, function: &str) -> Outcome<()> {
        let Value::Entity { name, .. } = v else {
            return Ok(());
        };
        self.run_checks(&name.clone(), v, function, true)
    }

    // ----- calls -----

    fn invoke(&mut self, fname: &str, args: Vec<Value>) -> Outcome<(Value, Option<Value>)> {
        let f = self
            .program
            .functions
            .get(fname)
            .unwrap_or_else(|| unreachable!("unresolved function `{fname}`"));
        if self.depth >= self.budget {
            return Err(RuntimeError::new(
                ErrorCode::RecursionBudgetExceeded,
                fname,
                f.pos.clone(),
                format!("call depth exceeded {}", self.budget),
            ));
        }
        self.depth += 1;
        let r = self.invoke_inner(fname, f, args);
        self.depth -= 1;
        r
    }

    fn invoke_inner(
        &mut self,
        fname: &str,
        f: &'p HFunction,
        args: Vec<Value>,
    ) -> Outcome<(Value, Option<Value>)> {
        let mut env = Env::new();
        env.push_scope();
        for ((pname, _), v) in f.params.iter().zip(args) {
            env.declare(pname, v);
        }

        for clause in &f.requires {
            if !self.mode.enables(clause.level) {
                continue;
            }
            let ok = match self.eval_expr(&clause.cond, &mut env, fname) {
                Ok(v) => v,
                Err(Interrupt::Fail(e)) => return Err(e),
                Err(Interrupt::Early(_)) => unreachable!("early return in a clause"),
            };
            if !truth(&ok) {
                return Err(RuntimeError::new(
                    ErrorCode::PreconditionFail,
                    fname,
                    clause.pos.clone(),
                    format!("requires clause of `{fname}` violated"),
                ));
            }
        }

        let body = match &f.body {
            HBody::Block(b) => b,
            HBody::Defer => unreachable!("deferred body reached at runtime"),
        };
        let result = match self.exec_block(body, &mut env, fname, None) {
            Ok(Flow::Return(v)) => v,
            Ok(Flow::Normal) => Value::None,
            Err(Interrupt::Early(v)) => v,
            Err(Interrupt::Fail(e)) => return Err(e),
        };

        let is_ref = matches!(f.kind, crate::hir::FnKind::Method { is_ref: true, .. });
        let final_this = is_ref.then(|| env.lookup("this").clone());

        env.push_scope();
        env.declare("__ret", result.clone());
        for clause in &f.ensures {
            if !self.mode.enables(clause.level) {
                continue;
            }
            let ok = match self.eval_expr(&clause.cond, &mut env, fname) {
                Ok(v) => v,
                Err(Interrupt::Fail(e)) => return Err(e),
                Err(Interrupt::Early(_)) => unreachable!("early return in a clause"),
            };
            if !truth(&ok) {
                return Err(RuntimeError::new(
                    ErrorCode::PostconditionFail,
                    fname,
                    clause.pos.clone(),
                    format!("ensures clause of `{fname}` violated"),
                ));
            }
        }

        Ok((result, final_this))
    }

    /// Most-derived body for `method` on the runtime entity `entity`.
    fn dispatch(&self, entity: &str, method: &str) -> String {
        if let Some(info) = self.program.universe.entities.get(entity) {
            for owner in info.lineage.iter().rev() {
                let cand = format!("{owner}::{method}");
                if self.program.functions.contains_key(&cand) {
                    return cand;
                }
            }
        }
        unreachable!("unresolved method `{method}` on `{entity}`")
    }

    // ----- entity membership checks -----

    fn run_checks(
        &mut self,
        entity: &str,
        v: &Value,
        function: &str,
        validates: bool,
    ) -> Outcome<()> {
        let table = if validates { &self.program.validates } else { &self.program.invariants };
        let Some(checks) = table.get(entity) else {
            return Ok(());
        };
        let (code, what) = if validates {
            (ErrorCode::ValidateFail, "validate")
        } else {
            (ErrorCode::InvariantFail, "invariant")
        };
        for c in checks.clone() {
            if !self.mode.enables(c.level) {
                continue;
            }
            let (ok, _) = self.invoke(&c.func, alloc::vec![v.clone()])?;
            if !truth(&ok) {
                return Err(RuntimeError::new(
                    code,
                    function,
                    c.pos.clone(),
                    format!("{what} on `{}` violated by a `{entity}` value", c.owner),
                ));
            }
        }
        Ok(())
    }

    fn construct_checked(
        &mut self,
        entity: &str,
        fields: Vec<Value>,
        function: &str,
    ) -> Outcome<Value> {
        let v = Value::Entity { name: entity.to_string(), fields };
        self.run_checks(entity, &v, function, false)?;
        Ok(v)
    }

    // ----- statements -----

    fn exec_block(
        &mut self,
        b: &HBlock,
        env: &mut Env,
        fname: &str,
        bind: Option<(&str, Value)>,
    ) -> XRes<Flow> {
        env.push_scope();
        if let Some((name, v)) = bind {
            env.declare(name, v);
        }
        let mut flow = Flow::Normal;
        for s in &b.stmts {
            match self.exec_stmt(s, env, fname) {
                Ok(Flow::Normal) => {}
                Ok(Flow::Return(v)) => {
                    flow = Flow::Return(v);
                    break;
                }
                Err(i) => {
                    env.pop_scope();
                    return Err(i);
                }
            }
        }
        env.pop_scope();
        Ok(flow)
    }

    fn exec_stmt(&mut self, s: &HStmt, env: &mut Env, fname: &str) -> XRes<Flow> {
        match &s.kind {
            HStmtKind::Let { name, init, .. } => {
                let v = self.eval_expr(init, env, fname)?;
                env.declare(name, v);
                Ok(Flow::Normal)
            }
            HStmtKind::Declare { name, .. } => {
                // Reads before the first assignment were rejected
                // statically; the placeholder is never observed.
                env.declare(name, Value::None);
                Ok(Flow::Normal)
            }
            HStmtKind::Assign { name, value } => {
                let v = self.eval_expr(value, env, fname)?;
                env.assign(name, v);
                Ok(Flow::Normal)
            }
            HStmtKind::ThisUpdate { updates } => {
                let recv = env.lookup("this").clone();
                let updated = self.apply_updates(recv, updates, env, fname)?;
                env.assign("this", updated);
                Ok(Flow::Normal)
            }
            HStmtKind::If { arms, else_block } => {
                // The else of a flow-if sees the last arm's binder at the
                // fail-narrowed subject.
                let mut pending: Option<(&str, Value)> = None;
                for arm in arms {
                    match &arm.cond {
                        HCond::Plain(c) => {
                            pending = None;
                            if truth(&self.eval_expr(c, env, fname)?) {
                                return self.exec_block(&arm.body, env, fname, None);
                            }
                        }
                        HCond::Flow { subject, op, binder } => {
                            let v = self.eval_expr(subject, env, fname)?;
                            let pass = self.test_passes(&v, op);
                            pending = Some((binder, v.clone()));
                            if pass {
                                return self.exec_block(&arm.body, env, fname, Some((binder, v)));
                            }
                        }
                    }
                }
                match else_block {
                    Some(b) => self.exec_block(b, env, fname, pending.take()),
                    None => Ok(Flow::Normal),
                }
            }
            HStmtKind::Match { subject, binder, arms } => {
                let v = self.eval_expr(subject, env, fname)?;
                for arm in arms {
                    let hit = match &arm.pat {
                        HPat::Type(t) => value_fits(&self.program.universe, &v, t),
                        HPat::Literal(lit) => value_eq(&v, lit),
                        HPat::Wildcard => true,
                    };
                    if hit {
                        return self.exec_block(&arm.body, env, fname, Some((binder, v)));
                    }
                }
                // Exhaustiveness was proven statically over the subject's
                // type, and the subject's value inhabits that type.
                unreachable!("match fell through")
            }
            HStmtKind::Return { value } => {
                let v = self.eval_expr(value, env, fname)?;
                Ok(Flow::Return(v))
            }
            HStmtKind::Assert { level, cond } => {
                if self.mode.enables(*level) && !truth(&self.eval_expr(cond, env, fname)?) {
                    return Err(Interrupt::Fail(RuntimeError::new(
                        ErrorCode::AssertFail,
                        fname,
                        s.pos.clone(),
                        "assert violated".to_string(),
                    )));
                }
                Ok(Flow::Normal)
            }
            HStmtKind::Narrow { name, op, early } => {
                let v = env.lookup(name).clone();
                if self.test_passes(&v, op) {
                    Ok(Flow::Normal)
                } else if *early {
                    Err(Interrupt::Early(v))
                } else {
                    Err(Interrupt::Fail(self.cast_fail(&v, op, fname)))
                }
            }
            HStmtKind::RefCall { bind, receiver, method, args, .. } => {
                let recv = env.lookup(receiver).clone();
                let Value::Entity { name: ename, .. } = &recv else {
                    unreachable!("ref receiver is an entity")
                };
                let target = self.dispatch(&ename.clone(), method);
                let mut argv = Vec::with_capacity(args.len() + 1);
                argv.push(recv);
                for a in args {
                    argv.push(self.eval_expr(a, env, fname)?);
                }
                let (result, new_this) =
                    self.invoke(&target, argv).map_err(Interrupt::Fail)?;
                env.assign(receiver, new_this.expect("ref method finishes with a receiver"));
                if let Some(b) = bind {
                    if b.fresh {
                        env.declare(&b.name, result);
                    } else {
                        env.assign(&b.name, result);
                    }
                }
                Ok(Flow::Normal)
            }
            HStmtKind::Expr(e) => {
                self.eval_expr(e, env, fname)?;
                Ok(Flow::Normal)
            }
        }
    }

    // ----- expressions -----

    fn eval_expr(&mut self, e: &HExpr, env: &mut Env, fname: &str) -> XRes<Value> {
        match &e.kind {
            HExprKind::Const(v) => Ok(v.clone()),
            HExprKind::Var(name) => Ok(env.lookup(name).clone()),
            HExprKind::OldField(name) => Ok(env.old_field(name).clone()),
            HExprKind::Tuple(items) => {
                let mut vs = Vec::with_capacity(items.len());
                for item in items {
                    vs.push(self.eval_expr(item, env, fname)?);
                }
                Ok(Value::Tuple(vs))
            }
            HExprKind::RecordLit(props) => {
                let mut vs = Vec::with_capacity(props.len());
                for (n, p) in props {
                    vs.push((n.clone(), self.eval_expr(p, env, fname)?));
                }
                Ok(Value::Record(vs))
            }
            HExprKind::ListLit(items) => {
                let mut vs = Vec::with_capacity(items.len());
                for item in items {
                    vs.push(self.eval_expr(item, env, fname)?);
                }
                Ok(Value::List(vs))
            }
            HExprKind::MapLit(pairs) => {
                let mut vs = Vec::with_capacity(pairs.len());
                for (k, v) in pairs {
                    let kv = self.eval_expr(k, env, fname)?;
                    let vv = self.eval_expr(v, env, fname)?;
                    vs.push((kv, vv));
                }
                Value::map_from_pairs(vs).map_err(|dup| {
                    Interrupt::Fail(RuntimeError::new(
                        ErrorCode::InvariantFail,
                        fname,
                        e.pos.clone(),
                        format!("duplicate map key {}", print_value(&dup)),
                    ))
                })
            }
            HExprKind::Construct { entity, args } => {
                let mut vs = Vec::with_capacity(args.len());
                for a in args {
                    vs.push(self.eval_expr(a, env, fname)?);
                }
                self.construct_checked(entity, vs, fname).map_err(Interrupt::Fail)
            }
            HExprKind::Inject { value } => {
                let inner = self.eval_expr(value, env, fname)?;
                self.eval_inject(&e.ty, inner, fname, e).map_err(Interrupt::Fail)
            }
            HExprKind::OkWrap(inner) => {
                Ok(Value::Ok(Box::new(self.eval_expr(inner, env, fname)?)))
            }
            HExprKind::ErrWrap(inner) => {
                Ok(Value::Err(Box::new(self.eval_expr(inner, env, fname)?)))
            }
            HExprKind::Call { func, args } => {
                let mut vs = Vec::with_capacity(args.len());
                for a in args {
                    vs.push(self.eval_expr(a, env, fname)?);
                }
                if func == "String::concat" {
                    let mut out = String::new();
                    for v in &vs {
                        match v {
                            Value::Str(s) => out.push_str(s),
                            _ => unreachable!("typechecked concat operand"),
                        }
                    }
                    return Ok(Value::Str(out));
                }
                self.invoke(func, vs).map(|(v, _)| v).map_err(Interrupt::Fail)
            }
            HExprKind::MethodCall { receiver, target, method, args } => {
                let recv = self.eval_expr(receiver, env, fname)?;
                let callee = match target {
                    MethodTarget::Static { owner } => format!("{owner}::{method}"),
                    MethodTarget::Dynamic { .. } => {
                        let Value::Entity { name, .. } = &recv else {
                            unreachable!("dispatch receiver is an entity")
                        };
                        self.dispatch(&name.clone(), method)
                    }
                };
                let mut vs = Vec::with_capacity(args.len() + 1);
                vs.push(recv);
                for a in args {
                    vs.push(self.eval_expr(a, env, fname)?);
                }
                self.invoke(&callee, vs).map(|(v, _)| v).map_err(Interrupt::Fail)
            }
            HExprKind::FunctorCall { container, name, args } => {
                self.eval_functor(e, container, name, args, env, fname)
            }
            HExprKind::Lambda { .. } => unreachable!("lambda outside a catalog operation"),
            HExprKind::FieldAccess { receiver, field } => {
                let recv = self.eval_expr(receiver, env, fname)?;
                Ok(self.read_field(recv, field))
            }
            HExprKind::TupleIndex { receiver, index } => {
                let recv = self.eval_expr(receiver, env, fname)?;
                match recv {
                    Value::Tuple(items) => Ok(items[*index as usize].clone()),
                    _ => unreachable!("typechecked tuple access"),
                }
            }
            HExprKind::BulkUpdate { receiver, updates } => {
                let recv = self.eval_expr(receiver, env, fname)?;
                self.apply_updates(recv, updates, env, fname)
            }
            HExprKind::Unary { op, operand } => {
                let v = self.eval_expr(operand, env, fname)?;
                match op {
                    HUnary::Not => Ok(Value::Bool(!truth(&v))),
                    HUnary::Neg => num::negate(&v).map_err(|code| {
                        Interrupt::Fail(RuntimeError::new(
                            code,
                            fname,
                            e.pos.clone(),
                            "negation overflowed".to_string(),
                        ))
                    }),
                }
            }
            HExprKind::Binary { op, lhs, rhs } => self.eval_binary(e, *op, lhs, rhs, env, fname),
            HExprKind::FlowTest { subject, op } => {
                let v = self.eval_expr(subject, env, fname)?;
                Ok(Value::Bool(self.test_passes(&v, op)))
            }
            HExprKind::FlowCast { subject, op } => {
                let v = self.eval_expr(subject, env, fname)?;
                if self.test_passes(&v, op) {
                    Ok(v)
                } else {
                    Err(Interrupt::Fail(self.cast_fail(&v, op, fname)))
                }
            }
            HExprKind::EarlyFlow { subject, op } => {
                let v = self.eval_expr(subject, env, fname)?;
                if self.test_passes(&v, op) {
                    Ok(v)
                } else {
                    Err(Interrupt::Early(v))
                }
            }
            HExprKind::IfExpr { cond, then_branch, else_branch } => {
                if truth(&self.eval_expr(cond, env, fname)?) {
                    self.eval_expr(then_branch, env, fname)
                } else {
                    self.eval_expr(else_branch, env, fname)
                }
            }
        }
    }

    fn eval_binary(
        &mut self,
        e: &HExpr,
        op: HBinary,
        lhs: &HExpr,
        rhs: &HExpr,
        env: &mut Env,
        fname: &str,
    ) -> XRes<Value> {
        // Logical operators short-circuit; everything else is strict.
        match op {
            HBinary::And => {
                let l = self.eval_expr(lhs, env, fname)?;
                if !truth(&l) {
                    return Ok(Value::Bool(false));
                }
                return self.eval_expr(rhs, env, fname);
            }
            HBinary::Or => {
                let l = self.eval_expr(lhs, env, fname)?;
                if truth(&l) {
                    return Ok(Value::Bool(true));
                }
                return self.eval_expr(rhs, env, fname);
            }
            HBinary::Implies => {
                let l = self.eval_expr(lhs, env, fname)?;
                if !truth(&l) {
                    return Ok(Value::Bool(true));
                }
                return self.eval_expr(rhs, env, fname);
            }
            _ => {}
        }
        let l = self.eval_expr(lhs, env, fname)?;
        let r = self.eval_expr(rhs, env, fname)?;
        match op {
            HBinary::Add | HBinary::Sub | HBinary::Mul | HBinary::Div => {
                let aop = match op {
                    HBinary::Add => ArithOp::Add,
                    HBinary::Sub => ArithOp::Sub,
                    HBinary::Mul => ArithOp::Mul,
                    _ => ArithOp::Div,
                };
                num::arith(aop, &l, &r).map_err(|code| {
                    Interrupt::Fail(RuntimeError::new(
                        code,
                        fname,
                        e.pos.clone(),
                        "arithmetic failed".to_string(),
                    ))
                })
            }
            HBinary::Lt | HBinary::Le | HBinary::Gt | HBinary::Ge => {
                let ord = num::compare(&l, &r).expect("typechecked comparison");
                let b = match op {
                    HBinary::Lt => ord == core::cmp::Ordering::Less,
                    HBinary::Le => ord != core::cmp::Ordering::Greater,
                    HBinary::Gt => ord == core::cmp::Ordering::Greater,
                    _ => ord != core::cmp::Ordering::Less,
                };
                Ok(Value::Bool(b))
            }
            HBinary::Eq => Ok(Value::Bool(value_eq(&l, &r))),
            HBinary::Neq => Ok(Value::Bool(!value_eq(&l, &r))),
            HBinary::And | HBinary::Or | HBinary::Implies => unreachable!("handled above"),
        }
    }

    fn eval_functor(
        &mut self,
        e: &HExpr,
        container: &HExpr,
        name: &str,
        args: &[HExpr],
        env: &mut Env,
        fname: &str,
    ) -> XRes<Value> {
        let cv = self.eval_expr(container, env, fname)?;
        let pos = e.pos.clone();

        // Evaluate non-lambda arguments up front, left to right.
        let mut vals: Vec<Value> = Vec::new();
        let mut lambda: Option<&HExpr> = None;
        for a in args {
            if matches!(a.kind, HExprKind::Lambda { .. }) {
                lambda = Some(a);
            } else {
                vals.push(self.eval_expr(a, env, fname)?);
            }
        }

        // One callback serves every operation; it evaluates the lambda body
        // in the enclosing environment with the parameters bound.
        let run = |interp: &mut Interp<'p>,
                   env: &mut Env,
                   lam: &HExpr,
                   vs: &[Value]|
         -> Outcome<Value> {
            let HExprKind::Lambda { params, body, .. } = &lam.kind else {
                unreachable!("catalog lambda argument")
            };
            env.push_scope();
            for ((pname, _), v) in params.iter().zip(vs) {
                env.declare(pname, v.clone());
            }
            let r = interp.eval_expr(body, env, fname);
            env.pop_scope();
            match r {
                Ok(v) => Ok(v),
                Err(Interrupt::Fail(err)) => Err(err),
                Err(Interrupt::Early(_)) => unreachable!("early return in a lambda"),
            }
        };

        let site = ErrSite { function: fname, pos: &pos };
        let out = match &cv {
            Value::List(items) => match name {
                "size" => Ok(functors::list_size(items)),
                "get" => functors::list_get(&site, items, &vals[0]),
                "slice" => functors::list_slice(&site, items, &vals[0], &vals[1]),
                "concat" => match &vals[0] {
                    Value::List(other) => Ok(functors::list_concat(items, other)),
                    _ => unreachable!("typechecked concat argument"),
                },
                "pushBack" => Ok(functors::list_push_back(items, vals.remove(0))),
                "contains" => Ok(functors::list_contains(items, &vals[0])),
                "map" => {
                    let lam = lambda.expect("map lambda");
                    functors::list_map(items, &mut |vs| run(self, env, lam, vs))
                }
                "filter" => {
                    let lam = lambda.expect("filter lambda");
                    functors::list_filter(items, &mut |vs| run(self, env, lam, vs))
                }
                "has" => {
                    let lam = lambda.expect("has lambda");
                    functors::list_has(items, &mut |vs| run(self, env, lam, vs))
                }
                "find" => {
                    let lam = lambda.expect("find lambda");
                    functors::list_find(items, &mut |vs| run(self, env, lam, vs))
                }
                "count" => {
                    let lam = lambda.expect("count lambda");
                    functors::list_count(items, &mut |vs| run(self, env, lam, vs))
                }
                "allOf" => {
                    let lam = lambda.expect("allOf lambda");
                    functors::list_all_of(items, &mut |vs| run(self, env, lam, vs))
                }
                "unique" => {
                    let lam = lambda.expect("unique lambda");
                    functors::list_unique(items, &mut |vs| run(self, env, lam, vs))
                }
                "sum" => {
                    let zero = zero_of_type(&e.ty).expect("numeric sum");
                    functors::list_sum(&site, items, zero)
                }
                "sumOf" => {
                    let lam = lambda.expect("sumOf lambda");
                    let zero = zero_of_type(&e.ty).expect("numeric sum");
                    functors::list_sum_of(&site, items, &mut |vs| run(self, env, lam, vs), zero)
                }
                "reduce" => {
                    let lam = lambda.expect("reduce lambda");
                    let init = vals.remove(0);
                    functors::list_reduce(init, items, &mut |vs| run(self, env, lam, vs))
                }
                "maxArg" => {
                    let lam = lambda.expect("maxArg lambda");
                    functors::list_max_arg(&site, items, &mut |vs| run(self, env, lam, vs))
                }
                "max" => functors::list_max(&site, items),
                "zip" => match &vals[0] {
                    Value::List(other) => Ok(functors::list_zip(items, other)),
                    _ => unreachable!("typechecked zip argument"),
                },
                "join" => {
                    let lam = lambda.expect("join lambda");
                    match &vals[0] {
                        Value::List(other) => {
                            functors::list_join(items, other, &mut |vs| run(self, env, lam, vs))
                        }
                        _ => unreachable!("typechecked join argument"),
                    }
                }
                _ => unreachable!("unknown list operation `{name}`"),
            },
            Value::Map(pairs) => match name {
                "size" => Ok(functors::map_size(pairs)),
                "get" => functors::map_get(&site, pairs, &vals[0]),
                "has" => Ok(functors::map_has(pairs, &vals[0])),
                "map" => {
                    let lam = lambda.expect("map lambda");
                    functors::map_map(pairs, &mut |vs| run(self, env, lam, vs))
                }
                "filter" => {
                    let lam = lambda.expect("filter lambda");
                    functors::map_filter(pairs, &mut |vs| run(self, env, lam, vs))
                }
                _ => unreachable!("unknown map operation `{name}`"),
            },
            _ => unreachable!("typechecked container"),
        };
        out.map_err(Interrupt::Fail)
    }

    // ----- pieces -----

    fn read_field(&self, recv: Value, field: &str) -> Value {
        match recv {
            Value::Entity { name, fields } => {
                let info =
                    self.program.universe.entities.get(&name).expect("known entity");
                let idx = info
                    .ctor_fields
                    .iter()
                    .position(|f| f.name == field)
                    .expect("known field");
                fields.into_iter().nth(idx).expect("field present")
            }
            Value::Record(props) => {
                props.into_iter().find(|(n, _)| n == field).expect("known prop").1
            }
            Value::Typedecl { value, .. } if field == "value" => *value,
            Value::StringOf { value, .. } if field == "value" => Value::Str(value),
            Value::Ok(inner) | Value::Err(inner) if field == "value" => *inner,
            _ => unreachable!("typechecked field access"),
        }
    }

    fn apply_updates(
        &mut self,
        recv: Value,
        updates: &[(String, HExpr)],
        env: &mut Env,
        fname: &str,
    ) -> XRes<Value> {
        let Value::Entity { name, fields } = recv else {
            unreachable!("typechecked update receiver")
        };
        let info = self.program.universe.entities.get(&name).expect("known entity");
        let order: Vec<String> = info.ctor_fields.iter().map(|f| f.name.clone()).collect();

        let old: Vec<(String, Value)> =
            order.iter().cloned().zip(fields.iter().cloned()).collect();
        env.old_frames.push(old);
        let mut news: Vec<(usize, Value)> = Vec::with_capacity(updates.len());
        let mut failed = None;
        for (f, rhs) in updates {
            match self.eval_expr(rhs, env, fname) {
                Ok(v) => {
                    let idx = order.iter().position(|n| n == f).expect("known field");
                    news.push((idx, v));
                }
                Err(i) => {
                    failed = Some(i);
                    break;
                }
            }
        }
        env.old_frames.pop();
        if let Some(i) = failed {
            return Err(i);
        }

        let mut updated = fields;
        for (idx, v) in news {
            updated[idx] = v;
        }
        self.construct_checked(&name, updated, fname).map_err(Interrupt::Fail)
    }

    fn eval_inject(
        &mut self,
        ty: &TypeSig,
        inner: Value,
        fname: &str,
        e: &HExpr,
    ) -> Outcome<Value> {
        match ty {
            TypeSig::ASCIIString => {
                let Value::Str(s) = inner else { unreachable!("typechecked inject") };
                if s.is_ascii() {
                    Ok(Value::Ascii(s))
                } else {
                    Err(RuntimeError::new(
                        ErrorCode::RegexMismatch,
                        fname,
                        e.pos.clone(),
                        "string contains non-ASCII characters".to_string(),
                    ))
                }
            }
            TypeSig::StringOf(validator) => {
                let Value::Str(s) = inner else { unreachable!("typechecked inject") };
                self.validate_string(validator, s, fname, e)
            }
            TypeSig::Typedecl { name, base } => {
                let wrapped = match (&**base, inner) {
                    (TypeSig::StringOf(validator), Value::Str(s)) => {
                        self.validate_string(validator, s, fname, e)?
                    }
                    (_, v) => v,
                };
                Ok(Value::Typedecl { name: name.clone(), value: Box::new(wrapped) })
            }
            _ => unreachable!("inject target"),
        }
    }

    fn validate_string(
        &mut self,
        validator: &str,
        s: String,
        fname: &str,
        e: &HExpr,
    ) -> Outcome<Value> {
        if !self.validators.contains_key(validator) {
            let info = self
                .program
                .universe
                .validators
                .get(validator)
                .expect("known validator");
            let rx = rx::Regex::new(&info.pattern).expect("validator compiled at declaration");
            self.validators.insert(validator.to_string(), rx);
        }
        let rx = &self.validators[validator];
        if rx.matches(&s) {
            Ok(Value::StringOf { validator: validator.to_string(), value: s })
        } else {
            Err(RuntimeError::new(
                ErrorCode::RegexMismatch,
                fname,
                e.pos.clone(),
                format!("string does not match the `{validator}` validator"),
            ))
        }
    }

    fn test_passes(&self, v: &Value, op: &HFlowOp) -> bool {
        let raw = match &op.test {
            HTest::IsNone => matches!(v, Value::None),
            HTest::IsSome => !matches!(v, Value::None),
            HTest::IsOk => matches!(v, Value::Ok(_)),
            HTest::IsErr => matches!(v, Value::Err(_)),
            HTest::IsResult => matches!(v, Value::Ok(_) | Value::Err(_)),
            HTest::Type(t) => value_fits(&self.program.universe, v, t),
            HTest::Literal(lit) => value_eq(v, lit),
        };
        raw != op.negated
    }

    fn cast_fail(&self, v: &Value, op: &HFlowOp, fname: &str) -> RuntimeError {
        RuntimeError::new(
            ErrorCode::CastFail,
            fname,
            op.pos.clone(),
            format!("{} is not a `{}`", print_value(v), op.t_pass),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::frontend::{expand_adts, parse_program};
    use crate::hir::elaborate;

    fn compile(src: &str) -> HProgram {
        let parsed = parse_program(&[("test.lx".to_string(), src.to_string())]);
        assert!(!parsed.diags.has_errors(), "parse failed:\n{}", parsed.diags.render());
        let r = elaborate(&expand_adts(parsed.program.unwrap()));
        assert!(!r.diags.has_errors(), "elaboration failed:\n{}", r.diags.render());
        r.program.unwrap()
    }

    fn run_at(p: &HProgram, mode: CheckMode, f: &str, args: Vec<Value>) -> Outcome<Value> {
        Interp::new(p, mode).call_function(f, args)
    }

    fn run(p: &HProgram, f: &str, args: Vec<Value>) -> Outcome<Value> {
        run_at(p, CheckMode::Release, f, args)
    }

    fn expect_code(r: Outcome<Value>, code: ErrorCode) {
        match r {
            Err(e) => assert_eq!(e.code, code, "got {e}"),
            Ok(v) => panic!("expected {code}, got {}", print_value(&v)),
        }
    }

    const TREE: &str = r#"
datatype ITree using {
    size: Nat
} of
Nil {}
| Leaf {
    v: Int
}
| Node {
    v: Int,
    l: ITree,
    r: ITree
}
& {
    invariant this.size == ITree::sizeOf(this);

    recursive function sizeOf(t: ITree): Nat {
        match (t) {
            Nil => { return 0n; }
          | Leaf => { return 1n; }
          | Node => {
                return 1n + ITree::sizeOf[recursive]($.l) + ITree::sizeOf[recursive]($.r);
            }
        }
    }

    method isEmpty(): Bool {
        return this.size == 0n;
    }

    recursive method has(x: Int): Bool {
        match (this) {
            Nil => { return false; }
          | Leaf => { return $.v == x; }
          | Node => {
                if ($.v == x) { return true; }
                if (x < $.v) { return $.l.has[recursive](x); }
                return $.r.has[recursive](x);
            }
        }
    }
}

function build(): ITree {
    return Node{3n, 5i, Leaf{1n, 2i}, Leaf{1n, 9i}};
}

function check(x: Int): Bool {
    return build().has(x);
}

function empty(): Bool {
    return build().isEmpty();
}

function badNode(): ITree {
    return Node{5n, 1i, Nil{0n}, Nil{0n}};
}
"#;

    #[test]
    fn abs_with_contracts() {
        let p = compile(concat!(
            "function abs(x: Int): Int\n",
            "    ensures $return >= 0i;\n",
            "{\n",
            "    if (x < 0i) {\n",
            "        return -x;\n",
            "    }\n",
            "    return x;\n",
            "}\n"
        ));
        assert!(value_eq(&run(&p, "abs", vec![Value::Int(-5)]).unwrap(), &Value::Int(5)));
        assert!(value_eq(&run(&p, "abs", vec![Value::Int(0)]).unwrap(), &Value::Int(0)));
        expect_code(run(&p, "abs", vec![Value::Int(i64::MIN)]), ErrorCode::Overflow);
    }

    #[test]
    fn tree_search_and_dispatch() {
        let p = compile(TREE);
        assert!(truth(&run(&p, "check", vec![Value::Int(5)]).unwrap()));
        assert!(truth(&run(&p, "check", vec![Value::Int(2)]).unwrap()));
        assert!(truth(&run(&p, "check", vec![Value::Int(9)]).unwrap()));
        assert!(!truth(&run(&p, "check", vec![Value::Int(7)]).unwrap()));
        assert!(!truth(&run(&p, "empty", vec![]).unwrap()));
    }

    #[test]
    fn inconsistent_size_fails_the_invariant() {
        let p = compile(TREE);
        expect_code(run(&p, "badNode", vec![]), ErrorCode::InvariantFail);
    }

    #[test]
    fn early_flow_returns_the_fail_side() {
        let p = compile(concat!(
            "function half(x: Int | None): Int | None {\n",
            "    let y = x ?? !none;\n",
            "    return y / 2i;\n",
            "}\n"
        ));
        assert!(value_eq(&run(&p, "half", vec![Value::Int(8)]).unwrap(), &Value::Int(4)));
        assert!(value_eq(&run(&p, "half", vec![Value::None]).unwrap(), &Value::None));
    }

    #[test]
    fn narrow_statement_early_and_strict() {
        let p = compile(concat!(
            "function bump(x: Nat | Int): Nat | Int {\n",
            "    x @@ <Nat>;\n",
            "    return x + 1n;\n",
            "}\n",
            "function force(x: Nat | Int): Nat {\n",
            "    x@<Nat>;\n",
            "    return x;\n",
            "}\n"
        ));
        assert!(value_eq(&run(&p, "bump", vec![Value::Nat(5)]).unwrap(), &Value::Nat(6)));
        assert!(value_eq(&run(&p, "bump", vec![Value::Int(-3)]).unwrap(), &Value::Int(-3)));
        assert!(value_eq(&run(&p, "force", vec![Value::Nat(2)]).unwrap(), &Value::Nat(2)));
        expect_code(run(&p, "force", vec![Value::Int(2)]), ErrorCode::CastFail);
    }

    #[test]
    fn ref_calls_write_back() {
        let p = compile(concat!(
            "entity Counter {\n",
            "    c: Nat;\n",
            "    method ref next(): Nat {\n",
            "        let v = this.c;\n",
            "        this.{c = $c + 1n};\n",
            "        return v;\n",
            "    }\n",
            "}\n",
            "function f(): Nat {\n",
            "    var ctr = Counter{0n};\n",
            "    let a = ref ctr.next();\n",
            "    let b = ref ctr.next();\n",
            "    return a + b + ctr.c;\n",
            "}\n"
        ));
        assert!(value_eq(&run(&p, "f", vec![]).unwrap(), &Value::Nat(3)));
    }

    #[test]
    fn bulk_update_reads_old_fields() {
        let p = compile(concat!(
            "entity P {\n",
            "    a: Int,\n",
            "    b: Int\n",
            "}\n",
            "function swap(p: P): P {\n",
            "    return p.{a = $b, b = $a};\n",
            "}\n",
            "function go(): Int {\n",
            "    let p = swap(P{1i, 2i});\n",
            "    return p.a * 10i + p.b;\n",
            "}\n"
        ));
        assert!(value_eq(&run(&p, "go", vec![]).unwrap(), &Value::Int(21)));
    }

    #[test]
    fn match_literals_and_wildcard() {
        let p = compile(concat!(
            "function cat(x: Int): Nat {\n",
            "    match (x) {\n",
            "        0i => { return 0n; }\n",
            "      | 1i => { return 1n; }\n",
            "      | _ => { return 2n; }\n",
            "    }\n",
            "}\n"
        ));
        assert!(value_eq(&run(&p, "cat", vec![Value::Int(0)]).unwrap(), &Value::Nat(0)));
        assert!(value_eq(&run(&p, "cat", vec![Value::Int(1)]).unwrap(), &Value::Nat(1)));
        assert!(value_eq(&run(&p, "cat", vec![Value::Int(7)]).unwrap(), &Value::Nat(2)));
    }

    #[test]
    fn dynamic_dispatch_picks_the_runtime_entity() {
        let p = compile(concat!(
            "concept Shape {\n",
            "    abstract method area(): Nat;\n",
            "}\n",
            "entity Square provides Shape {\n",
            "    s: Nat;\n",
            "    override method area(): Nat {\n",
            "        return this.s * this.s;\n",
            "    }\n",
            "}\n",
            "entity Rect provides Shape {\n",
            "    w: Nat,\n",
            "    h: Nat;\n",
            "    override method area(): Nat {\n",
            "        return this.w * this.h;\n",
            "    }\n",
            "}\n",
            "function total(): Nat {\n",
            "    let shapes = List<Shape>{Square{3n}, Rect{2n, 5n}};\n",
            "    return shapes.sumOf<Nat>(fn(s) => s.area());\n",
            "}\n"
        ));
        assert!(value_eq(&run(&p, "total", vec![]).unwrap(), &Value::Nat(19)));
    }

    #[test]
    fn arithmetic_error_codes() {
        let p = compile(concat!(
            "function d(x: Int): Int {\n",
            "    return 10i / x;\n",
            "}\n",
            "function u(x: Nat): Nat {\n",
            "    return x - 1n;\n",
            "}\n",
            "function o(x: Int): Int {\n",
            "    return x + 1i;\n",
            "}\n"
        ));
        expect_code(run(&p, "d", vec![Value::Int(0)]), ErrorCode::DivZero);
        expect_code(run(&p, "u", vec![Value::Nat(0)]), ErrorCode::NatUnderflow);
        expect_code(run(&p, "o", vec![Value::Int(i64::MAX)]), ErrorCode::Overflow);
        assert!(value_eq(&run(&p, "d", vec![Value::Int(3)]).unwrap(), &Value::Int(3)));
    }

    #[test]
    fn runaway_recursion_hits_the_budget() {
        extern crate std;
        // Ten thousand interpreter frames need more than the default test
        // stack; hosts that drive deep programs give the evaluator a wide
        // thread just like this.
        let r = std::thread::Builder::new()
            .stack_size(1024 * 1024 * 1024)
            .spawn(|| {
                let p = compile(concat!(
                    "recursive function spin(x: Int): Int {\n",
                    "    return spin[recursive](x);\n",
                    "}\n"
                ));
                run(&p, "spin", vec![Value::Int(1)])
            })
            .unwrap()
            .join()
            .unwrap();
        expect_code(r, ErrorCode::RecursionBudgetExceeded);
    }

    #[test]
    fn runtime_string_validation() {
        let p = compile(concat!(
            "typedecl V = /ab+/;\n",
            "typedecl T = StringOf<V>;\n",
            "function mk(s: String): T {\n",
            "    return T{s};\n",
            "}\n"
        ));
        let ok = run(&p, "mk", vec![Value::Str("abb".to_string())]).unwrap();
        match &ok {
            Value::Typedecl { name, value } => {
                assert_eq!(name, "T");
                assert!(matches!(&**value, Value::StringOf { validator, value }
                    if validator == "V" && value == "abb"));
            }
            other => panic!("unexpected {other:?}"),
        }
        expect_code(
            run(&p, "mk", vec![Value::Str("xa".to_string())]),
            ErrorCode::RegexMismatch,
        );
    }

    #[test]
    fn contract_violations_have_their_own_codes() {
        let p = compile(concat!(
            "function f(x: Int): Int\n",
            "    requires x > 0i;\n",
            "{\n",
            "    return x;\n",
            "}\n",
            "function g(x: Int): Int\n",
            "    ensures $return > 0i;\n",
            "{\n",
            "    return x;\n",
            "}\n"
        ));
        expect_code(run(&p, "f", vec![Value::Int(0)]), ErrorCode::PreconditionFail);
        expect_code(run(&p, "g", vec![Value::Int(0)]), ErrorCode::PostconditionFail);
        assert!(value_eq(&run(&p, "f", vec![Value::Int(2)]).unwrap(), &Value::Int(2)));
    }

    #[test]
    fn check_levels_gate_asserts_and_invariants() {
        let p = compile(concat!(
            "entity E {\n",
            "    c: Nat;\n",
            "    invariant test this.c > 0n;\n",
            "}\n",
            "function mk(c: Nat): E {\n",
            "    return E{c};\n",
            "}\n",
            "function h(x: Int): Int {\n",
            "    assert spec x > 0i;\n",
            "    return x;\n",
            "}\n"
        ));
        // Release mode: the test-level invariant and spec-level assert are off.
        assert!(run_at(&p, CheckMode::Release, "mk", vec![Value::Nat(0)]).is_ok());
        assert!(run_at(&p, CheckMode::Release, "h", vec![Value::Int(0)]).is_ok());
        // Stricter modes enable them.
        expect_code(
            run_at(&p, CheckMode::Test, "mk", vec![Value::Nat(0)]),
            ErrorCode::InvariantFail,
        );
        expect_code(
            run_at(&p, CheckMode::Spec, "h", vec![Value::Int(0)]),
            ErrorCode::AssertFail,
        );
    }

    #[test]
    fn empty_sum_takes_the_element_kind_zero() {
        let p = compile(concat!(
            "function z(): Int {\n",
            "    return List<Int>{}.sum();\n",
            "}\n"
        ));
        assert!(value_eq(&run(&p, "z", vec![]).unwrap(), &Value::Int(0)));
    }

    #[test]
    fn map_literals_and_lookups() {
        let p = compile(concat!(
            "function get(k: Nat): Int {\n",
            "    let m = Map<Nat, Int>{1n => 10i, 2n => 20i};\n",
            "    return m.get(k);\n",
            "}\n",
            "function dup(k: Nat): Nat {\n",
            "    let m = Map<Nat, Int>{k => 1i, 2n => 2i};\n",
            "    return m.size();\n",
            "}\n"
        ));
        assert!(value_eq(&run(&p, "get", vec![Value::Nat(2)]).unwrap(), &Value::Int(20)));
        expect_code(run(&p, "get", vec![Value::Nat(3)]), ErrorCode::IndexOutOfBounds);
        assert!(value_eq(&run(&p, "dup", vec![Value::Nat(1)]).unwrap(), &Value::Nat(2)));
        expect_code(run(&p, "dup", vec![Value::Nat(2)]), ErrorCode::InvariantFail);
    }

    #[test]
    fn lambdas_read_enclosing_locals() {
        let p = compile(concat!(
            "function aboveLo(l: List<Int>, lo: Int): List<Int> {\n",
            "    return l.filter(pred(x) => x > lo);\n",
            "}\n"
        ));
        let l = Value::List(vec![Value::Int(1), Value::Int(5), Value::Int(3)]);
        let got = run(&p, "aboveLo", vec![l, Value::Int(2)]).unwrap();
        assert!(value_eq(&got, &Value::List(vec![Value::Int(5), Value::Int(3)])));
    }

    #[test]
    fn flow_if_else_sees_the_fail_binder() {
        let p = compile(concat!(
            "function f(x: Int | None): Int {\n",
            "    if none (x) {\n",
            "        return 0i;\n",
            "    } else {\n",
            "        return $ + 1i;\n",
            "    }\n",
            "}\n"
        ));
        assert!(value_eq(&run(&p, "f", vec![Value::None]).unwrap(), &Value::Int(0)));
        assert!(value_eq(&run(&p, "f", vec![Value::Int(4)]).unwrap(), &Value::Int(5)));
    }

    #[test]
    fn consts_and_string_concat() {
        let p = compile(concat!(
            "const greeting: String = \"hello\";\n",
            "function greet(name: String): String {\n",
            "    return String::concat(greeting, \" \", name);\n",
            "}\n"
        ));
        let got = run(&p, "greet", vec![Value::Str("world".to_string())]).unwrap();
        assert!(value_eq(&got, &Value::Str("hello world".to_string())));
    }

    #[test]
    fn results_wrap_and_unwrap() {
        let p = compile(concat!(
            "function safeDiv(a: Int, b: Int): Ok<Int> | Err<String> {\n",
            "    if (b == 0i) {\n",
            "        return Err<String>{\"division by zero\"};\n",
            "    }\n",
            "    return Ok<Int>{a / b};\n",
            "}\n",
            "function use(a: Int, b: Int): Int {\n",
            "    let r = safeDiv(a, b);\n",
            "    if ok (r) {\n",
            "        return $.value;\n",
            "    }\n",
            "    return 0i;\n",
            "}\n"
        ));
        assert!(value_eq(&run(&p, "use", vec![Value::Int(9), Value::Int(2)]).unwrap(), &Value::Int(4)));
        assert!(value_eq(&run(&p, "use", vec![Value::Int(9), Value::Int(0)]).unwrap(), &Value::Int(0)));
    }

    #[test]
    fn typedecl_arithmetic_stays_wrapped() {
        let p = compile(concat!(
            "typedecl Celsius = Float;\n",
            "function warmer(c: Celsius): Celsius {\n",
            "    return c + 10.0_Celsius;\n",
            "}\n"
        ));
        let c = Value::Typedecl { name: "Celsius".to_string(), value: Box::new(Value::Float(20.0)) };
        let got = run(&p, "warmer", vec![c]).unwrap();
        match &got {
            Value::Typedecl { name, value } => {
                assert_eq!(name, "Celsius");
                assert!(matches!(&**value, Value::Float(f) if *f == 30.0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
