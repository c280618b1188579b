//! Typechecking and name resolution: surface tree in, [`HProgram`] out.
//!
//! Inference is local only. Parameter and field types are always declared;
//! a function's result type may be omitted and is then inferred from its
//! return expressions, which must agree exactly. Inference across calls is
//! resolved on demand, so declaration order never matters, and a cycle of
//! undeclared results is an error rather than a fixpoint search.
//!
//! Flow tests are checked statically: a test that can never pass, or can
//! never fail, is a type error. Every variable read is checked for definite
//! assignment along all paths.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::diag::{Diagnostics, SourcePos};
use crate::eval::value::{decimal_from_text, Value};
use crate::frontend::ast::{self, DeclKind, ExprKind, FnBody, MemberKind, StmtKind};
use crate::frontend::token::NumKind;
use crate::hir::*;
use crate::types::{
    base_of, build_universe, canonical_record, canonical_union, is_key_type, is_subtype,
    resolve_type, CheckLevel, TypeSig, TypeUniverse,
};

pub struct ElabResult {
    pub program: Option<HProgram>,
    pub diags: Diagnostics,
}

/// Elaborates an expanded surface program (no `datatype` declarations).
pub fn elaborate(prog: &ast::SurfaceProgram) -> ElabResult {
    let universe = match build_universe(prog) {
        Ok(u) => u,
        Err(diags) => return ElabResult { program: None, diags },
    };
    let mut el = Elab {
        u: universe,
        prog,
        sigs: BTreeMap::new(),
        sources: BTreeMap::new(),
        done: BTreeMap::new(),
        state: BTreeMap::new(),
        edges: BTreeMap::new(),
        diags: Diagnostics::new(),
        next_binder: 0,
        entry_points: Vec::new(),
        order: Vec::new(),
    };
    el.register_all();
    if el.diags.has_errors() {
        return ElabResult { program: None, diags: el.diags };
    }
    for name in el.order.clone() {
        el.elaborate_fn(&name);
    }
    el.check_recursion();
    let program = if el.diags.has_errors() {
        None
    } else {
        let (invariants, validates) = el.check_tables();
        Some(HProgram {
            universe: el.u,
            functions: el.done,
            entry_points: el.entry_points,
            invariants,
            validates,
        })
    };
    ElabResult { program, diags: el.diags }
}

#[derive(Clone)]
struct FnSig {
    params: Vec<(String, TypeSig)>,
    result: Option<TypeSig>,
    kind: FnKind,
    pos: SourcePos,
}

#[derive(Clone, Copy)]
enum FnSource<'p> {
    Decl { func: &'p ast::FunctionDecl, this_ty: Option<&'p str> },
    ConstInit { init: &'p ast::Expr },
    /// Invariant or validate condition over `this`.
    Check { cond: &'p ast::Expr, owner: &'p str },
}

#[derive(Clone, Copy, PartialEq)]
enum Mark {
    Todo,
    InProgress,
    Done,
}

/// One call site's outgoing edges: several callees for dynamic dispatch.
struct CallEdge {
    callees: Vec<String>,
    /// `Some(tagged)` for sites that can carry `[recursive]`; `None` for
    /// implicit edges (entity construction running invariants).
    tag: Option<bool>,
    pos: SourcePos,
}

struct Elab<'p> {
    u: TypeUniverse,
    prog: &'p ast::SurfaceProgram,
    sigs: BTreeMap<String, FnSig>,
    sources: BTreeMap<String, FnSource<'p>>,
    done: BTreeMap<String, HFunction>,
    state: BTreeMap<String, Mark>,
    edges: BTreeMap<String, Vec<CallEdge>>,
    diags: Diagnostics,
    next_binder: u32,
    entry_points: Vec<String>,
    /// Deterministic elaboration order: declaration order.
    order: Vec<String>,
}

impl<'p> Elab<'p> {
    fn fresh_binder(&mut self) -> String {
        let n = self.next_binder;
        self.next_binder += 1;
        format!("__b{n}")
    }

    fn register(&mut self, name: String, sig: FnSig, source: FnSource<'p>) {
        if self.sigs.contains_key(&name) {
            self.diags.error(sig.pos.clone(), format!("`{name}` is declared more than once"));
            return;
        }
        if !name.contains("::")
            && !name.starts_with("__")
            && (self.u.type_info(&name).is_some()
                || self.u.typedecls.contains_key(&name)
                || self.u.validators.contains_key(&name))
        {
            self.diags.error(sig.pos.clone(), format!("`{name}` collides with a type name"));
            return;
        }
        self.sigs.insert(name.clone(), sig);
        self.sources.insert(name.clone(), source);
        self.state.insert(name.clone(), Mark::Todo);
        self.order.push(name);
    }

    fn register_all(&mut self) {
        for decl in &self.prog.decls {
            match &decl.kind {
                DeclKind::Function(func) => {
                    let Some(params) = self.resolve_params(func, None) else { continue };
                    let result = self.resolve_result(func);
                    self.entry_points.push(func.name.clone());
                    self.register(
                        func.name.clone(),
                        FnSig {
                            params,
                            result,
                            kind: FnKind::TopFn,
                            pos: func.pos.clone(),
                        },
                        FnSource::Decl { func, this_ty: None },
                    );
                }
                DeclKind::Const { name, ty, init } => {
                    let result = match ty {
                        Some(t) => match resolve_type(&self.u, t) {
                            Ok(sig) => Some(sig),
                            Err(d) => {
                                self.diags.push(d);
                                continue;
                            }
                        },
                        None => None,
                    };
                    self.register(
                        name.clone(),
                        FnSig {
                            params: Vec::new(),
                            result,
                            kind: FnKind::Const { owner: None },
                            pos: decl.pos.clone(),
                        },
                        FnSource::ConstInit { init },
                    );
                }
                DeclKind::Concept { name, members, .. } | DeclKind::Entity { name, members, .. } => {
                    self.register_members(name, members);
                }
                DeclKind::Validator { .. } | DeclKind::Typedecl { .. } => {}
                DeclKind::Datatype { .. } => unreachable!("expanded before elaboration"),
            }
        }
    }

    fn register_members(&mut self, owner: &'p str, members: &'p [ast::Member]) {
        let mut inv_idx = 0usize;
        let mut val_idx = 0usize;
        for m in members {
            match &m.kind {
                MemberKind::Method(md) => {
                    if md.is_abstract {
                        // No body to elaborate; dispatch uses the signature.
                        continue;
                    }
                    let func = &md.func;
                    let Some(params) = self.resolve_params(func, Some(owner)) else { continue };
                    let result = self.resolve_result(func);
                    self.register(
                        method_fn_name(owner, &func.name),
                        FnSig {
                            params,
                            result,
                            kind: FnKind::Method {
                                owner: owner.to_string(),
                                is_ref: md.is_ref,
                                dynamic: false,
                            },
                            pos: func.pos.clone(),
                        },
                        FnSource::Decl { func, this_ty: Some(owner) },
                    );
                }
                MemberKind::Function(func) => {
                    let Some(params) = self.resolve_params(func, None) else { continue };
                    let result = self.resolve_result(func);
                    self.register(
                        method_fn_name(owner, &func.name),
                        FnSig {
                            params,
                            result,
                            kind: FnKind::Static { owner: owner.to_string() },
                            pos: func.pos.clone(),
                        },
                        FnSource::Decl { func, this_ty: None },
                    );
                }
                MemberKind::Const { name, ty, init } => {
                    let result = match ty {
                        Some(t) => match resolve_type(&self.u, t) {
                            Ok(sig) => Some(sig),
                            Err(d) => {
                                self.diags.push(d);
                                continue;
                            }
                        },
                        None => None,
                    };
                    self.register(
                        method_fn_name(owner, name),
                        FnSig {
                            params: Vec::new(),
                            result,
                            kind: FnKind::Const { owner: Some(owner.to_string()) },
                            pos: m.pos.clone(),
                        },
                        FnSource::ConstInit { init },
                    );
                }
                MemberKind::Invariant { cond, .. } => {
                    let name = format!("__inv_{owner}_{inv_idx}");
                    inv_idx += 1;
                    self.register(
                        name,
                        FnSig {
                            params: alloc::vec![(
                                "this".to_string(),
                                TypeSig::Nominal(owner.to_string())
                            )],
                            result: Some(TypeSig::Bool),
                            kind: FnKind::Generated,
                            pos: m.pos.clone(),
                        },
                        FnSource::Check { cond, owner },
                    );
                }
                MemberKind::Validate { cond } => {
                    let name = format!("__validate_{owner}_{val_idx}");
                    val_idx += 1;
                    self.register(
                        name,
                        FnSig {
                            params: alloc::vec![(
                                "this".to_string(),
                                TypeSig::Nominal(owner.to_string())
                            )],
                            result: Some(TypeSig::Bool),
                            kind: FnKind::Generated,
                            pos: m.pos.clone(),
                        },
                        FnSource::Check { cond, owner },
                    );
                }
                MemberKind::Field { .. } => {}
            }
        }
    }

    fn resolve_params(
        &mut self,
        func: &ast::FunctionDecl,
        this_owner: Option<&str>,
    ) -> Option<Vec<(String, TypeSig)>> {
        let mut params = Vec::new();
        if let Some(owner) = this_owner {
            params.push(("this".to_string(), TypeSig::Nominal(owner.to_string())));
        }
        let mut ok = true;
        let mut seen = BTreeSet::new();
        for p in &func.params {
            if !seen.insert(p.name.clone()) {
                self.diags.error(p.pos.clone(), format!("duplicate parameter `{}`", p.name));
                ok = false;
                continue;
            }
            match resolve_type(&self.u, &p.ty) {
                Ok(sig) => params.push((p.name.clone(), sig)),
                Err(d) => {
                    self.diags.push(d);
                    ok = false;
                }
            }
        }
        ok.then_some(params)
    }

    fn resolve_result(&mut self, func: &ast::FunctionDecl) -> Option<TypeSig> {
        match &func.result {
            Some(t) => match resolve_type(&self.u, t) {
                Ok(sig) => Some(sig),
                Err(d) => {
                    self.diags.push(d);
                    None
                }
            },
            None => None,
        }
    }

    /// Result type of `name`, elaborating its body first when the result is
    /// inferred. Reports a diagnostic and fails on inference cycles.
    fn ensure_result(&mut self, name: &str, at: &SourcePos) -> Result<TypeSig, ()> {
        if let Some(sig) = self.sigs.get(name) {
            if let Some(r) = &sig.result {
                return Ok(r.clone());
            }
        } else {
            return Err(());
        }
        match self.state.get(name) {
            Some(Mark::InProgress) => {
                self.diags.error(
                    at.clone(),
                    format!("the return type of `{name}` cannot be inferred here; declare it"),
                );
                Err(())
            }
            Some(Mark::Todo) => {
                self.elaborate_fn(name);
                self.sigs.get(name).and_then(|s| s.result.clone()).ok_or(())
            }
            _ => self.sigs.get(name).and_then(|s| s.result.clone()).ok_or(()),
        }
    }

    fn elaborate_fn(&mut self, name: &str) {
        if self.state.get(name).copied() != Some(Mark::Todo) {
            return;
        }
        self.state.insert(name.to_string(), Mark::InProgress);
        let source = self.sources[name];
        let sig = self.sigs[name].clone();
        let hfunc = match source {
            FnSource::Decl { func, this_ty } => self.elab_decl_fn(name, func, this_ty, &sig),
            FnSource::ConstInit { init } => self.elab_const_fn(name, init, &sig),
            FnSource::Check { cond, owner } => self.elab_check_fn(name, cond, owner, &sig),
        };
        if let Some(f) = hfunc {
            if let Some(sig) = self.sigs.get_mut(name) {
                sig.result = Some(f.result.clone());
            }
            self.done.insert(name.to_string(), f);
        }
        self.state.insert(name.to_string(), Mark::Done);
    }

    fn elab_decl_fn(
        &mut self,
        name: &str,
        func: &'p ast::FunctionDecl,
        _this_ty: Option<&str>,
        sig: &FnSig,
    ) -> Option<HFunction> {
        let is_ref = matches!(sig.kind, FnKind::Method { is_ref: true, .. });
        let mut cx = BodyCx::new(self, sig.result.clone(), is_ref);
        cx.push_scope();
        for (pname, pty) in &sig.params {
            cx.declare(pname.clone(), pty.clone(), false, true, &func.pos);
        }

        let (body, result) = match &func.body {
            FnBody::Block(b) => {
                let (hb, diverges) = cx.elab_block(b);
                let result = cx.finish_result(&func.pos, diverges);
                (HBody::Block(hb), result)
            }
            FnBody::Defer => (HBody::Defer, sig.result.clone().unwrap_or(TypeSig::None)),
            FnBody::Absent => unreachable!("abstract methods are not elaborated"),
        };

        // Clauses see the final result type; `$return` is available in
        // ensures.
        let mut requires = Vec::new();
        for (level, cond) in &func.requires {
            cx.clause_mode = true;
            cx.ret_ty = None;
            if let Ok(c) = cx.elab_expr_expect(cond, &TypeSig::Bool) {
                requires.push(HClause {
                    level: level.map(CheckLevel::from).unwrap_or(CheckLevel::Release),
                    cond: c,
                    pos: cond.pos.clone(),
                });
            }
        }
        let mut ensures = Vec::new();
        for (level, cond) in &func.ensures {
            cx.clause_mode = true;
            cx.ret_ty = Some(result.clone());
            if let Ok(c) = cx.elab_expr_expect(cond, &TypeSig::Bool) {
                ensures.push(HClause {
                    level: level.map(CheckLevel::from).unwrap_or(CheckLevel::Release),
                    cond: c,
                    pos: cond.pos.clone(),
                });
            }
        }
        cx.clause_mode = false;
        cx.ret_ty = None;
        cx.pop_scope();
        let edges = core::mem::take(&mut cx.calls);

        // Examples are closed expressions checked against the signature.
        let mut examples = Vec::new();
        {
            let mut ex_cx = BodyCx::new(self, Some(result.clone()), false);
            ex_cx.push_scope();
            let value_params: Vec<&(String, TypeSig)> =
                sig.params.iter().filter(|(n, _)| n != "this").collect();
            let takes_this = sig.params.len() != value_params.len();
            for ex in &func.examples {
                if takes_this {
                    ex_cx.el.diags.error(
                        ex.pos.clone(),
                        "examples on methods are not supported; wrap the call in a function"
                            .to_string(),
                    );
                    continue;
                }
                if ex.args.len() != value_params.len() {
                    ex_cx.el.diags.error(
                        ex.pos.clone(),
                        format!(
                            "example has {} arguments, the function takes {}",
                            ex.args.len(),
                            value_params.len()
                        ),
                    );
                    continue;
                }
                let mut args = Vec::new();
                let mut ok = true;
                for (arg, (_, pty)) in ex.args.iter().zip(&value_params[..]) {
                    match ex_cx.elab_expr_expect(arg, pty) {
                        Ok(a) => args.push(a),
                        Err(()) => ok = false,
                    }
                }
                let expected = match ex_cx.elab_expr_expect(&ex.expected, &result) {
                    Ok(e) => e,
                    Err(()) => {
                        ok = false;
                        HExpr::new(TypeSig::None, ex.pos.clone(), HExprKind::Const(Value::None))
                    }
                };
                if ok {
                    examples.push(HExample { args, expected, pos: ex.pos.clone() });
                }
            }
            ex_cx.pop_scope();
            let mut ex_edges = core::mem::take(&mut ex_cx.calls);
            self.edges.entry(name.to_string()).or_default().append(&mut ex_edges);
        }
        self.edges.entry(name.to_string()).or_default().extend(edges);

        Some(HFunction {
            name: name.to_string(),
            pos: func.pos.clone(),
            kind: sig.kind.clone(),
            params: sig.params.clone(),
            result,
            requires,
            ensures,
            examples,
            recursive: func.recursive,
            body,
        })
    }

    fn elab_const_fn(&mut self, name: &str, init: &'p ast::Expr, sig: &FnSig) -> Option<HFunction> {
        let mut cx = BodyCx::new(self, sig.result.clone(), false);
        cx.push_scope();
        let value = match &sig.result {
            Some(r) => cx.elab_expr_expect(init, &r.clone()),
            None => cx.elab_expr(init),
        };
        cx.pop_scope();
        let edges = core::mem::take(&mut cx.calls);
        self.edges.entry(name.to_string()).or_default().extend(edges);
        let value = value.ok()?;
        let result = sig.result.clone().unwrap_or_else(|| value.ty.clone());
        let pos = init.pos.clone();
        Some(HFunction {
            name: name.to_string(),
            pos: pos.clone(),
            kind: sig.kind.clone(),
            params: Vec::new(),
            result,
            requires: Vec::new(),
            ensures: Vec::new(),
            examples: Vec::new(),
            recursive: false,
            body: HBody::Block(HBlock {
                stmts: alloc::vec![HStmt { pos, kind: HStmtKind::Return { value } }],
            }),
        })
    }

    fn elab_check_fn(
        &mut self,
        name: &str,
        cond: &'p ast::Expr,
        _owner: &str,
        sig: &FnSig,
    ) -> Option<HFunction> {
        let mut cx = BodyCx::new(self, Some(TypeSig::Bool), false);
        cx.clause_mode = true;
        cx.push_scope();
        for (pname, pty) in &sig.params {
            cx.declare(pname.clone(), pty.clone(), false, true, &sig.pos);
        }
        let value = cx.elab_expr_expect(cond, &TypeSig::Bool);
        cx.pop_scope();
        let edges = core::mem::take(&mut cx.calls);
        self.edges.entry(name.to_string()).or_default().extend(edges);
        let value = value.ok()?;
        let pos = cond.pos.clone();
        Some(HFunction {
            name: name.to_string(),
            pos: pos.clone(),
            kind: FnKind::Generated,
            params: sig.params.clone(),
            result: TypeSig::Bool,
            requires: Vec::new(),
            ensures: Vec::new(),
            examples: Vec::new(),
            recursive: false,
            body: HBody::Block(HBlock {
                stmts: alloc::vec![HStmt { pos, kind: HStmtKind::Return { value } }],
            }),
        })
    }

    /// Entity -> ordered invariant / validate check lists, lineage order.
    fn check_tables(&self) -> (BTreeMap<String, Vec<CheckRef>>, BTreeMap<String, Vec<CheckRef>>) {
        let mut decl_checks: BTreeMap<&str, (Vec<CheckRef>, Vec<CheckRef>)> = BTreeMap::new();
        for decl in &self.prog.decls {
            let (name, members) = match &decl.kind {
                DeclKind::Concept { name, members, .. }
                | DeclKind::Entity { name, members, .. } => (name.as_str(), members),
                _ => continue,
            };
            let entry = decl_checks.entry(name).or_default();
            for m in members {
                match &m.kind {
                    MemberKind::Invariant { level, .. } => {
                        entry.0.push(CheckRef {
                            func: format!("__inv_{name}_{}", entry.0.len()),
                            owner: name.to_string(),
                            level: level.map(CheckLevel::from).unwrap_or(CheckLevel::Release),
                            pos: m.pos.clone(),
                        });
                    }
                    MemberKind::Validate { .. } => {
                        entry.1.push(CheckRef {
                            func: format!("__validate_{name}_{}", entry.1.len()),
                            owner: name.to_string(),
                            level: CheckLevel::Release,
                            pos: m.pos.clone(),
                        });
                    }
                    _ => {}
                }
            }
        }
        let mut invariants = BTreeMap::new();
        let mut validates = BTreeMap::new();
        for info in self.u.entities.values() {
            let mut invs = Vec::new();
            let mut vals = Vec::new();
            for owner in &info.lineage {
                if let Some((i, v)) = decl_checks.get(owner.as_str()) {
                    invs.extend(i.iter().cloned());
                    vals.extend(v.iter().cloned());
                }
            }
            invariants.insert(info.name.clone(), invs);
            validates.insert(info.name.clone(), vals);
        }
        (invariants, validates)
    }

    // ----- recursion analysis -----

    /// Strongly connected components over the call graph, then tag checks:
    /// functions in a cycle must be declared `recursive`, call sites inside
    /// a cycle must carry `[recursive]`, and superfluous markings warn.
    /// Implicit edges (invariants run by construction) count for the cycle
    /// itself but have no syntax to tag, so they are exempt.
    fn check_recursion(&mut self) {
        let names: Vec<String> = self.done.keys().cloned().collect();
        let index_of: BTreeMap<&str, usize> =
            names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut adj: Vec<Vec<usize>> = alloc::vec![Vec::new(); names.len()];
        for (caller, edges) in &self.edges {
            let Some(&ci) = index_of.get(caller.as_str()) else { continue };
            for e in edges {
                for callee in &e.callees {
                    if let Some(&ki) = index_of.get(callee.as_str()) {
                        adj[ci].push(ki);
                    }
                }
            }
        }
        let scc = tarjan(&adj);
        let mut self_loop = alloc::vec![false; names.len()];
        let mut scc_size = alloc::vec![0usize; names.len()];
        for (i, &c) in scc.iter().enumerate() {
            scc_size[c] += 1;
            if adj[i].contains(&i) {
                self_loop[i] = true;
            }
        }
        let in_cycle =
            |i: usize| -> bool { scc_size[scc[i]] > 1 || self_loop[i] };

        for (i, name) in names.iter().enumerate() {
            if name.starts_with("__") {
                continue;
            }
            let f = &self.done[name];
            if in_cycle(i) && !f.recursive {
                self.diags.error(
                    f.pos.clone(),
                    format!("`{name}` calls itself (possibly indirectly); declare it `recursive`"),
                );
            } else if !in_cycle(i) && f.recursive {
                self.diags
                    .warning(f.pos.clone(), format!("`{name}` is marked recursive but never is"));
            }
        }
        for (caller, edges) in &self.edges {
            let Some(&ci) = index_of.get(caller.as_str()) else { continue };
            for e in edges {
                let Some(tagged) = e.tag else { continue };
                let intra = e.callees.iter().any(|callee| {
                    index_of
                        .get(callee.as_str())
                        .map(|&ki| scc[ki] == scc[ci] && (scc_size[scc[ci]] > 1 || self_loop[ci]))
                        .unwrap_or(false)
                });
                if intra && !tagged {
                    self.diags.error(
                        e.pos.clone(),
                        "recursive call site must be tagged `[recursive]`".to_string(),
                    );
                } else if !intra && tagged {
                    self.diags.warning(
                        e.pos.clone(),
                        "`[recursive]` tag on a call that is not recursive".to_string(),
                    );
                }
            }
        }
    }
}

/// Iterative Tarjan; returns the component id per node.
fn tarjan(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut index = alloc::vec![usize::MAX; n];
    let mut low = alloc::vec![0usize; n];
    let mut on_stack = alloc::vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut comp = alloc::vec![usize::MAX; n];
    let mut next_index = 0usize;
    let mut next_comp = 0usize;
    // Work stack of (node, next child position).
    let mut work: Vec<(usize, usize)> = Vec::new();
    for start in 0..n {
        if index[start] != usize::MAX {
            continue;
        }
        work.push((start, 0));
        index[start] = next_index;
        low[start] = next_index;
        next_index += 1;
        stack.push(start);
        on_stack[start] = true;
        while let Some(&mut (v, ref mut child)) = work.last_mut() {
            if *child < adj[v].len() {
                let w = adj[v][*child];
                *child += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
    }
    comp
}

// ----- statement and expression elaboration -----

struct Local {
    name: String,
    declared: TypeSig,
    /// Possibly narrowed within the current branch.
    now: TypeSig,
    mutable: bool,
    assigned: bool,
}

struct LambdaFrame {
    scope_floor: usize,
    captures: Vec<(String, TypeSig)>,
}

struct BodyCx<'a, 'p> {
    el: &'a mut Elab<'p>,
    /// Declared result, or `None` while inferring.
    declared_result: Option<TypeSig>,
    returns: Vec<(TypeSig, SourcePos)>,
    scopes: Vec<Vec<Local>>,
    binders: Vec<String>,
    old_frames: Vec<Vec<(String, TypeSig)>>,
    lambda_frames: Vec<LambdaFrame>,
    is_ref_method: bool,
    clause_mode: bool,
    /// `$return` type, available in ensures clauses.
    ret_ty: Option<TypeSig>,
    calls: Vec<CallEdge>,
}

type ERes<T> = Result<T, ()>;

impl<'a, 'p> BodyCx<'a, 'p> {
    fn new(
        el: &'a mut Elab<'p>,
        declared_result: Option<TypeSig>,
        is_ref_method: bool,
    ) -> Self {
        BodyCx {
            el,
            declared_result,
            returns: Vec::new(),
            scopes: Vec::new(),
            binders: Vec::new(),
            old_frames: Vec::new(),
            lambda_frames: Vec::new(),
            is_ref_method,
            clause_mode: false,
            ret_ty: None,
            calls: Vec::new(),
        }
    }

    fn push_scope(&mut self) {
        self.scopes.push(Vec::new());
    }

    fn pop_scope(&mut self) {
        self.scopes.pop();
    }

    fn err(&mut self, pos: &SourcePos, msg: String) {
        self.el.diags.error(pos.clone(), msg);
    }

    fn declare(&mut self, name: String, ty: TypeSig, mutable: bool, assigned: bool, pos: &SourcePos) {
        if self.lookup(&name).is_some() {
            self.err(pos, format!("`{name}` is already defined"));
            return;
        }
        self.scopes.last_mut().unwrap().push(Local {
            name,
            declared: ty.clone(),
            now: ty,
            mutable,
            assigned,
        });
    }

    fn lookup(&self, name: &str) -> Option<(usize, usize)> {
        for (si, scope) in self.scopes.iter().enumerate().rev() {
            if let Some(li) = scope.iter().rposition(|l| l.name == name) {
                return Some((si, li));
            }
        }
        None
    }

    /// Resolves a read: checks assignment, records lambda captures.
    fn read_var(&mut self, name: &str, pos: &SourcePos) -> ERes<TypeSig> {
        let Some((si, li)) = self.lookup(name) else {
            return Err(());
        };
        let local = &self.scopes[si][li];
        if !local.assigned {
            let n = local.name.clone();
            self.err(pos, format!("`{n}` may be used before it is assigned"));
            return Err(());
        }
        let ty = local.now.clone();
        for frame in &mut self.lambda_frames {
            if si < frame.scope_floor && !frame.captures.iter().any(|(n, _)| n == name) {
                frame.captures.push((name.to_string(), ty.clone()));
            }
        }
        Ok(ty)
    }

    fn snapshot(&self) -> Vec<Vec<(TypeSig, bool)>> {
        self.scopes
            .iter()
            .map(|s| s.iter().map(|l| (l.now.clone(), l.assigned)).collect())
            .collect()
    }

    fn restore(&mut self, snap: &[Vec<(TypeSig, bool)>]) {
        for (scope, ss) in self.scopes.iter_mut().zip(snap) {
            for (local, (ty, assigned)) in scope.iter_mut().zip(ss) {
                local.now = ty.clone();
                local.assigned = *assigned;
            }
        }
    }

    /// Merge helper for branches: a variable counts assigned after the
    /// statement only if every reachable branch assigned it.
    fn merge_assigned(&mut self, base: &[Vec<(TypeSig, bool)>], branches: &[(Vec<Vec<(TypeSig, bool)>>, bool)]) {
        self.restore(base);
        for (si, scope) in self.scopes.iter_mut().enumerate() {
            for (li, local) in scope.iter_mut().enumerate() {
                if local.assigned {
                    continue;
                }
                let live: Vec<&(Vec<Vec<(TypeSig, bool)>>, bool)> =
                    branches.iter().filter(|(_, diverges)| !diverges).collect();
                if !live.is_empty() && live.iter().all(|(snap, _)| snap[si][li].1) {
                    local.assigned = true;
                }
            }
        }
    }

    fn record_return(&mut self, ty: TypeSig, pos: &SourcePos) -> ERes<()> {
        if self.clause_mode {
            self.err(pos, "cannot return from inside a contract clause".to_string());
            return Err(());
        }
        if !self.lambda_frames.is_empty() {
            self.err(pos, "cannot return from inside a lambda".to_string());
            return Err(());
        }
        if let Some(declared) = &self.declared_result {
            if !is_subtype(&self.el.u, &ty, declared) {
                self.err(pos, format!("returned `{ty}` is not a `{declared}`"));
                return Err(());
            }
        }
        self.returns.push((ty, pos.clone()));
        Ok(())
    }

    /// Final result type: declared wins; otherwise all returns must agree.
    fn finish_result(&mut self, pos: &SourcePos, diverges: bool) -> TypeSig {
        if let Some(declared) = self.declared_result.clone() {
            if !diverges && declared != TypeSig::None {
                self.err(pos, format!("not all paths return a `{declared}`"));
            }
            return declared;
        }
        let Some((first, _)) = self.returns.first().cloned() else {
            return TypeSig::None;
        };
        for (ty, rpos) in &self.returns[1..] {
            if *ty != first {
                let msg = format!(
                    "cannot infer the return type: saw `{first}` and `{ty}`; declare it"
                );
                self.el.diags.error(rpos.clone(), msg);
                break;
            }
        }
        if !diverges && first != TypeSig::None {
            self.err(pos, format!("not all paths return a `{first}`"));
        }
        first
    }

    fn record_call(&mut self, callees: Vec<String>, tag: Option<bool>, pos: &SourcePos) {
        self.calls.push(CallEdge { callees, tag, pos: pos.clone() });
    }

    /// Construction and functional update run the entity's invariants.
    fn record_check_edges(&mut self, entity: &str, pos: &SourcePos) {
        let mut callees = Vec::new();
        let concrete = self.el.u.concrete_of(entity);
        for e in concrete {
            let mut idx = 0;
            loop {
                let name = format!("__inv_{e}_{idx}");
                if !self.el.sigs.contains_key(&name) {
                    break;
                }
                callees.push(name);
                idx += 1;
            }
            if let Some(info) = self.el.u.entities.get(&e) {
                for owner in info.lineage.clone() {
                    if owner == e {
                        continue;
                    }
                    let mut idx = 0;
                    loop {
                        let name = format!("__inv_{owner}_{idx}");
                        if !self.el.sigs.contains_key(&name) {
                            break;
                        }
                        callees.push(name);
                        idx += 1;
                    }
                }
            }
        }
        callees.sort();
        callees.dedup();
        if !callees.is_empty() {
            self.record_call(callees, None, pos);
        }
    }

    // ----- blocks and statements -----

    fn elab_block(&mut self, b: &ast::Block) -> (HBlock, bool) {
        self.push_scope();
        let mut stmts = Vec::new();
        let mut diverges = false;
        for s in &b.stmts {
            if diverges {
                self.err(&s.pos, "unreachable statement".to_string());
                break;
            }
            if let Ok((hs, d)) = self.elab_stmt(s) {
                diverges = d;
                stmts.push(hs);
            }
        }
        self.pop_scope();
        (HBlock { stmts }, diverges)
    }

    fn elab_stmt(&mut self, s: &ast::Stmt) -> ERes<(HStmt, bool)> {
        let pos = s.pos.clone();
        let kind = match &s.kind {
            StmtKind::Let { name, ty, init } => {
                let declared = match ty {
                    Some(t) => Some(self.resolve(t)?),
                    None => None,
                };
                let init = match &declared {
                    Some(d) => self.elab_expr_expect(init, d)?,
                    None => self.elab_expr(init)?,
                };
                let ty = declared.unwrap_or_else(|| init.ty.clone());
                self.declare(name.clone(), ty.clone(), false, true, &pos);
                HStmtKind::Let { name: name.clone(), ty, mutable: false, init }
            }
            StmtKind::Var { name, ty, init } => {
                let declared = match ty {
                    Some(t) => Some(self.resolve(t)?),
                    None => None,
                };
                match init {
                    Some(init) => {
                        let init = match &declared {
                            Some(d) => self.elab_expr_expect(init, d)?,
                            None => self.elab_expr(init)?,
                        };
                        let ty = declared.unwrap_or_else(|| init.ty.clone());
                        self.declare(name.clone(), ty.clone(), true, true, &pos);
                        HStmtKind::Let { name: name.clone(), ty, mutable: true, init }
                    }
                    None => {
                        let Some(ty) = declared else {
                            self.err(&pos, format!("`var {name};` needs a type"));
                            return Err(());
                        };
                        self.declare(name.clone(), ty.clone(), true, false, &pos);
                        HStmtKind::Declare { name: name.clone(), ty }
                    }
                }
            }
            StmtKind::Assign { name, value } => {
                let Some((si, li)) = self.lookup(name) else {
                    self.err(&pos, format!("unknown variable `{name}`"));
                    return Err(());
                };
                let (declared, mutable) =
                    (self.scopes[si][li].declared.clone(), self.scopes[si][li].mutable);
                if !mutable {
                    self.err(&pos, format!("`{name}` is immutable; declare it with `var`"));
                    return Err(());
                }
                let value = self.elab_expr_expect(value, &declared)?;
                let (si, li) = self.lookup(name).unwrap();
                let local = &mut self.scopes[si][li];
                local.assigned = true;
                local.now = local.declared.clone();
                HStmtKind::Assign { name: name.clone(), value }
            }
            StmtKind::ThisUpdate { updates } => {
                if !self.is_ref_method {
                    self.err(&pos, "`this.{...};` is only allowed in `ref` methods".to_string());
                    return Err(());
                }
                let this_ty = self.read_var("this", &pos)?;
                let updates = self.elab_updates(&this_ty, updates, &pos)?;
                if let TypeSig::Nominal(n) = &this_ty {
                    let n = n.clone();
                    self.record_check_edges(&n, &pos);
                }
                HStmtKind::ThisUpdate { updates }
            }
            StmtKind::If { arms, else_block } => return self.elab_if(arms, else_block, pos),
            StmtKind::Match { scrutinee, arms } => return self.elab_match(scrutinee, arms, pos),
            StmtKind::Return { value } => {
                let value = self.elab_expr(value)?;
                self.record_return(value.ty.clone(), &pos)?;
                return Ok((HStmt { pos, kind: HStmtKind::Return { value } }, true));
            }
            StmtKind::Assert { level, cond } => {
                let cond = self.elab_expr_expect(cond, &TypeSig::Bool)?;
                HStmtKind::Assert {
                    level: level.map(CheckLevel::from).unwrap_or(CheckLevel::Release),
                    cond,
                }
            }
            StmtKind::Narrow { name, op, early } => {
                let subject_ty = match self.lookup(name) {
                    Some((si, li)) => {
                        if !self.scopes[si][li].assigned {
                            self.err(&pos, format!("`{name}` may be used before it is assigned"));
                            return Err(());
                        }
                        self.scopes[si][li].now.clone()
                    }
                    None => {
                        self.err(&pos, format!("unknown variable `{name}`"));
                        return Err(());
                    }
                };
                let op = self.elab_flow_op(&subject_ty, op)?;
                if *early {
                    self.record_return(op.t_fail.clone(), &pos)?;
                }
                let (si, li) = self.lookup(name).unwrap();
                self.scopes[si][li].now = op.t_pass.clone();
                HStmtKind::Narrow { name: name.clone(), op, early: *early }
            }
            StmtKind::RefCall { bind, receiver, method, args, recursive } => {
                return self.elab_ref_call(bind, receiver, method, args, *recursive, pos);
            }
            StmtKind::Expr { expr } => {
                let e = self.elab_expr(expr)?;
                HStmtKind::Expr(e)
            }
        };
        Ok((HStmt { pos, kind }, false))
    }

    fn elab_if(
        &mut self,
        arms: &[ast::IfArm],
        else_block: &Option<ast::Block>,
        pos: SourcePos,
    ) -> ERes<(HStmt, bool)> {
        let base = self.snapshot();
        let mut harms = Vec::new();
        let mut branch_states: Vec<(Vec<Vec<(TypeSig, bool)>>, bool)> = Vec::new();
        let mut last_flow: Option<(Option<String>, HFlowOp, String)> = None;

        for arm in arms {
            self.restore(&base);
            let (cond, subject_var, binder, op) = match &arm.cond {
                ast::IfCond::Plain(e) => {
                    let c = self.elab_expr_expect(e, &TypeSig::Bool)?;
                    (HCond::Plain(c), None, None, None)
                }
                ast::IfCond::Flow { op, subject } => {
                    let subj = self.elab_expr(subject)?;
                    let hop = self.elab_flow_op(&subj.ty, op)?;
                    let binder = self.el.fresh_binder();
                    let var = match &subj.kind {
                        HExprKind::Var(n) => Some(n.clone()),
                        _ => None,
                    };
                    (
                        HCond::Flow { subject: Box::new(subj), op: hop.clone(), binder: binder.clone() },
                        var,
                        Some(binder),
                        Some(hop),
                    )
                }
            };
            // Arm body sees the pass-side narrowing.
            self.push_scope();
            if let (Some(b), Some(op)) = (&binder, &op) {
                self.declare(b.clone(), op.t_pass.clone(), false, true, &arm.pos);
                self.binders.push(b.clone());
            }
            if let (Some(v), Some(op)) = (&subject_var, &op) {
                if let Some((si, li)) = self.lookup(v) {
                    self.scopes[si][li].now = op.t_pass.clone();
                }
            }
            let (body, d) = self.elab_block(&arm.block);
            if binder.is_some() {
                self.binders.pop();
            }
            self.pop_scope();
            branch_states.push((self.snapshot(), d));
            if let (Some(b), Some(o)) = (&binder, &op) {
                last_flow = Some((subject_var.clone(), o.clone(), b.clone()));
            } else {
                last_flow = None;
            }
            harms.push(HIfArm { cond, body, pos: arm.pos.clone() });
        }

        let helse = match else_block {
            Some(b) => {
                self.restore(&base);
                self.push_scope();
                // The else of a flow-if sees the fail side of the last arm.
                if let Some((subject_var, op, binder)) = &last_flow {
                    self.declare(binder.clone(), op.t_fail.clone(), false, true, &pos);
                    self.binders.push(binder.clone());
                    if let Some(v) = subject_var {
                        if let Some((si, li)) = self.lookup(v) {
                            self.scopes[si][li].now = op.t_fail.clone();
                        }
                    }
                }
                let (hb, d) = self.elab_block(b);
                if last_flow.is_some() {
                    self.binders.pop();
                }
                self.pop_scope();
                branch_states.push((self.snapshot(), d));
                Some(hb)
            }
            None => {
                // No else: treat as an empty branch that assigns nothing.
                branch_states.push((base.clone(), false));
                None
            }
        };

        let diverges = branch_states.iter().all(|(_, d)| *d);
        self.merge_assigned(&base, &branch_states);
        Ok((HStmt { pos, kind: HStmtKind::If { arms: harms, else_block: helse } }, diverges))
    }

    fn elab_match(
        &mut self,
        scrutinee: &ast::Expr,
        arms: &[ast::MatchArm],
        pos: SourcePos,
    ) -> ERes<(HStmt, bool)> {
        let subject = self.elab_expr(scrutinee)?;
        let subject_var = match &subject.kind {
            HExprKind::Var(n) => Some(n.clone()),
            _ => None,
        };
        let binder = self.el.fresh_binder();
        let base = self.snapshot();
        let mut harms = Vec::new();
        let mut branch_states = Vec::new();
        let mut covers: Vec<TypeSig> = Vec::new();
        let mut literal_none = false;
        let mut literal_bools = BTreeSet::new();
        let mut has_wildcard = false;

        for arm in arms {
            self.restore(&base);
            let (pat, narrowed) = match &arm.pat {
                ast::MatchPat::Wildcard => {
                    has_wildcard = true;
                    (HPat::Wildcard, subject.ty.clone())
                }
                ast::MatchPat::Type(name) => {
                    let te = ast::TypeExpr {
                        pos: arm.pos.clone(),
                        kind: ast::TypeExprKind::Named { name: name.clone(), targs: Vec::new() },
                    };
                    let ty = self.resolve(&te)?;
                    let (t_pass, _) = narrow_by_type(&self.el.u, &subject.ty, &ty);
                    let narrowed = match t_pass {
                        Some(t) => t,
                        None => {
                            self.el.diags.warning(
                                arm.pos.clone(),
                                format!("this arm never matches a `{}`", subject.ty),
                            );
                            ty.clone()
                        }
                    };
                    covers.push(ty.clone());
                    (HPat::Type(ty), narrowed)
                }
                ast::MatchPat::Literal(e) => {
                    let lit = self.elab_literal(e)?;
                    match &lit.0 {
                        Value::None => literal_none = true,
                        Value::Bool(b) => {
                            literal_bools.insert(*b);
                        }
                        _ => {}
                    }
                    if !is_subtype(&self.el.u, &lit.1, &subject.ty)
                        && !is_subtype(&self.el.u, &subject.ty, &lit.1)
                    {
                        self.err(&arm.pos, format!("`{}` can never equal a `{}`", lit.1, subject.ty));
                        return Err(());
                    }
                    let narrowed =
                        if is_subtype(&self.el.u, &lit.1, &subject.ty) { lit.1.clone() } else { subject.ty.clone() };
                    (HPat::Literal(lit.0), narrowed)
                }
            };
            self.push_scope();
            self.declare(binder.clone(), narrowed.clone(), false, true, &arm.pos);
            self.binders.push(binder.clone());
            if let Some(v) = &subject_var {
                if let Some((si, li)) = self.lookup(v) {
                    self.scopes[si][li].now = narrowed.clone();
                }
            }
            let (body, d) = self.elab_block(&arm.body);
            self.binders.pop();
            self.pop_scope();
            branch_states.push((self.snapshot(), d));
            harms.push(HMatchArm { pat, body, pos: arm.pos.clone(), narrowed });
        }

        if !has_wildcard {
            let mut uncovered = Vec::new();
            for member in subject.ty.members() {
                if member_covered(&self.el.u, member, &covers, literal_none, &literal_bools) {
                    continue;
                }
                uncovered.push(format!("`{member}`"));
            }
            if !uncovered.is_empty() {
                self.err(
                    &pos,
                    format!("match is not exhaustive; unhandled: {}", uncovered.join(", ")),
                );
            }
        }

        let diverges = !branch_states.is_empty() && branch_states.iter().all(|(_, d)| *d);
        self.merge_assigned(&base, &branch_states);
        Ok((
            HStmt { pos, kind: HStmtKind::Match { subject, binder, arms: harms } },
            diverges,
        ))
    }

    fn elab_ref_call(
        &mut self,
        bind: &Option<(String, Option<ast::TypeExpr>, bool)>,
        receiver: &str,
        method: &str,
        args: &[ast::Expr],
        recursive: bool,
        pos: SourcePos,
    ) -> ERes<(HStmt, bool)> {
        let Some((si, li)) = self.lookup(receiver) else {
            self.err(&pos, format!("unknown variable `{receiver}`"));
            return Err(());
        };
        if !self.scopes[si][li].mutable {
            self.err(&pos, format!("`{receiver}` must be a `var` to take a `ref` call"));
            return Err(());
        }
        if !self.scopes[si][li].assigned {
            self.err(&pos, format!("`{receiver}` may be used before it is assigned"));
            return Err(());
        }
        let recv_ty = self.scopes[si][li].now.clone();
        let TypeSig::Nominal(type_name) = &recv_ty else {
            self.err(&pos, format!("`{receiver}` is a `{recv_ty}`, which has no methods"));
            return Err(());
        };
        let type_name = type_name.clone();
        let Some(sig) = self.el.u.find_method(&type_name, method).cloned() else {
            self.err(&pos, format!("`{type_name}` has no method `{method}`"));
            return Err(());
        };
        if !sig.is_ref {
            self.err(&pos, format!("`{method}` is not a `ref` method"));
            return Err(());
        }
        let hargs = self.elab_args(&sig.params, args, &pos)?;
        let (owner, callees) = self.method_targets(&type_name, method, &sig.owner);
        self.record_call(callees, Some(recursive), &pos);
        let result = self.method_result(&owner, method, &sig, &pos)?;

        let bind_info = match bind {
            Some((name, ty, is_var)) => {
                let declared = match ty {
                    Some(t) => {
                        let d = self.resolve(t)?;
                        if !is_subtype(&self.el.u, &result, &d) {
                            self.err(&pos, format!("`{method}` returns `{result}`, not `{d}`"));
                            return Err(());
                        }
                        d
                    }
                    None => result.clone(),
                };
                self.declare(name.clone(), declared.clone(), *is_var, true, &pos);
                Some(RefBind { name: name.clone(), ty: declared, mutable: *is_var, fresh: true })
            }
            None => None,
        };
        Ok((
            HStmt {
                pos,
                kind: HStmtKind::RefCall {
                    bind: bind_info,
                    receiver: receiver.to_string(),
                    method: method.to_string(),
                    owner,
                    args: hargs,
                },
            },
            false,
        ))
    }

    // ----- expressions -----

    fn resolve(&mut self, t: &ast::TypeExpr) -> ERes<TypeSig> {
        match resolve_type(&self.el.u, t) {
            Ok(sig) => Ok(sig),
            Err(d) => {
                self.el.diags.push(d);
                Err(())
            }
        }
    }

    fn elab_expr_expect(&mut self, e: &ast::Expr, expected: &TypeSig) -> ERes<HExpr> {
        let h = self.elab_expr(e)?;
        if !is_subtype(&self.el.u, &h.ty, expected) {
            self.err(&e.pos, format!("expected `{expected}`, found `{}`", h.ty));
            return Err(());
        }
        Ok(h)
    }

    fn elab_expr(&mut self, e: &ast::Expr) -> ERes<HExpr> {
        let pos = e.pos.clone();
        match &e.kind {
            ExprKind::NoneLit
            | ExprKind::BoolLit(_)
            | ExprKind::NumLit { .. }
            | ExprKind::StrLit(_)
            | ExprKind::TypedLit { .. } => {
                let (v, ty) = self.elab_literal(e)?;
                Ok(HExpr::new(ty, pos, HExprKind::Const(v)))
            }
            ExprKind::Ident(name) => {
                if self.lookup(name).is_some() {
                    let ty = self.read_var(name, &pos)?;
                    return Ok(HExpr::new(ty, pos, HExprKind::Var(name.clone())));
                }
                // Invariant and validate conditions name the receiver's
                // fields directly (`invariant available >= 0I;`).
                if self.clause_mode && self.lookup("this").is_some() {
                    let this_ty = self.read_var("this", &pos)?;
                    if let Some(fty) = self.el.u.lookup_field(&this_ty, name) {
                        let recv =
                            HExpr::new(this_ty, pos.clone(), HExprKind::Var("this".to_string()));
                        return Ok(HExpr::new(
                            fty,
                            pos,
                            HExprKind::FieldAccess {
                                receiver: Box::new(recv),
                                field: name.clone(),
                            },
                        ));
                    }
                }
                // A bare name can also be a top-level const.
                if let Some(sig) = self.el.sigs.get(name) {
                    if matches!(sig.kind, FnKind::Const { .. }) {
                        let ty = self.el.ensure_result(name, &pos)?;
                        self.record_call(alloc::vec![name.clone()], Some(false), &pos);
                        return Ok(HExpr::new(
                            ty,
                            pos,
                            HExprKind::Call { func: name.clone(), args: Vec::new() },
                        ));
                    }
                    self.err(&pos, format!("`{name}` is a function; call it"));
                    return Err(());
                }
                self.err(&pos, format!("unknown name `{name}`"));
                Err(())
            }
            ExprKind::This => {
                if self.lookup("this").is_none() {
                    self.err(&pos, "`this` is only available inside members".to_string());
                    return Err(());
                }
                let ty = self.read_var("this", &pos)?;
                Ok(HExpr::new(ty, pos, HExprKind::Var("this".to_string())))
            }
            ExprKind::Binder => match self.binders.last().cloned() {
                Some(b) => {
                    let ty = self.read_var(&b, &pos)?;
                    Ok(HExpr::new(ty, pos, HExprKind::Var(b)))
                }
                None => {
                    self.err(&pos, "`$` is only bound inside match arms and flow ifs".to_string());
                    Err(())
                }
            },
            ExprKind::NamedBinder(name) => {
                if name == "return" {
                    let Some(ty) = self.ret_ty.clone() else {
                        self.err(&pos, "`$return` is only available in ensures clauses".to_string());
                        return Err(());
                    };
                    return Ok(HExpr::new(ty, pos, HExprKind::Var("__ret".to_string())));
                }
                if let Some(frame) = self.old_frames.last() {
                    if let Some((_, ty)) = frame.iter().find(|(n, _)| n == name) {
                        return Ok(HExpr::new(ty.clone(), pos, HExprKind::OldField(name.clone())));
                    }
                    self.err(&pos, format!("the updated value has no field `{name}`"));
                    return Err(());
                }
                self.err(&pos, format!("`${name}` is only bound inside bulk updates"));
                Err(())
            }
            ExprKind::Tuple(items) => {
                let mut hs = Vec::new();
                let mut tys = Vec::new();
                for item in items {
                    let h = self.elab_expr(item)?;
                    tys.push(h.ty.clone());
                    hs.push(h);
                }
                Ok(HExpr::new(TypeSig::Tuple(tys), pos, HExprKind::Tuple(hs)))
            }
            ExprKind::Record(props) => {
                let mut seen = BTreeSet::new();
                let mut hs = Vec::new();
                for (name, val) in props {
                    if !seen.insert(name.clone()) {
                        self.err(&pos, format!("duplicate prop `{name}`"));
                        return Err(());
                    }
                    let h = self.elab_expr(val)?;
                    hs.push((name.clone(), h));
                }
                hs.sort_by(|a, b| a.0.cmp(&b.0));
                let ty = canonical_record(hs.iter().map(|(n, h)| (n.clone(), h.ty.clone())).collect());
                Ok(HExpr::new(ty, pos, HExprKind::RecordLit(hs)))
            }
            ExprKind::ListLit { targs, items } => {
                let declared = match targs.len() {
                    0 => None,
                    1 => Some(self.resolve(&targs[0])?),
                    _ => {
                        self.err(&pos, "`List` takes one type argument".to_string());
                        return Err(());
                    }
                };
                let mut hs = Vec::new();
                for item in items {
                    hs.push(self.elab_expr(item)?);
                }
                let elem = match declared {
                    Some(t) => {
                        for (h, item) in hs.iter().zip(items) {
                            if !is_subtype(&self.el.u, &h.ty, &t) {
                                self.err(&item.pos, format!("expected `{t}`, found `{}`", h.ty));
                                return Err(());
                            }
                        }
                        t
                    }
                    None => {
                        let Some(first) = hs.first() else {
                            self.err(&pos, "an empty list needs its element type: `List<T>{}`".to_string());
                            return Err(());
                        };
                        let t = first.ty.clone();
                        for (h, item) in hs.iter().zip(items).skip(1) {
                            if h.ty != t {
                                self.err(
                                    &item.pos,
                                    format!("list elements disagree: `{t}` vs `{}`", h.ty),
                                );
                                return Err(());
                            }
                        }
                        t
                    }
                };
                Ok(HExpr::new(TypeSig::list(elem), pos, HExprKind::ListLit(hs)))
            }
            ExprKind::MapLit { targs, items } => {
                let declared = match targs.len() {
                    0 => None,
                    2 => Some((self.resolve(&targs[0])?, self.resolve(&targs[1])?)),
                    _ => {
                        self.err(&pos, "`Map` takes two type arguments".to_string());
                        return Err(());
                    }
                };
                let mut hs = Vec::new();
                for (k, v) in items {
                    hs.push((self.elab_expr(k)?, self.elab_expr(v)?));
                }
                let (kt, vt) = match declared {
                    Some((kt, vt)) => {
                        for ((hk, hv), (k, v)) in hs.iter().zip(items) {
                            if !is_subtype(&self.el.u, &hk.ty, &kt) {
                                self.err(&k.pos, format!("expected `{kt}`, found `{}`", hk.ty));
                                return Err(());
                            }
                            if !is_subtype(&self.el.u, &hv.ty, &vt) {
                                self.err(&v.pos, format!("expected `{vt}`, found `{}`", hv.ty));
                                return Err(());
                            }
                        }
                        (kt, vt)
                    }
                    None => {
                        let Some((fk, fv)) = hs.first() else {
                            self.err(&pos, "an empty map needs its types: `Map<K,V>{}`".to_string());
                            return Err(());
                        };
                        let (kt, vt) = (fk.ty.clone(), fv.ty.clone());
                        for ((hk, hv), (k, _)) in hs.iter().zip(items).skip(1) {
                            if hk.ty != kt || hv.ty != vt {
                                self.err(&k.pos, "map entries disagree on their types".to_string());
                                return Err(());
                            }
                        }
                        (kt, vt)
                    }
                };
                if !is_key_type(&kt) {
                    self.err(&pos, format!("`{kt}` cannot be a map key"));
                    return Err(());
                }
                Ok(HExpr::new(TypeSig::map(kt, vt), pos, HExprKind::MapLit(hs)))
            }
            ExprKind::Construct { name, targs, args } => self.elab_construct(name, targs, args, pos),
            ExprKind::BulkUpdate { target, updates } => {
                let recv = self.elab_expr(target)?;
                let updates = self.elab_updates(&recv.ty, updates, &pos)?;
                if let TypeSig::Nominal(n) = &recv.ty {
                    let n = n.clone();
                    self.record_check_edges(&n, &pos);
                }
                let ty = recv.ty.clone();
                Ok(HExpr::new(
                    ty,
                    pos,
                    HExprKind::BulkUpdate { receiver: Box::new(recv), updates },
                ))
            }
            ExprKind::Call { name, args, recursive } => {
                if self.lookup(name).is_some() {
                    self.err(&pos, format!("`{name}` is a variable, not a function"));
                    return Err(());
                }
                let Some(sig) = self.el.sigs.get(name).cloned() else {
                    if self.el.u.is_entity(name) || self.el.u.is_concept(name) {
                        self.err(&pos, format!("use `{name}{{...}}` to construct a `{name}`"));
                    } else {
                        self.err(&pos, format!("unknown function `{name}`"));
                    }
                    return Err(());
                };
                if matches!(sig.kind, FnKind::Const { .. }) && !args.is_empty() {
                    self.err(&pos, format!("`{name}` is a constant, not a function"));
                    return Err(());
                }
                let hargs = self.elab_args(&sig.params, args, &pos)?;
                self.record_call(alloc::vec![name.clone()], Some(*recursive), &pos);
                let ty = self.el.ensure_result(name, &pos)?;
                Ok(HExpr::new(ty, pos, HExprKind::Call { func: name.clone(), args: hargs }))
            }
            ExprKind::StaticAccess { owner, name, targs, args, recursive } => {
                self.elab_static(owner, name, targs, args, *recursive, pos)
            }
            ExprKind::MethodCall { receiver, name, targs, args, recursive } => {
                let recv = self.elab_expr(receiver)?;
                match &recv.ty {
                    TypeSig::List(_) | TypeSig::Map(..) => {
                        self.elab_functor(recv, name, targs, args, pos)
                    }
                    TypeSig::Nominal(_) => self.elab_method(recv, name, targs, args, *recursive, pos),
                    other => {
                        self.err(&pos, format!("`{other}` has no method `{name}`"));
                        Err(())
                    }
                }
            }
            ExprKind::FieldAccess { receiver, name } => {
                let recv = self.elab_expr(receiver)?;
                let Some(ty) = self.el.u.lookup_field(&recv.ty, name) else {
                    self.err(&pos, format!("`{}` has no field `{name}`", recv.ty));
                    return Err(());
                };
                Ok(HExpr::new(
                    ty,
                    pos,
                    HExprKind::FieldAccess { receiver: Box::new(recv), field: name.clone() },
                ))
            }
            ExprKind::TupleIndex { receiver, index } => {
                let recv = self.elab_expr(receiver)?;
                let TypeSig::Tuple(items) = &recv.ty else {
                    self.err(&pos, format!("`{}` is not a tuple", recv.ty));
                    return Err(());
                };
                let Some(ty) = items.get(*index as usize).cloned() else {
                    self.err(&pos, format!("tuple `{}` has no element {index}", recv.ty));
                    return Err(());
                };
                Ok(HExpr::new(
                    ty,
                    pos,
                    HExprKind::TupleIndex { receiver: Box::new(recv), index: *index },
                ))
            }
            ExprKind::Lambda { .. } => {
                self.err(&pos, "a lambda can only be an argument to a list or map operation".to_string());
                Err(())
            }
            ExprKind::Unary { op, operand } => self.elab_unary(*op, operand, pos),
            ExprKind::Binary { op, lhs, rhs } => self.elab_binary(*op, lhs, rhs, pos),
            ExprKind::FlowTest { subject, op } => {
                let subj = self.elab_expr(subject)?;
                let op = self.elab_flow_op(&subj.ty, op)?;
                Ok(HExpr::new(
                    TypeSig::Bool,
                    pos,
                    HExprKind::FlowTest { subject: Box::new(subj), op },
                ))
            }
            ExprKind::FlowCast { subject, op } => {
                let subj = self.elab_expr(subject)?;
                let op = self.elab_flow_op(&subj.ty, op)?;
                let ty = op.t_pass.clone();
                Ok(HExpr::new(ty, pos, HExprKind::FlowCast { subject: Box::new(subj), op }))
            }
            ExprKind::EarlyFlow { subject, op, is_cast: _ } => {
                let subj = self.elab_expr(subject)?;
                let op = self.elab_flow_op(&subj.ty, op)?;
                self.record_return(op.t_fail.clone(), &pos)?;
                let ty = op.t_pass.clone();
                Ok(HExpr::new(ty, pos, HExprKind::EarlyFlow { subject: Box::new(subj), op }))
            }
            ExprKind::IfExpr { cond, then, els } => {
                let c = self.elab_expr_expect(cond, &TypeSig::Bool)?;
                let t = self.elab_expr(then)?;
                let e = self.elab_expr(els)?;
                let ty = canonical_union(alloc::vec![t.ty.clone(), e.ty.clone()]);
                Ok(HExpr::new(
                    ty,
                    pos,
                    HExprKind::IfExpr {
                        cond: Box::new(c),
                        then_branch: Box::new(t),
                        else_branch: Box::new(e),
                    },
                ))
            }
        }
    }

    /// Literal expressions: plain literals, typed literals, and a leading
    /// minus folded into the number so `-9223372036854775808i` works.
    fn elab_literal(&mut self, e: &ast::Expr) -> ERes<(Value, TypeSig)> {
        match &e.kind {
            ExprKind::NoneLit => Ok((Value::None, TypeSig::None)),
            ExprKind::BoolLit(b) => Ok((Value::Bool(*b), TypeSig::Bool)),
            ExprKind::StrLit(s) => Ok((Value::Str(s.clone()), TypeSig::String)),
            ExprKind::NumLit { text, kind } => self.num_literal(text, *kind, false, &e.pos),
            ExprKind::TypedLit { text, is_string, ty_name } => {
                self.typed_literal(text, *is_string, ty_name, false, &e.pos)
            }
            ExprKind::Unary { op: ast::UnaryOp::Neg, operand } => match &operand.kind {
                ExprKind::NumLit { text, kind } => self.num_literal(text, *kind, true, &e.pos),
                ExprKind::TypedLit { text, is_string, ty_name } => {
                    self.typed_literal(text, *is_string, ty_name, true, &e.pos)
                }
                _ => {
                    self.err(&e.pos, "expected a literal".to_string());
                    Err(())
                }
            },
            _ => {
                self.err(&e.pos, "expected a literal".to_string());
                Err(())
            }
        }
    }

    fn num_literal(
        &mut self,
        text: &str,
        kind: NumKind,
        negate: bool,
        pos: &SourcePos,
    ) -> ERes<(Value, TypeSig)> {
        let signed = |t: &str| -> String {
            if negate {
                format!("-{t}")
            } else {
                t.to_string()
            }
        };
        match kind {
            NumKind::Nat => {
                if negate {
                    self.err(pos, "a `Nat` literal cannot be negative".to_string());
                    return Err(());
                }
                match text.parse::<u64>() {
                    Ok(n) => Ok((Value::Nat(n), TypeSig::Nat)),
                    Err(_) => {
                        self.err(pos, format!("`{text}n` does not fit `Nat`"));
                        Err(())
                    }
                }
            }
            NumKind::Int => match signed(text).parse::<i64>() {
                Ok(n) => Ok((Value::Int(n), TypeSig::Int)),
                Err(_) => {
                    self.err(pos, format!("`{text}i` does not fit `Int`"));
                    Err(())
                }
            },
            NumKind::BigNat => {
                if negate {
                    self.err(pos, "a `BigNat` literal cannot be negative".to_string());
                    return Err(());
                }
                match text.parse::<num_bigint::BigUint>() {
                    Ok(n) => Ok((Value::BigNat(n), TypeSig::BigNat)),
                    Err(_) => {
                        self.err(pos, format!("bad `BigNat` literal `{text}N`"));
                        Err(())
                    }
                }
            }
            NumKind::BigInt => match signed(text).parse::<num_bigint::BigInt>() {
                Ok(n) => Ok((Value::BigInt(n), TypeSig::BigInt)),
                Err(_) => {
                    self.err(pos, format!("bad `BigInt` literal `{text}I`"));
                    Err(())
                }
            },
            NumKind::Float => match signed(text).parse::<f64>() {
                Ok(f) => Ok((Value::Float(f), TypeSig::Float)),
                Err(_) => {
                    self.err(pos, format!("bad `Float` literal `{text}f`"));
                    Err(())
                }
            },
            NumKind::Decimal => match decimal_from_text(text) {
                Some(d) => Ok((Value::Decimal(if negate { -d } else { d }), TypeSig::Decimal)),
                None => {
                    self.err(
                        pos,
                        format!("`{text}d` does not fit `Decimal` (19 fraction digits)"),
                    );
                    Err(())
                }
            },
            NumKind::Rational => {
                let Some((p, q)) = text.split_once('/') else {
                    self.err(pos, format!("bad `Rational` literal `{text}R`"));
                    return Err(());
                };
                let (Ok(p), Ok(q)) =
                    (signed(p).parse::<num_bigint::BigInt>(), q.parse::<num_bigint::BigInt>())
                else {
                    self.err(pos, format!("bad `Rational` literal `{text}R`"));
                    return Err(());
                };
                if q == num_bigint::BigInt::from(0) {
                    self.err(pos, "a `Rational` literal cannot have a zero denominator".to_string());
                    return Err(());
                }
                Ok((
                    Value::Rational(num_rational::BigRational::new(p, q)),
                    TypeSig::Rational,
                ))
            }
            NumKind::UnsuffixedInt | NumKind::UnsuffixedFloat => {
                self.err(
                    pos,
                    format!("numeric literal `{text}` needs a kind suffix (n, i, N, I, f, d, or R)"),
                );
                Err(())
            }
        }
    }

    fn typed_literal(
        &mut self,
        text: &str,
        is_string: bool,
        ty_name: &str,
        negate: bool,
        pos: &SourcePos,
    ) -> ERes<(Value, TypeSig)> {
        let Some(td) = self.el.u.typedecls.get(ty_name).cloned() else {
            self.err(pos, format!("`{ty_name}` is not a typedecl"));
            return Err(());
        };
        let ty = TypeSig::Typedecl { name: ty_name.to_string(), base: Box::new(td.base.clone()) };
        if is_string {
            let inner = match &td.base {
                TypeSig::StringOf(v) => {
                    let pattern = self.el.u.validators[v].pattern.clone();
                    let re = crate::rx::Regex::new(&pattern).expect("validated at declaration");
                    if !re.matches(text) {
                        self.err(
                            pos,
                            format!("literal does not match the `{v}` validator"),
                        );
                        return Err(());
                    }
                    Value::StringOf { validator: v.clone(), value: text.to_string() }
                }
                TypeSig::String => Value::Str(text.to_string()),
                TypeSig::ASCIIString => {
                    if !text.is_ascii() {
                        self.err(pos, "literal is not ASCII".to_string());
                        return Err(());
                    }
                    Value::Ascii(text.to_string())
                }
                other => {
                    self.err(pos, format!("`{ty_name}` wraps `{other}`, not a string"));
                    return Err(());
                }
            };
            return Ok((Value::Typedecl { name: ty_name.to_string(), value: Box::new(inner) }, ty));
        }
        let base_kind = match base_of(&td.base) {
            TypeSig::Nat => NumKind::Nat,
            TypeSig::Int => NumKind::Int,
            TypeSig::BigNat => NumKind::BigNat,
            TypeSig::BigInt => NumKind::BigInt,
            TypeSig::Float => NumKind::Float,
            TypeSig::Decimal => NumKind::Decimal,
            TypeSig::Rational => NumKind::Rational,
            other => {
                self.err(pos, format!("`{ty_name}` wraps `{other}`, not a number"));
                return Err(());
            }
        };
        let (inner, _) = self.num_literal(text, base_kind, negate, pos)?;
        // A typedecl over another typedecl nests the wrappers.
        let wrapped = wrap_typedecl_chain(&td.base, inner);
        Ok((Value::Typedecl { name: ty_name.to_string(), value: Box::new(wrapped) }, ty))
    }

    fn elab_construct(
        &mut self,
        name: &str,
        targs: &[ast::TypeExpr],
        args: &[ast::Expr],
        pos: SourcePos,
    ) -> ERes<HExpr> {
        // Result wrappers.
        if name == "Ok" || name == "Err" {
            if args.len() != 1 {
                self.err(&pos, format!("`{name}` wraps exactly one value"));
                return Err(());
            }
            let inner = self.elab_expr(&args[0])?;
            if let Some(t) = targs.first() {
                let declared = self.resolve(t)?;
                if !is_subtype(&self.el.u, &inner.ty, &declared) {
                    self.err(&pos, format!("expected `{declared}`, found `{}`", inner.ty));
                    return Err(());
                }
                let ty = if name == "Ok" {
                    TypeSig::Ok(Box::new(declared))
                } else {
                    TypeSig::Err(Box::new(declared))
                };
                let kind = if name == "Ok" {
                    HExprKind::OkWrap(Box::new(inner))
                } else {
                    HExprKind::ErrWrap(Box::new(inner))
                };
                return Ok(HExpr::new(ty, pos, kind));
            }
            let ty = if name == "Ok" {
                TypeSig::Ok(Box::new(inner.ty.clone()))
            } else {
                TypeSig::Err(Box::new(inner.ty.clone()))
            };
            let kind = if name == "Ok" {
                HExprKind::OkWrap(Box::new(inner))
            } else {
                HExprKind::ErrWrap(Box::new(inner))
            };
            return Ok(HExpr::new(ty, pos, kind));
        }
        // ASCII admission.
        if name == "ASCIIString" {
            if args.len() != 1 {
                self.err(&pos, "`ASCIIString{...}` takes one string".to_string());
                return Err(());
            }
            let inner = self.elab_expr_expect(&args[0], &TypeSig::String)?;
            return Ok(HExpr::new(
                TypeSig::ASCIIString,
                pos,
                HExprKind::Inject { value: Box::new(inner) },
            ));
        }
        // Validated strings: `StringOf<V>{s}`.
        if name == "StringOf" {
            let [t] = targs else {
                self.err(&pos, "`StringOf` needs its validator: `StringOf<V>{...}`".to_string());
                return Err(());
            };
            let target = self.resolve(&ast::TypeExpr {
                pos: pos.clone(),
                kind: ast::TypeExprKind::Named {
                    name: "StringOf".to_string(),
                    targs: alloc::vec![t.clone()],
                },
            })?;
            if args.len() != 1 {
                self.err(&pos, "`StringOf<V>{...}` takes one string".to_string());
                return Err(());
            }
            let inner = self.elab_expr_expect(&args[0], &TypeSig::String)?;
            return Ok(HExpr::new(target, pos, HExprKind::Inject { value: Box::new(inner) }));
        }
        // Typedecl injection: `Zipcode{s}`, `Celsius{x}`.
        if let Some(td) = self.el.u.typedecls.get(name).cloned() {
            if args.len() != 1 {
                self.err(&pos, format!("`{name}{{...}}` takes one value"));
                return Err(());
            }
            let expected = match &td.base {
                TypeSig::StringOf(_) => TypeSig::String,
                other => other.clone(),
            };
            let inner = self.elab_expr_expect(&args[0], &expected)?;
            let ty = TypeSig::Typedecl { name: name.to_string(), base: Box::new(td.base) };
            return Ok(HExpr::new(ty, pos, HExprKind::Inject { value: Box::new(inner) }));
        }
        if self.el.u.is_concept(name) {
            self.err(&pos, format!("`{name}` is a concept and cannot be constructed"));
            return Err(());
        }
        let fields: Vec<(String, TypeSig)> = match self.el.u.entities.get(name) {
            Some(info) => {
                info.ctor_fields.iter().map(|f| (f.name.clone(), f.ty.clone())).collect()
            }
            None => {
                self.err(&pos, format!("unknown type `{name}`"));
                return Err(());
            }
        };
        if !targs.is_empty() {
            self.err(&pos, format!("`{name}` does not take type arguments"));
            return Err(());
        }
        if args.len() != fields.len() {
            let names: Vec<&str> = fields.iter().map(|(n, _)| n.as_str()).collect();
            self.err(
                &pos,
                format!(
                    "`{name}` is constructed with {} values ({}), got {}",
                    fields.len(),
                    names.join(", "),
                    args.len()
                ),
            );
            return Err(());
        }
        let mut hargs = Vec::new();
        for (arg, (_, fty)) in args.iter().zip(&fields) {
            hargs.push(self.elab_expr_expect(arg, fty)?);
        }
        self.record_check_edges(name, &pos);
        Ok(HExpr::new(
            TypeSig::Nominal(name.to_string()),
            pos,
            HExprKind::Construct { entity: name.to_string(), args: hargs },
        ))
    }

    fn elab_updates(
        &mut self,
        recv_ty: &TypeSig,
        updates: &[(String, ast::Expr)],
        pos: &SourcePos,
    ) -> ERes<Vec<(String, HExpr)>> {
        let fields: Vec<(String, TypeSig)> = match recv_ty {
            TypeSig::Record(props) => props.clone(),
            TypeSig::Nominal(n) => {
                let Some(info) = self.el.u.type_info(n) else {
                    self.err(pos, format!("`{n}` has no fields"));
                    return Err(());
                };
                let mut fields = Vec::new();
                for owner in info.lineage.clone() {
                    if let Some(oi) = self.el.u.type_info(&owner) {
                        for f in &oi.own_fields {
                            fields.push((f.name.clone(), f.ty.clone()));
                        }
                    }
                }
                fields
            }
            other => {
                self.err(pos, format!("`{other}` cannot be updated with `.{{...}}`"));
                return Err(());
            }
        };
        self.old_frames.push(fields.clone());
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for (name, val) in updates {
            let Some((_, fty)) = fields.iter().find(|(n, _)| n == name) else {
                self.err(pos, format!("`{recv_ty}` has no field `{name}`"));
                self.old_frames.pop();
                return Err(());
            };
            if !seen.insert(name.clone()) {
                self.err(pos, format!("field `{name}` updated twice"));
                self.old_frames.pop();
                return Err(());
            }
            let fty = fty.clone();
            match self.elab_expr_expect(val, &fty) {
                Ok(h) => out.push((name.clone(), h)),
                Err(()) => {
                    self.old_frames.pop();
                    return Err(());
                }
            }
        }
        self.old_frames.pop();
        Ok(out)
    }

    fn elab_args(
        &mut self,
        params: &[(String, TypeSig)],
        args: &[ast::Expr],
        pos: &SourcePos,
    ) -> ERes<Vec<HExpr>> {
        let value_params: Vec<&(String, TypeSig)> =
            params.iter().filter(|(n, _)| n != "this").collect();
        if args.len() != value_params.len() {
            self.err(
                pos,
                format!("expected {} arguments, got {}", value_params.len(), args.len()),
            );
            return Err(());
        }
        let mut out = Vec::new();
        for (arg, (_, pty)) in args.iter().zip(&value_params[..]) {
            out.push(self.elab_expr_expect(arg, pty)?);
        }
        Ok(out)
    }

    fn elab_static(
        &mut self,
        owner: &str,
        name: &str,
        targs: &[ast::TypeExpr],
        args: &Option<Vec<ast::Expr>>,
        recursive: bool,
        pos: SourcePos,
    ) -> ERes<HExpr> {
        if owner == "String" && name == "concat" {
            let Some(args) = args else {
                self.err(&pos, "`String::concat` is a function; call it".to_string());
                return Err(());
            };
            if args.len() < 2 {
                self.err(&pos, "`String::concat` takes at least two strings".to_string());
                return Err(());
            }
            let mut hs = Vec::new();
            for a in args {
                hs.push(self.elab_expr_expect(a, &TypeSig::String)?);
            }
            // Folded into binary concatenations during lowering.
            return Ok(HExpr::new(
                TypeSig::String,
                pos,
                HExprKind::Call { func: "String::concat".to_string(), args: hs },
            ));
        }
        if owner == "List" || owner == "Map" {
            // Static form of a catalog operation: first argument is the
            // container.
            let Some(args) = args else {
                self.err(&pos, format!("`{owner}::{name}` is an operation; call it"));
                return Err(());
            };
            let Some((first, rest)) = args.split_first() else {
                self.err(&pos, format!("`{owner}::{name}` needs a container argument"));
                return Err(());
            };
            let recv = self.elab_expr(first)?;
            let ok = match (&recv.ty, owner) {
                (TypeSig::List(_), "List") | (TypeSig::Map(..), "Map") => true,
                _ => false,
            };
            if !ok {
                self.err(&pos, format!("`{owner}::{name}` expects a {owner}, found `{}`", recv.ty));
                return Err(());
            }
            return self.elab_functor(recv, name, targs, rest, pos);
        }
        if self.el.u.type_info(owner).is_none() {
            self.err(&pos, format!("unknown type `{owner}`"));
            return Err(());
        }
        let qual = method_fn_name(owner, name);
        match args {
            None => {
                // Constant access.
                if self.el.u.find_const(owner, name).is_none() {
                    self.err(&pos, format!("`{owner}` has no constant `{name}`"));
                    return Err(());
                }
                let ty = self.el.ensure_result(&qual, &pos)?;
                self.record_call(alloc::vec![qual.clone()], Some(recursive), &pos);
                Ok(HExpr::new(ty, pos, HExprKind::Call { func: qual, args: Vec::new() }))
            }
            Some(args) => {
                let Some(sig) = self.el.sigs.get(&qual).cloned() else {
                    if self.el.u.find_const(owner, name).is_some() {
                        self.err(&pos, format!("`{owner}::{name}` is a constant, not a function"));
                    } else {
                        self.err(&pos, format!("`{owner}` has no function `{name}`"));
                    }
                    return Err(());
                };
                if !matches!(sig.kind, FnKind::Static { .. }) {
                    self.err(&pos, format!("`{owner}::{name}` is not a static function"));
                    return Err(());
                }
                let hargs = self.elab_args(&sig.params, args, &pos)?;
                self.record_call(alloc::vec![qual.clone()], Some(recursive), &pos);
                let ty = self.el.ensure_result(&qual, &pos)?;
                Ok(HExpr::new(ty, pos, HExprKind::Call { func: qual, args: hargs }))
            }
        }
    }

    /// Resolution for a method on a nominal receiver: which function body
    /// runs, and whether dispatch must wait for the runtime entity.
    fn method_targets(&mut self, type_name: &str, method: &str, sig_owner: &str) -> (String, Vec<String>) {
        if self.el.u.is_entity(type_name) {
            let owner = self
                .el
                .u
                .find_method(type_name, method)
                .map(|m| m.owner.clone())
                .unwrap_or_else(|| sig_owner.to_string());
            let callee = method_fn_name(&owner, method);
            return (owner, alloc::vec![callee]);
        }
        // Concept receiver: collect every implementor's resolution.
        let mut callees = Vec::new();
        for e in self.el.u.concrete_of(type_name) {
            if let Some(m) = self.el.u.find_method(&e, method) {
                callees.push(method_fn_name(&m.owner, method));
            }
        }
        callees.sort();
        callees.dedup();
        (sig_owner.to_string(), callees)
    }

    fn method_result(
        &mut self,
        owner: &str,
        method: &str,
        sig: &crate::types::MethodSig,
        pos: &SourcePos,
    ) -> ERes<TypeSig> {
        if let Some(r) = &sig.result {
            return Ok(r.clone());
        }
        self.el.ensure_result(&method_fn_name(owner, method), pos)
    }

    fn elab_method(
        &mut self,
        recv: HExpr,
        name: &str,
        targs: &[ast::TypeExpr],
        args: &[ast::Expr],
        recursive: bool,
        pos: SourcePos,
    ) -> ERes<HExpr> {
        let TypeSig::Nominal(type_name) = recv.ty.clone() else { unreachable!() };
        if !targs.is_empty() {
            self.err(&pos, "methods do not take type arguments".to_string());
            return Err(());
        }
        let Some(sig) = self.el.u.find_method(&type_name, name).cloned() else {
            self.err(&pos, format!("`{type_name}` has no method `{name}`"));
            return Err(());
        };
        if sig.is_ref {
            self.err(
                &pos,
                format!("`{name}` changes its receiver; call it as `ref recv.{name}(...)`"),
            );
            return Err(());
        }
        let hargs = self.elab_args(&sig.params, args, &pos)?;
        let is_concept_recv = self.el.u.is_concept(&type_name);
        let needs_dispatch = is_concept_recv
            && (sig.is_abstract
                || self.el.u.concrete_of(&type_name).iter().any(|e| {
                    self.el
                        .u
                        .find_method(e, name)
                        .map(|m| m.owner != sig.owner)
                        .unwrap_or(false)
                }));
        let (owner, callees) = self.method_targets(&type_name, name, &sig.owner);
        self.record_call(callees, Some(recursive), &pos);
        let result = self.method_result(&owner, name, &sig, &pos)?;
        let target = if needs_dispatch {
            MethodTarget::Dynamic { concept: type_name }
        } else {
            MethodTarget::Static { owner }
        };
        Ok(HExpr::new(
            result,
            pos,
            HExprKind::MethodCall {
                receiver: Box::new(recv),
                target,
                method: name.to_string(),
                args: hargs,
            },
        ))
    }

    // ----- functors -----

    fn elab_lambda(
        &mut self,
        e: &ast::Expr,
        param_tys: &[TypeSig],
        need_bool: bool,
    ) -> ERes<HExpr> {
        let ExprKind::Lambda { is_pred, params, body } = &e.kind else {
            self.err(&e.pos, "expected a `fn(...) =>` or `pred(...) =>` argument".to_string());
            return Err(());
        };
        if need_bool && !is_pred {
            self.err(&e.pos, "this operation takes a `pred(...) =>` argument".to_string());
            return Err(());
        }
        if !need_bool && *is_pred {
            self.err(&e.pos, "this operation takes a `fn(...) =>` argument".to_string());
            return Err(());
        }
        if params.len() != param_tys.len() {
            self.err(
                &e.pos,
                format!("this lambda takes {} parameters, got {}", param_tys.len(), params.len()),
            );
            return Err(());
        }
        self.lambda_frames.push(LambdaFrame { scope_floor: self.scopes.len(), captures: Vec::new() });
        self.push_scope();
        let mut hp = Vec::new();
        for (p, ty) in params.iter().zip(param_tys) {
            self.declare(p.clone(), ty.clone(), false, true, &e.pos);
            hp.push((p.clone(), ty.clone()));
        }
        let hbody = self.elab_expr(body);
        self.pop_scope();
        let frame = self.lambda_frames.pop().unwrap();
        let hbody = hbody?;
        if *is_pred && hbody.ty != TypeSig::Bool {
            self.err(&e.pos, format!("a `pred` must produce `Bool`, found `{}`", hbody.ty));
            return Err(());
        }
        let ty = hbody.ty.clone();
        Ok(HExpr::new(
            ty,
            e.pos.clone(),
            HExprKind::Lambda {
                params: hp,
                body: Box::new(hbody),
                captures: frame.captures,
                is_pred: *is_pred,
            },
        ))
    }

    fn elab_functor(
        &mut self,
        recv: HExpr,
        name: &str,
        targs: &[ast::TypeExpr],
        args: &[ast::Expr],
        pos: SourcePos,
    ) -> ERes<HExpr> {
        let mut rtargs = Vec::new();
        for t in targs {
            rtargs.push(self.resolve(t)?);
        }
        let check_targs = |cx: &mut Self, expected: &[TypeSig]| -> ERes<()> {
            if rtargs.is_empty() {
                return Ok(());
            }
            if rtargs.len() != expected.len() || rtargs != expected {
                let shown: Vec<String> = expected.iter().map(|t| format!("{t}")).collect();
                cx.err(
                    &pos,
                    format!("type arguments do not match; expected <{}>", shown.join(", ")),
                );
                return Err(());
            }
            Ok(())
        };
        let arity = |cx: &mut Self, n: usize| -> ERes<()> {
            if args.len() != n {
                cx.err(&pos, format!("`{name}` takes {n} argument(s), got {}", args.len()));
                Err(())
            } else {
                Ok(())
            }
        };

        match recv.ty.clone() {
            TypeSig::List(elem) => {
                let elem = (*elem).clone();
                let (hargs, result, expected_targs): (Vec<HExpr>, TypeSig, Vec<TypeSig>) =
                    match name {
                        "size" => {
                            arity(self, 0)?;
                            (Vec::new(), TypeSig::Nat, Vec::new())
                        }
                        "get" => {
                            arity(self, 1)?;
                            let i = self.elab_expr_expect(&args[0], &TypeSig::Nat)?;
                            (alloc::vec![i], elem.clone(), Vec::new())
                        }
                        "slice" => {
                            arity(self, 2)?;
                            let a = self.elab_expr_expect(&args[0], &TypeSig::Nat)?;
                            let b = self.elab_expr_expect(&args[1], &TypeSig::Nat)?;
                            (alloc::vec![a, b], recv.ty.clone(), Vec::new())
                        }
                        "concat" => {
                            arity(self, 1)?;
                            let o = self.elab_expr_expect(&args[0], &recv.ty)?;
                            (alloc::vec![o], recv.ty.clone(), Vec::new())
                        }
                        "pushBack" => {
                            arity(self, 1)?;
                            let v = self.elab_expr_expect(&args[0], &elem)?;
                            (alloc::vec![v], recv.ty.clone(), Vec::new())
                        }
                        "contains" => {
                            arity(self, 1)?;
                            if !is_key_type(&elem) {
                                self.err(&pos, format!("`contains` needs key elements, found `{elem}`"));
                                return Err(());
                            }
                            let v = self.elab_expr_expect(&args[0], &elem)?;
                            (alloc::vec![v], TypeSig::Bool, Vec::new())
                        }
                        "map" => {
                            arity(self, 1)?;
                            let f = self.elab_lambda(&args[0], &[elem.clone()], false)?;
                            let u = f.ty.clone();
                            (alloc::vec![f], TypeSig::list(u.clone()), alloc::vec![u])
                        }
                        "filter" => {
                            arity(self, 1)?;
                            let p = self.elab_lambda(&args[0], &[elem.clone()], true)?;
                            (alloc::vec![p], recv.ty.clone(), Vec::new())
                        }
                        "has" => {
                            arity(self, 1)?;
                            let p = self.elab_lambda(&args[0], &[elem.clone()], true)?;
                            (alloc::vec![p], TypeSig::Bool, Vec::new())
                        }
                        "find" => {
                            arity(self, 1)?;
                            let p = self.elab_lambda(&args[0], &[elem.clone()], true)?;
                            (alloc::vec![p], TypeSig::optional(elem.clone()), Vec::new())
                        }
                        "count" => {
                            arity(self, 1)?;
                            let p = self.elab_lambda(&args[0], &[elem.clone()], true)?;
                            (alloc::vec![p], TypeSig::Nat, Vec::new())
                        }
                        "allOf" => {
                            arity(self, 1)?;
                            let p = self.elab_lambda(&args[0], &[elem.clone()], true)?;
                            (alloc::vec![p], TypeSig::Bool, Vec::new())
                        }
                        "unique" => {
                            arity(self, 1)?;
                            let p =
                                self.elab_lambda(&args[0], &[elem.clone(), elem.clone()], true)?;
                            (alloc::vec![p], TypeSig::Bool, Vec::new())
                        }
                        "sum" => {
                            arity(self, 0)?;
                            if !is_numeric(&elem) {
                                self.err(&pos, format!("`sum` needs numeric elements, found `{elem}`"));
                                return Err(());
                            }
                            (Vec::new(), elem.clone(), Vec::new())
                        }
                        "sumOf" => {
                            arity(self, 1)?;
                            let f = self.elab_lambda(&args[0], &[elem.clone()], false)?;
                            let u = f.ty.clone();
                            if !is_numeric(&u) {
                                self.err(&pos, format!("`sumOf` must produce numbers, found `{u}`"));
                                return Err(());
                            }
                            (alloc::vec![f], u.clone(), alloc::vec![u])
                        }
                        "reduce" => {
                            arity(self, 2)?;
                            let init = self.elab_expr(&args[0])?;
                            let u = init.ty.clone();
                            let f = self.elab_lambda(&args[1], &[u.clone(), elem.clone()], false)?;
                            if f.ty != u {
                                self.err(
                                    &pos,
                                    format!("`reduce` step must produce `{u}`, found `{}`", f.ty),
                                );
                                return Err(());
                            }
                            (alloc::vec![init, f], u.clone(), alloc::vec![u])
                        }
                        "maxArg" => {
                            arity(self, 1)?;
                            let f = self.elab_lambda(&args[0], &[elem.clone()], false)?;
                            let u = f.ty.clone();
                            if !is_orderable(&u) {
                                self.err(&pos, format!("`maxArg` needs a comparable measure, found `{u}`"));
                                return Err(());
                            }
                            (alloc::vec![f], elem.clone(), alloc::vec![u])
                        }
                        "max" => {
                            arity(self, 0)?;
                            if !is_orderable(&elem) {
                                self.err(&pos, format!("`max` needs comparable elements, found `{elem}`"));
                                return Err(());
                            }
                            (Vec::new(), elem.clone(), Vec::new())
                        }
                        "zip" => {
                            arity(self, 1)?;
                            let other = self.elab_expr(&args[0])?;
                            let TypeSig::List(b) = other.ty.clone() else {
                                self.err(&pos, format!("`zip` takes another list, found `{}`", other.ty));
                                return Err(());
                            };
                            let b = (*b).clone();
                            let result = TypeSig::list(TypeSig::Tuple(alloc::vec![
                                elem.clone(),
                                b.clone()
                            ]));
                            (alloc::vec![other], result, alloc::vec![elem.clone(), b])
                        }
                        "join" => {
                            arity(self, 2)?;
                            let other = self.elab_expr(&args[0])?;
                            let TypeSig::List(b) = other.ty.clone() else {
                                self.err(&pos, format!("`join` takes another list, found `{}`", other.ty));
                                return Err(());
                            };
                            let b = (*b).clone();
                            let p = self.elab_lambda(&args[1], &[elem.clone(), b.clone()], true)?;
                            let result = TypeSig::list(TypeSig::Tuple(alloc::vec![
                                elem.clone(),
                                b.clone()
                            ]));
                            (alloc::vec![other, p], result, Vec::new())
                        }
                        _ => {
                            self.err(&pos, format!("lists have no operation `{name}`"));
                            return Err(());
                        }
                    };
                check_targs(self, &expected_targs)?;
                Ok(HExpr::new(
                    result,
                    pos,
                    HExprKind::FunctorCall {
                        container: Box::new(recv),
                        name: name.to_string(),
                        args: hargs,
                    },
                ))
            }
            TypeSig::Map(k, v) => {
                let (k, v) = ((*k).clone(), (*v).clone());
                let (hargs, result, expected_targs): (Vec<HExpr>, TypeSig, Vec<TypeSig>) =
                    match name {
                        "size" => {
                            arity(self, 0)?;
                            (Vec::new(), TypeSig::Nat, Vec::new())
                        }
                        "get" => {
                            arity(self, 1)?;
                            let kk = self.elab_expr_expect(&args[0], &k)?;
                            (alloc::vec![kk], v.clone(), Vec::new())
                        }
                        "has" => {
                            arity(self, 1)?;
                            let kk = self.elab_expr_expect(&args[0], &k)?;
                            (alloc::vec![kk], TypeSig::Bool, Vec::new())
                        }
                        "map" => {
                            arity(self, 1)?;
                            let f = self.elab_lambda(&args[0], &[k.clone(), v.clone()], false)?;
                            let u = f.ty.clone();
                            (
                                alloc::vec![f],
                                TypeSig::map(k.clone(), u.clone()),
                                alloc::vec![u],
                            )
                        }
                        "filter" => {
                            arity(self, 1)?;
                            let p = self.elab_lambda(&args[0], &[k.clone(), v.clone()], true)?;
                            (alloc::vec![p], recv.ty.clone(), Vec::new())
                        }
                        _ => {
                            self.err(&pos, format!("maps have no operation `{name}`"));
                            return Err(());
                        }
                    };
                check_targs(self, &expected_targs)?;
                Ok(HExpr::new(
                    result,
                    pos,
                    HExprKind::FunctorCall {
                        container: Box::new(recv),
                        name: name.to_string(),
                        args: hargs,
                    },
                ))
            }
            _ => unreachable!("caller checked the container type"),
        }
    }

    // ----- operators -----

    fn elab_unary(&mut self, op: ast::UnaryOp, operand: &ast::Expr, pos: SourcePos) -> ERes<HExpr> {
        match op {
            ast::UnaryOp::Not => {
                let h = self.elab_expr_expect(operand, &TypeSig::Bool)?;
                Ok(HExpr::new(
                    TypeSig::Bool,
                    pos,
                    HExprKind::Unary { op: HUnary::Not, operand: Box::new(h) },
                ))
            }
            ast::UnaryOp::Neg => {
                // Fold a minus applied directly to a literal so `Int`'s most
                // negative value is writable.
                if matches!(
                    operand.kind,
                    ExprKind::NumLit { .. } | ExprKind::TypedLit { .. }
                ) {
                    let folded = ast::Expr {
                        id: 0,
                        pos: pos.clone(),
                        kind: ExprKind::Unary {
                            op: ast::UnaryOp::Neg,
                            operand: Box::new(operand.clone()),
                        },
                    };
                    let (v, ty) = self.elab_literal(&folded)?;
                    return Ok(HExpr::new(ty, pos, HExprKind::Const(v)));
                }
                let h = self.elab_expr(operand)?;
                let base = base_of(&h.ty);
                let signed = matches!(
                    base,
                    TypeSig::Int | TypeSig::BigInt | TypeSig::Float | TypeSig::Decimal | TypeSig::Rational
                );
                if !signed {
                    self.err(&pos, format!("cannot negate a `{}`", h.ty));
                    return Err(());
                }
                let ty = h.ty.clone();
                Ok(HExpr::new(ty, pos, HExprKind::Unary { op: HUnary::Neg, operand: Box::new(h) }))
            }
        }
    }

    fn elab_binary(
        &mut self,
        op: ast::BinaryOp,
        lhs: &ast::Expr,
        rhs: &ast::Expr,
        pos: SourcePos,
    ) -> ERes<HExpr> {
        use ast::BinaryOp as B;
        let mk = |l: HExpr, op: HBinary, r: HExpr, ty: TypeSig, pos: SourcePos| {
            HExpr::new(ty, pos, HExprKind::Binary { op, lhs: Box::new(l), rhs: Box::new(r) })
        };
        match op {
            B::And | B::Or | B::Implies => {
                let l = self.elab_expr_expect(lhs, &TypeSig::Bool)?;
                let r = self.elab_expr_expect(rhs, &TypeSig::Bool)?;
                let hop = match op {
                    B::And => HBinary::And,
                    B::Or => HBinary::Or,
                    _ => HBinary::Implies,
                };
                Ok(mk(l, hop, r, TypeSig::Bool, pos))
            }
            B::Add | B::Sub | B::Mul | B::Div => {
                let l = self.elab_expr(lhs)?;
                let r = self.elab_expr(rhs)?;
                if l.ty != r.ty {
                    self.err(
                        &pos,
                        format!("arithmetic needs matching kinds: `{}` vs `{}`", l.ty, r.ty),
                    );
                    return Err(());
                }
                if !is_numeric(&l.ty) {
                    self.err(&pos, format!("`{}` does not support arithmetic", l.ty));
                    return Err(());
                }
                let hop = match op {
                    B::Add => HBinary::Add,
                    B::Sub => HBinary::Sub,
                    B::Mul => HBinary::Mul,
                    _ => HBinary::Div,
                };
                let ty = l.ty.clone();
                Ok(mk(l, hop, r, ty, pos))
            }
            B::Lt | B::Le | B::Gt | B::Ge => {
                let l = self.elab_expr(lhs)?;
                let r = self.elab_expr(rhs)?;
                if l.ty != r.ty {
                    self.err(
                        &pos,
                        format!("comparison needs matching kinds: `{}` vs `{}`", l.ty, r.ty),
                    );
                    return Err(());
                }
                if !is_orderable(&l.ty) {
                    self.err(&pos, format!("`{}` is not ordered", l.ty));
                    return Err(());
                }
                let hop = match op {
                    B::Lt => HBinary::Lt,
                    B::Le => HBinary::Le,
                    B::Gt => HBinary::Gt,
                    _ => HBinary::Ge,
                };
                Ok(mk(l, hop, r, TypeSig::Bool, pos))
            }
            B::Eq | B::Neq => {
                let l = self.elab_expr(lhs)?;
                let r = self.elab_expr(rhs)?;
                let hop = if op == B::Eq { HBinary::Eq } else { HBinary::Neq };
                // `x == none` tests the none membership of any optional
                // value, key or not.
                let none_side = l.ty == TypeSig::None || r.ty == TypeSig::None;
                if none_side {
                    let other = if l.ty == TypeSig::None { &r.ty } else { &l.ty };
                    if *other != TypeSig::None
                        && !other.members().iter().any(|m| *m == TypeSig::None)
                    {
                        self.err(&pos, format!("`{other}` can never be `none`"));
                        return Err(());
                    }
                    return Ok(mk(l, hop, r, TypeSig::Bool, pos));
                }
                if !is_key_type(&l.ty) || !is_key_type(&r.ty) {
                    let t = if is_key_type(&l.ty) { &r.ty } else { &l.ty };
                    self.err(&pos, format!("`{t}` does not support `==`"));
                    return Err(());
                }
                if !is_subtype(&self.el.u, &l.ty, &r.ty) && !is_subtype(&self.el.u, &r.ty, &l.ty) {
                    self.err(&pos, format!("cannot compare `{}` with `{}`", l.ty, r.ty));
                    return Err(());
                }
                Ok(mk(l, hop, r, TypeSig::Bool, pos))
            }
        }
    }

    // ----- flow tests -----

    fn elab_flow_op(&mut self, subject_ty: &TypeSig, op: &ast::FlowOp) -> ERes<HFlowOp> {
        let test = match &op.kind {
            ast::FlowOpKind::Special(s) => match s {
                ast::FlowSpecial::None => HTest::IsNone,
                ast::FlowSpecial::Some => HTest::IsSome,
                ast::FlowSpecial::Ok => HTest::IsOk,
                ast::FlowSpecial::Err => HTest::IsErr,
                ast::FlowSpecial::Result => HTest::IsResult,
            },
            ast::FlowOpKind::Type(t) => HTest::Type(self.resolve(t)?),
            ast::FlowOpKind::Literal(e) => {
                let (v, ty) = self.elab_literal(e)?;
                if let Value::None = v {
                    HTest::IsNone
                } else {
                    if !is_subtype(&self.el.u, &ty, subject_ty)
                        && !is_subtype(&self.el.u, subject_ty, &ty)
                    {
                        self.err(&op.pos, format!("`{ty}` can never equal a `{subject_ty}`"));
                        return Err(());
                    }
                    HTest::Literal(v)
                }
            }
        };
        let (mut pass, mut fail) = narrow(&self.el.u, subject_ty, &test);
        if op.negated {
            core::mem::swap(&mut pass, &mut fail);
        }
        let Some(t_pass) = pass else {
            self.err(&op.pos, format!("this test never passes for a `{subject_ty}`"));
            return Err(());
        };
        let Some(t_fail) = fail else {
            self.err(&op.pos, format!("this test always passes for a `{subject_ty}`"));
            return Err(());
        };
        Ok(HFlowOp { test, negated: op.negated, t_pass, t_fail, pos: op.pos.clone() })
    }
}

fn wrap_typedecl_chain(base: &TypeSig, inner: Value) -> Value {
    match base {
        TypeSig::Typedecl { name, base } => Value::Typedecl {
            name: name.clone(),
            value: Box::new(wrap_typedecl_chain(base, inner)),
        },
        _ => inner,
    }
}

fn is_numeric(t: &TypeSig) -> bool {
    matches!(
        base_of(t),
        TypeSig::Nat
            | TypeSig::Int
            | TypeSig::BigNat
            | TypeSig::BigInt
            | TypeSig::Float
            | TypeSig::Decimal
            | TypeSig::Rational
    )
}

fn is_orderable(t: &TypeSig) -> bool {
    is_numeric(t) || matches!(base_of(t), TypeSig::String | TypeSig::ASCIIString)
}

/// Splits `t` into the part where `test` passes and the part where it
/// fails; `None` on a side means the side is impossible.
fn narrow(u: &TypeUniverse, t: &TypeSig, test: &HTest) -> (Option<TypeSig>, Option<TypeSig>) {
    match test {
        HTest::IsNone => split(t, |m| *m == TypeSig::None),
        HTest::IsSome => {
            let (pass, fail) = split(t, |m| *m == TypeSig::None);
            (fail, pass)
        }
        HTest::IsOk => split(t, |m| matches!(m, TypeSig::Ok(_))),
        HTest::IsErr => split(t, |m| matches!(m, TypeSig::Err(_))),
        HTest::IsResult => split(t, |m| matches!(m, TypeSig::Ok(_) | TypeSig::Err(_))),
        HTest::Type(target) => narrow_by_type(u, t, target),
        HTest::Literal(_) => {
            // The failing side can still hold any value of the subject's
            // type, and the passing side is at most the subject itself.
            (Some(t.clone()), Some(t.clone()))
        }
    }
}

fn split(t: &TypeSig, pred: impl Fn(&TypeSig) -> bool) -> (Option<TypeSig>, Option<TypeSig>) {
    let mut pass = Vec::new();
    let mut fail = Vec::new();
    for m in t.members() {
        if pred(m) {
            pass.push(m.clone());
        } else {
            fail.push(m.clone());
        }
    }
    (
        (!pass.is_empty()).then(|| canonical_union(pass)),
        (!fail.is_empty()).then(|| canonical_union(fail)),
    )
}

/// Type-test narrowing. A member wholly inside the target moves to the pass
/// side; a member the target refines (the target is its subtype) passes as
/// the target but also stays possible on the fail side.
pub(crate) fn narrow_by_type(
    u: &TypeUniverse,
    t: &TypeSig,
    target: &TypeSig,
) -> (Option<TypeSig>, Option<TypeSig>) {
    let mut pass = Vec::new();
    let mut fail = Vec::new();
    for m in t.members() {
        if is_subtype(u, m, target) {
            pass.push(m.clone());
        } else if is_subtype(u, target, m) {
            pass.push(target.clone());
            fail.push(m.clone());
        } else if overlaps(u, m, target) {
            pass.push(intersect(u, m, target));
            fail.push(m.clone());
        } else {
            fail.push(m.clone());
        }
    }
    (
        (!pass.is_empty()).then(|| canonical_union(pass)),
        (!fail.is_empty()).then(|| canonical_union(fail)),
    )
}

/// Conservative overlap for nominals that share concrete implementors.
fn overlaps(u: &TypeUniverse, a: &TypeSig, b: &TypeSig) -> bool {
    if let (TypeSig::Nominal(x), TypeSig::Nominal(y)) = (a, b) {
        let xs = u.concrete_of(x);
        let ys = u.concrete_of(y);
        return xs.iter().any(|e| ys.contains(e));
    }
    false
}

fn intersect(u: &TypeUniverse, a: &TypeSig, b: &TypeSig) -> TypeSig {
    if let (TypeSig::Nominal(x), TypeSig::Nominal(y)) = (a, b) {
        let ys = u.concrete_of(y);
        let shared: Vec<TypeSig> = u
            .concrete_of(x)
            .into_iter()
            .filter(|e| ys.contains(e))
            .map(TypeSig::Nominal)
            .collect();
        if !shared.is_empty() {
            return canonical_union(shared);
        }
    }
    b.clone()
}

fn member_covered(
    u: &TypeUniverse,
    member: &TypeSig,
    covers: &[TypeSig],
    literal_none: bool,
    literal_bools: &BTreeSet<bool>,
) -> bool {
    if covers.iter().any(|c| is_subtype(u, member, c)) {
        return true;
    }
    match member {
        TypeSig::None if literal_none => true,
        TypeSig::Bool if literal_bools.len() == 2 => true,
        TypeSig::Nominal(n) if u.is_concept(n) => {
            let imps = u.concrete_of(n);
            !imps.is_empty()
                && imps.iter().all(|e| {
                    let et = TypeSig::Nominal(e.clone());
                    covers.iter().any(|c| is_subtype(u, &et, c))
                })
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{expand_adts, parse_program};

    fn elab(src: &str) -> ElabResult {
        let parsed = parse_program(&[("test.lx".to_string(), src.to_string())]);
        assert!(
            !parsed.diags.has_errors(),
            "parse failed:\n{}",
            parsed.diags.render()
        );
        elaborate(&expand_adts(parsed.program.unwrap()))
    }

    fn expect_ok(src: &str) -> HProgram {
        let r = elab(src);
        assert!(!r.diags.has_errors(), "unexpected errors:\n{}", r.diags.render());
        r.program.unwrap()
    }

    fn expect_error(src: &str, needle: &str) {
        let r = elab(src);
        assert!(r.diags.has_errors(), "expected an error mentioning {needle:?}");
        let text = r.diags.render();
        assert!(text.contains(needle), "no {needle:?} in:\n{text}");
    }

    fn expect_warning(src: &str, needle: &str) {
        let r = elab(src);
        assert!(!r.diags.has_errors(), "unexpected errors:\n{}", r.diags.render());
        let text = r.diags.render();
        assert!(text.contains(needle), "no {needle:?} in:\n{text}");
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
"#;

    #[test]
    fn tree_program_elaborates() {
        let p = expect_ok(TREE);
        assert!(p.functions.contains_key("ITree::sizeOf"));
        assert!(p.functions.contains_key("ITree::has"));
        assert!(p.functions.contains_key("ITree::isEmpty"));
        assert!(p.functions.contains_key("__inv_ITree_0"));
        let invs = &p.invariants["Node"];
        assert_eq!(invs.len(), 1);
        assert_eq!(invs[0].func, "__inv_ITree_0");
        assert_eq!(invs[0].owner, "ITree");
        // `has` is recursive and its sites are tagged; nothing dynamic is
        // declared, so the concept body is the single target.
        let has = &p.functions["ITree::has"];
        assert!(has.recursive);
        assert_eq!(has.result, TypeSig::Bool);
    }

    #[test]
    fn construct_runs_through_invariants() {
        let p = expect_ok(concat!(
            r#"
datatype ITree using {
    size: Nat
} of
Nil {}
| Leaf { v: Int }
| Node { v: Int, l: ITree, r: ITree };

"#,
            "function three(): ITree {\n",
            "    return Node{3n, 5i, Leaf{1n, 1i}, Leaf{1n, 9i}};\n",
            "}\n"
        ));
        let f = &p.functions["three"];
        assert_eq!(f.result, TypeSig::Nominal("ITree".to_string()));
    }

    #[test]
    fn constructor_arity_is_checked() {
        expect_error(
            concat!(
                "entity Pair {\n",
                "    a: Int,\n",
                "    b: Int\n",
                "}\n",
                "function f(): Pair {\n",
                "    return Pair{1i};\n",
                "}\n"
            ),
            "constructed with 2 values (a, b)",
        );
    }

    #[test]
    fn flow_test_that_never_passes_is_an_error() {
        expect_error(
            "function f(x: Int): Bool {\n    return x?none;\n}\n",
            "never passes",
        );
    }

    #[test]
    fn flow_cast_that_always_passes_is_an_error() {
        expect_error(
            "function f(x: Int): Int {\n    return x@<Int>;\n}\n",
            "always passes",
        );
    }

    #[test]
    fn early_flow_narrows_and_returns_the_fail_side() {
        let p = expect_ok(concat!(
            "function f(x: Int | None): Int | None {\n",
            "    let y = x ?? !none;\n",
            "    return y + 1i;\n",
            "}\n"
        ));
        let expected = canonical_union(alloc::vec![TypeSig::Int, TypeSig::None]);
        assert_eq!(p.functions["f"].result, expected);
    }

    #[test]
    fn early_flow_fail_side_must_fit_the_result() {
        expect_error(
            "function f(x: Int | None): Int {\n    let y = x ?? some;\n    return 1i;\n}\n",
            "returned `None` is not a `Int`",
        );
    }

    #[test]
    fn statement_narrow_rebinds() {
        let p = expect_ok(
            "function f(x: Int | None): Int {\n    x@<Int>;\n    return x;\n}\n",
        );
        assert_eq!(p.functions["f"].result, TypeSig::Int);
    }

    #[test]
    fn definite_assignment_requires_all_branches() {
        expect_error(
            concat!(
                "function f(c: Bool): Int {\n",
                "    var x: Int;\n",
                "    if (c) {\n",
                "        x = 1i;\n",
                "    }\n",
                "    return x;\n",
                "}\n"
            ),
            "may be used before it is assigned",
        );
    }

    #[test]
    fn definite_assignment_accepts_both_branches() {
        expect_ok(concat!(
            "function f(c: Bool): Int {\n",
            "    var x: Int;\n",
            "    if (c) {\n",
            "        x = 1i;\n",
            "    } else {\n",
            "        x = 2i;\n",
            "    }\n",
            "    return x;\n",
            "}\n"
        ));
    }

    #[test]
    fn diverging_branch_counts_as_assigning() {
        expect_ok(concat!(
            "function f(c: Bool): Int {\n",
            "    var x: Int;\n",
            "    if (c) {\n",
            "        return 0i;\n",
            "    } else {\n",
            "        x = 2i;\n",
            "    }\n",
            "    return x;\n",
            "}\n"
        ));
    }

    #[test]
    fn match_must_be_exhaustive() {
        expect_error(
            concat!(
                "function f(x: Int | None): Int {\n",
                "    match (x) {\n",
                "        Int => { return $; }\n",
                "    }\n",
                "}\n"
            ),
            "not exhaustive",
        );
    }

    #[test]
    fn flow_if_binds_both_sides() {
        let p = expect_ok(concat!(
            "function f(x: Int | None): Int {\n",
            "    if none (x) {\n",
            "        return 0i;\n",
            "    } else {\n",
            "        return $ + 1i;\n",
            "    }\n",
            "}\n"
        ));
        assert_eq!(p.functions["f"].result, TypeSig::Int);
    }

    #[test]
    fn recursion_must_be_declared() {
        expect_error(
            concat!(
                "function f(x: Int): Int {\n",
                "    if (x < 1i) { return 0i; }\n",
                "    return f[recursive](x - 1i);\n",
                "}\n"
            ),
            "declare it `recursive`",
        );
    }

    #[test]
    fn recursive_sites_must_be_tagged() {
        expect_error(
            concat!(
                "recursive function f(x: Int): Int {\n",
                "    if (x < 1i) { return 0i; }\n",
                "    return f(x - 1i);\n",
                "}\n"
            ),
            "must be tagged `[recursive]`",
        );
    }

    #[test]
    fn superfluous_recursive_marking_warns() {
        expect_warning(
            "recursive function f(x: Int): Int {\n    return x;\n}\n",
            "marked recursive but never is",
        );
    }

    #[test]
    fn unsuffixed_literals_are_rejected() {
        expect_error(
            "function f(): Int {\n    return 5;\n}\n",
            "needs a kind suffix",
        );
    }

    #[test]
    fn none_comparison_needs_an_optional() {
        expect_error(
            "function f(x: Int): Bool {\n    return x == none;\n}\n",
            "can never be `none`",
        );
        expect_ok("function f(x: Int | None): Bool {\n    return x == none;\n}\n");
    }

    #[test]
    fn mixed_kind_arithmetic_is_rejected() {
        expect_error(
            "function f(x: Int, y: Nat): Int {\n    return x + y;\n}\n",
            "matching kinds",
        );
    }

    #[test]
    fn result_inference_conflicts_are_reported() {
        expect_error(
            concat!(
                "function f(c: Bool) {\n",
                "    if (c) { return 1i; }\n",
                "    return 1n;\n",
                "}\n"
            ),
            "cannot infer the return type",
        );
    }

    #[test]
    fn inference_cycles_need_a_declared_type() {
        expect_error(
            concat!(
                "recursive function f(x: Int) {\n",
                "    return g[recursive](x);\n",
                "}\n",
                "recursive function g(x: Int) {\n",
                "    return f[recursive](x);\n",
                "}\n"
            ),
            "cannot be inferred here",
        );
    }

    #[test]
    fn shadowing_is_rejected() {
        expect_error(
            concat!(
                "function f(x: Int): Int {\n",
                "    let x = 2i;\n",
                "    return x;\n",
                "}\n"
            ),
            "already defined",
        );
    }

    #[test]
    fn functor_pipeline_types_flow_through() {
        let p = expect_ok(concat!(
            "function f(l: List<Int>): List<Nat> {\n",
            "    return l.filter(pred(x) => x > 0i).map<Nat>(fn(x) => 1n);\n",
            "}\n"
        ));
        assert_eq!(p.functions["f"].result, TypeSig::list(TypeSig::Nat));
    }

    #[test]
    fn zip_and_maxarg_produce_pairs() {
        let p = expect_ok(concat!(
            "function maxPair(x: List<Int>, y: List<Int>): List<[Int, Int]> {\n",
            "    return List<[Int, Int]>{x.zip(y).maxArg<Int>(fn(p) => p.0 + p.1)};\n",
            "}\n"
        ));
        let expected = TypeSig::list(TypeSig::Tuple(alloc::vec![TypeSig::Int, TypeSig::Int]));
        assert_eq!(p.functions["maxPair"].result, expected);
    }

    #[test]
    fn lambda_captures_enclosing_locals() {
        let p = expect_ok(concat!(
            "function f(l: List<Int>, lo: Int): List<Int> {\n",
            "    return l.filter(pred(x) => x > lo);\n",
            "}\n"
        ));
        let f = &p.functions["f"];
        let HBody::Block(b) = &f.body else { panic!() };
        let HStmtKind::Return { value } = &b.stmts[0].kind else { panic!() };
        let HExprKind::FunctorCall { args, .. } = &value.kind else { panic!() };
        let HExprKind::Lambda { captures, .. } = &args[0].kind else { panic!() };
        assert_eq!(captures.len(), 1);
        assert_eq!(captures[0].0, "lo");
    }

    #[test]
    fn ref_methods_update_their_receiver() {
        let p = expect_ok(concat!(
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
        assert_eq!(p.functions["f"].result, TypeSig::Nat);
    }

    #[test]
    fn ref_methods_need_the_ref_statement() {
        expect_error(
            concat!(
                "entity Counter {\n",
                "    c: Nat;\n",
                "    method ref next(): Nat {\n",
                "        this.{c = $c + 1n};\n",
                "        return this.c;\n",
                "    }\n",
                "}\n",
                "function f(ctr: Counter): Nat {\n",
                "    return ctr.next();\n",
                "}\n"
            ),
            "call it as `ref",
        );
    }

    #[test]
    fn ref_calls_need_a_var_receiver() {
        expect_error(
            concat!(
                "entity Counter {\n",
                "    c: Nat;\n",
                "    method ref next(): Nat {\n",
                "        this.{c = $c + 1n};\n",
                "        return this.c;\n",
                "    }\n",
                "}\n",
                "function f(): Nat {\n",
                "    let ctr = Counter{0n};\n",
                "    ref ctr.next();\n",
                "    return ctr.c;\n",
                "}\n"
            ),
            "must be a `var`",
        );
    }

    #[test]
    fn typed_literals_validate_against_their_base() {
        expect_ok(concat!(
            "typedecl ValidZip = /[0-9]{5}/;\n",
            "typedecl Zipcode = StringOf<ValidZip>;\n",
            "function f(): Zipcode {\n",
            "    return \"40502\"Zipcode;\n",
            "}\n"
        ));
        expect_error(
            concat!(
                "typedecl ValidZip = /[0-9]{5}/;\n",
                "typedecl Zipcode = StringOf<ValidZip>;\n",
                "function f(): Zipcode {\n",
                "    return \"4050\"Zipcode;\n",
                "}\n"
            ),
            "does not match",
        );
    }

    #[test]
    fn numeric_typedecl_literals_and_arithmetic() {
        let p = expect_ok(concat!(
            "typedecl Celsius = Float;\n",
            "function warmer(c: Celsius): Celsius {\n",
            "    return c + 10.0_Celsius;\n",
            "}\n"
        ));
        let expected = TypeSig::Typedecl {
            name: "Celsius".to_string(),
            base: Box::new(TypeSig::Float),
        };
        assert_eq!(p.functions["warmer"].result, expected);
    }

    #[test]
    fn typedecl_value_accessor_unwraps() {
        let p = expect_ok(concat!(
            "typedecl Celsius = Float;\n",
            "function raw(c: Celsius): Float {\n",
            "    return c.value;\n",
            "}\n"
        ));
        assert_eq!(p.functions["raw"].result, TypeSig::Float);
    }

    #[test]
    fn examples_are_typechecked() {
        expect_error(
            concat!(
                "function f(x: Int): Int\n",
                "    examples [[1i] => true];\n",
                "{\n",
                "    return x;\n",
                "}\n"
            ),
            "expected `Int`, found `Bool`",
        );
    }

    #[test]
    fn consts_resolve_as_zero_arg_functions() {
        let p = expect_ok(concat!(
            "const limit: Nat = 10n;\n",
            "function f(x: Nat): Bool {\n",
            "    return x < limit;\n",
            "}\n"
        ));
        assert!(p.functions.contains_key("limit"));
        assert_eq!(p.functions["limit"].result, TypeSig::Nat);
        assert_eq!(p.entry_points, alloc::vec!["f".to_string()]);
    }

    #[test]
    fn dynamic_dispatch_is_detected() {
        let p = expect_ok(concat!(
            "concept Shape {\n",
            "    abstract method area(): Nat;\n",
            "}\n",
            "entity Square provides Shape {\n",
            "    s: Nat;\n",
            "    override method area(): Nat {\n",
            "        return this.s * this.s;\n",
            "    }\n",
            "}\n",
            "function f(sh: Shape): Nat {\n",
            "    return sh.area();\n",
            "}\n"
        ));
        let f = &p.functions["f"];
        let HBody::Block(b) = &f.body else { panic!() };
        let HStmtKind::Return { value } = &b.stmts[0].kind else { panic!() };
        let HExprKind::MethodCall { target, .. } = &value.kind else { panic!() };
        assert_eq!(
            *target,
            MethodTarget::Dynamic { concept: "Shape".to_string() }
        );
    }
}
