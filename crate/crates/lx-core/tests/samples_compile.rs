//! Every bundled sample parses, elaborates, round-trips through the
//! renderer, and the runnable ones behave as their comments promise.

use lx_core::eval::{value_eq, ErrorCode, Interp, Value};
use lx_core::frontend::expand::expand_adts;
use lx_core::frontend::parser::parse_program;
use lx_core::frontend::render::render_program;
use lx_core::hir::HProgram;
use lx_core::samples;
use lx_core::types::CheckMode;

fn compile(name: &str, src: &str) -> HProgram {
    let parsed = parse_program(&[(format!("{name}.lx"), src.to_string())]);
    assert!(!parsed.diags.has_errors(), "{name} parse failed:\n{}", parsed.diags.render());
    let r = elaborate_expanded(parsed.program.unwrap());
    assert!(!r.0, "{name} elaboration failed:\n{}", r.1);
    r.2.unwrap()
}

fn elaborate_expanded(
    prog: lx_core::frontend::ast::SurfaceProgram,
) -> (bool, String, Option<HProgram>) {
    let r = lx_core::hir::elaborate::elaborate(&expand_adts(prog));
    (r.diags.has_errors(), r.diags.render(), r.program)
}

#[test]
fn every_sample_compiles() {
    for (name, src) in samples::all() {
        compile(name, src);
    }
}

#[test]
fn every_sample_round_trips_through_the_renderer() {
    for (name, src) in samples::all() {
        let first = parse_program(&[(format!("{name}.lx"), src.to_string())]);
        assert!(!first.diags.has_errors(), "{name}: first parse failed");
        let text = render_program(first.program.as_ref().unwrap());
        let second = parse_program(&[(format!("{name}.lx"), text.clone())]);
        assert!(
            !second.diags.has_errors(),
            "{name}: rendered text failed to parse:\n{text}\n{}",
            second.diags.render()
        );
        assert_eq!(
            render_program(second.program.as_ref().unwrap()),
            text,
            "{name}: render is not a fixed point"
        );
    }
}

#[test]
fn tree_search_finds_members() {
    let p = compile("tree", samples::TREE);
    let mut it = Interp::new(&p, CheckMode::Test);
    let leaf = |v: i64| Value::Entity {
        name: "Leaf".to_string(),
        fields: vec![Value::Nat(1), Value::Int(v)],
    };
    let tree = Value::Entity {
        name: "Node".to_string(),
        fields: vec![Value::Nat(3), Value::Int(5), leaf(2), leaf(9)],
    };
    let has = |it: &mut Interp, t: &Value, x: i64| {
        it.call_function("ITree::has", vec![t.clone(), Value::Int(x)]).unwrap()
    };
    assert!(value_eq(&has(&mut it, &tree, 5), &Value::Bool(true)));
    assert!(value_eq(&has(&mut it, &tree, 2), &Value::Bool(true)));
    assert!(value_eq(&has(&mut it, &tree, 9), &Value::Bool(true)));
    assert!(value_eq(&has(&mut it, &tree, 4), &Value::Bool(false)));

    let empty = it.call_function("ITree::empty", vec![]).unwrap();
    let r = it.call_function("ITree::isEmpty", vec![empty]).unwrap();
    assert!(value_eq(&r, &Value::Bool(true)));
    let r = it.call_function("ITree::isEmpty", vec![tree]).unwrap();
    assert!(value_eq(&r, &Value::Bool(false)));
}

#[test]
fn bad_node_size_fails_the_invariant_in_test_mode() {
    let p = compile("tree", samples::TREE);
    let mut it = Interp::new(&p, CheckMode::Test);
    let bad = it.check_invariants(
        &Value::Entity {
            name: "Node".to_string(),
            fields: vec![
                Value::Nat(5),
                Value::Int(1),
                Value::Entity { name: "Nil".to_string(), fields: vec![Value::Nat(0)] },
                Value::Entity { name: "Nil".to_string(), fields: vec![Value::Nat(0)] },
            ],
        },
        "test",
    );
    assert_eq!(bad.unwrap_err().code, ErrorCode::InvariantFail);
}

#[test]
fn counter_ids_advance() {
    let p = compile("counter", samples::COUNTER);
    let mut it = Interp::new(&p, CheckMode::Release);
    let r = it.call_function("main", vec![]).unwrap();
    let Value::Tuple(items) = r else { panic!("expected a tuple") };
    assert!(value_eq(&items[0], &Value::Nat(0)));
    assert!(value_eq(&items[1], &Value::Nat(1)));
    assert!(value_eq(&items[2], &Value::Nat(2)));
}

#[test]
fn abs_negates_negatives() {
    let p = compile("abs", samples::ABS);
    let mut it = Interp::new(&p, CheckMode::Release);
    let r = it.call_function("abs", vec![Value::Int(-41)]).unwrap();
    assert!(value_eq(&r, &Value::Int(41)));
}

#[test]
fn greetings_dispatch_dynamically() {
    let p = compile("greetings", samples::GREETINGS);
    let mut it = Interp::new(&p, CheckMode::Release);
    let r = it.call_function("greetAll", vec![]).unwrap();
    let Value::List(items) = r else { panic!("expected a list") };
    assert!(value_eq(&items[0], &Value::Str("hello world".to_string())));
    assert!(value_eq(&items[1], &Value::Str("hello bob".to_string())));
}

#[test]
fn zipcode_checks_and_celsius_adds() {
    let p = compile("zipcode", samples::ZIPCODE);
    let mut it = Interp::new(&p, CheckMode::Release);
    let r = it.call_function("checkKentucky", vec![]).unwrap();
    assert!(value_eq(&r, &Value::Bool(false)));
}

#[test]
fn bar_flow_routes_by_sign() {
    let p = compile("bar_flow", samples::BAR_FLOW);
    let mut it = Interp::new(&p, CheckMode::Release);
    let bar = |it: &mut Interp, k: i64| it.call_function("bar", vec![Value::Int(k)]).unwrap();
    // k = 0: foo returns none, ?? !none fails, bar returns none.
    assert!(value_eq(&bar(&mut it, 0), &Value::None));
    // k > 0: foo returns 1n, @@ <Nat> passes, bar returns 3n.
    assert!(value_eq(&bar(&mut it, 7), &Value::Nat(3)));
    // k < 0: foo returns -1i, @@ <Nat> fails and returns the Int side.
    assert!(value_eq(&bar(&mut it, -7), &Value::Int(-1)));
}

#[test]
fn baz_bulk_updates_and_binders() {
    let p = compile("baz_bulk", samples::BAZ_BULK);
    let mut it = Interp::new(&p, CheckMode::Release);
    let r = it.call_function("build", vec![]).unwrap();
    let Value::Entity { name, fields } = r else { panic!("expected an entity") };
    assert_eq!(name, "Baz");
    assert!(value_eq(&fields[0], &Value::Int(6)));
    assert!(value_eq(&fields[1], &Value::Int(2)));
    assert!(value_eq(&fields[2], &Value::Bool(false)));
}

#[test]
fn flow_if_binds_the_pass_side() {
    let p = compile("flow_if", samples::FLOW_IF);
    let mut it = Interp::new(&p, CheckMode::Release);
    let r = it.call_function("pick", vec![Value::None]).unwrap();
    assert!(value_eq(&r, &Value::Nat(0)));
    let r = it.call_function("pick", vec![Value::Nat(5)]).unwrap();
    assert!(value_eq(&r, &Value::Nat(15)));
}

#[test]
fn trading_accepts_and_rejects_orders() {
    let p = compile("trading", samples::TRADING);
    let mut it = Interp::new(&p, CheckMode::Release);
    let order = |q: i64| Value::Entity {
        name: "SaleOrder".to_string(),
        fields: vec![
            Value::StringOf { validator: "ValidID".to_string(), value: "order_1".to_string() },
            Value::BigInt(q.into()),
        ],
    };
    let sales = Value::Entity {
        name: "SaleInfo".to_string(),
        fields: vec![Value::BigInt(10.into()), Value::BigInt(10.into()), Value::List(vec![])],
    };

    // Enough inventory: accepted, available drops.
    let r = it.call_function("process", vec![sales.clone(), order(4)]).unwrap();
    let Value::Entity { fields, .. } = &r else { panic!("expected SaleInfo") };
    assert!(value_eq(&fields[0], &Value::BigInt(6.into())));

    // Too large: rejected.
    let r = it.call_function("process", vec![sales.clone(), order(11)]).unwrap();
    assert!(value_eq(&r, &Value::None));

    // The paper's witness: a negative quantity slips past the guard and
    // *raises* available, violating the postcondition.
    let r = it.call_function("process", vec![sales, order(-1)]);
    assert_eq!(r.unwrap_err().code, ErrorCode::PostconditionFail);
}

#[test]
fn fixed_trading_variants_compile_and_process() {
    let p = compile("trading_fixed_bignat", samples::TRADING_FIXED_BIGNAT);
    let mut it = Interp::new(&p, CheckMode::Release);
    let order = Value::Entity {
        name: "SaleOrder".to_string(),
        fields: vec![
            Value::StringOf { validator: "ValidID".to_string(), value: "order_1".to_string() },
            Value::BigNat(4u32.into()),
        ],
    };
    let sales = Value::Entity {
        name: "SaleInfo".to_string(),
        fields: vec![Value::BigNat(10u32.into()), Value::BigNat(10u32.into()), Value::List(vec![])],
    };
    let r = it.call_function("process", vec![sales, order]).unwrap();
    let Value::Entity { fields, .. } = &r else { panic!("expected SaleInfo") };
    assert!(value_eq(&fields[0], &Value::BigNat(6u32.into())));

    compile("trading_fixed_invariant", samples::TRADING_FIXED_INVARIANT);
}
