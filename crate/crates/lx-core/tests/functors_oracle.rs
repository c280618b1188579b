//! Exhaustive differential tests for the list and map operation catalog.
//!
//! Every operation is checked against a plain Rust model over `i64`
//! vectors, for every list of length <= 5 with elements drawn from
//! {-1, 0, 1} and every map of size <= 3 over a fixed 3-key domain.
//! Iteration order, short-circuiting, and error codes are part of the
//! contract and are pinned here.

use lx_core::diag::SourcePos;
use lx_core::eval::functors::{self, ErrSite};
use lx_core::eval::{value_eq, ErrorCode, Outcome, Value};

fn site_pos() -> SourcePos {
    SourcePos::synthetic()
}

fn vl(items: &[i64]) -> Value {
    Value::List(items.iter().map(|&x| Value::Int(x)).collect())
}

fn as_list(v: &Value) -> Vec<i64> {
    match v {
        Value::List(items) => items
            .iter()
            .map(|x| match x {
                Value::Int(i) => *i,
                other => panic!("expected Int, got {other:?}"),
            })
            .collect(),
        other => panic!("expected List, got {other:?}"),
    }
}

fn int_of(v: &Value) -> i64 {
    match v {
        Value::Int(i) => *i,
        other => panic!("expected Int, got {other:?}"),
    }
}

fn bool_of(v: &Value) -> bool {
    match v {
        Value::Bool(b) => *b,
        other => panic!("expected Bool, got {other:?}"),
    }
}

/// Every list of length <= 5 over {-1, 0, 1}: 364 lists.
fn all_lists() -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..5 {
        let mut next = Vec::new();
        for base in &frontier {
            for x in [-1i64, 0, 1] {
                let mut l = base.clone();
                l.push(x);
                next.push(l);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    assert_eq!(out.len(), 364);
    out
}

/// The fixed one-argument predicates: name, Value-level, model-level.
type Pred1 = (&'static str, fn(i64) -> bool);
const PREDS1: &[Pred1] = &[
    ("positive", |x| x > 0),
    ("zero", |x| x == 0),
    ("not-one", |x| x != 1),
];

type Pred2 = (&'static str, fn(i64, i64) -> bool);
const PREDS2: &[Pred2] = &[
    ("distinct", |a, b| a != b),
    ("ascending", |a, b| a < b),
    ("sum-even", |a, b| (a + b) % 2 == 0),
];

type Fn1 = (&'static str, fn(i64) -> i64);
const FNS1: &[Fn1] = &[
    ("inc", |x| x + 1),
    ("square", |x| x * x),
    ("negate", |x| -x),
];

fn lift_pred1(f: fn(i64) -> bool) -> impl FnMut(&[Value]) -> Outcome<Value> {
    move |args: &[Value]| Ok(Value::Bool(f(int_of(&args[0]))))
}

fn lift_pred2(f: fn(i64, i64) -> bool) -> impl FnMut(&[Value]) -> Outcome<Value> {
    move |args: &[Value]| Ok(Value::Bool(f(int_of(&args[0]), int_of(&args[1]))))
}

fn lift_fn1(f: fn(i64) -> i64) -> impl FnMut(&[Value]) -> Outcome<Value> {
    move |args: &[Value]| Ok(Value::Int(f(int_of(&args[0]))))
}

/// A lambda that reports `div-zero` when its argument is zero; used to pin
/// evaluation order and short-circuiting.
fn poison_on_zero() -> impl FnMut(&[Value]) -> Outcome<Value> {
    move |args: &[Value]| {
        let x = int_of(&args[0]);
        if x == 0 {
            Err(lx_core::eval::RuntimeError::new(
                ErrorCode::DivZero,
                "test",
                SourcePos::synthetic(),
                "poison".to_string(),
            ))
        } else {
            Ok(Value::Bool(x > 0))
        }
    }
}

#[test]
fn size_is_length() {
    let pos = site_pos();
    let _site = ErrSite { function: "t", pos: &pos };
    for l in all_lists() {
        let got = functors::list_size(match &vl(&l) {
            Value::List(items) => items,
            _ => unreachable!(),
        });
        assert!(value_eq(&got, &Value::Nat(l.len() as u64)));
    }
}

#[test]
fn get_matches_direct_indexing() {
    let pos = site_pos();
    let site = ErrSite { function: "t", pos: &pos };
    for l in all_lists() {
        let v = vl(&l);
        let Value::List(items) = &v else { unreachable!() };
        for i in 0..=6u64 {
            let got = functors::list_get(&site, items, &Value::Nat(i));
            match l.get(i as usize) {
                Some(&x) => assert_eq!(int_of(&got.unwrap()), x),
                None => assert_eq!(got.unwrap_err().code, ErrorCode::IndexOutOfBounds),
            }
        }
    }
}

#[test]
fn slice_is_half_open_and_bounds_checked() {
    let pos = site_pos();
    let site = ErrSite { function: "t", pos: &pos };
    for l in all_lists() {
        let v = vl(&l);
        let Value::List(items) = &v else { unreachable!() };
        for a in 0..=6u64 {
            for b in 0..=6u64 {
                let got = functors::list_slice(&site, items, &Value::Nat(a), &Value::Nat(b));
                if a <= b && (b as usize) <= l.len() {
                    assert_eq!(as_list(&got.unwrap()), l[a as usize..b as usize].to_vec());
                } else {
                    assert_eq!(got.unwrap_err().code, ErrorCode::IndexOutOfBounds);
                }
            }
        }
    }
}

#[test]
fn concat_and_push_back_append() {
    for a in all_lists().iter().take(40) {
        for b in all_lists().iter().take(40) {
            let (va, vb) = (vl(a), vl(b));
            let (Value::List(ia), Value::List(ib)) = (&va, &vb) else { unreachable!() };
            let mut expect = a.clone();
            expect.extend(b.iter().copied());
            assert_eq!(as_list(&functors::list_concat(ia, ib)), expect);
        }
        let va = vl(a);
        let Value::List(ia) = &va else { unreachable!() };
        for x in [-1i64, 0, 1] {
            let mut expect = a.clone();
            expect.push(x);
            assert_eq!(as_list(&functors::list_push_back(ia, Value::Int(x))), expect);
        }
    }
}

#[test]
fn contains_is_membership() {
    for l in all_lists() {
        let v = vl(&l);
        let Value::List(items) = &v else { unreachable!() };
        for x in [-1i64, 0, 1, 2] {
            let got = functors::list_contains(items, &Value::Int(x));
            assert_eq!(bool_of(&got), l.contains(&x));
        }
        // Shape-strict equality: Nat(1) is not Int(1).
        assert!(!bool_of(&functors::list_contains(items, &Value::Nat(1))));
    }
}

#[test]
fn map_applies_in_order() {
    for l in all_lists() {
        let v = vl(&l);
        let Value::List(items) = &v else { unreachable!() };
        for (_, f) in FNS1 {
            let got = functors::list_map(items, &mut lift_fn1(*f)).unwrap();
            let expect: Vec<i64> = l.iter().map(|&x| f(x)).collect();
            assert_eq!(as_list(&got), expect);
        }
    }
}

#[test]
fn filter_keeps_passing_elements_in_order() {
    for l in all_lists() {
        let v = vl(&l);
        let Value::List(items) = &v else { unreachable!() };
        for (_, p) in PREDS1 {
            let got = functors::list_filter(items, &mut lift_pred1(*p)).unwrap();
            let expect: Vec<i64> = l.iter().copied().filter(|&x| p(x)).collect();
            assert_eq!(as_list(&got), expect);
        }
    }
}

#[test]
fn has_find_count_allof_match_iterators() {
    for l in all_lists() {
        let v = vl(&l);
        let Value::List(items) = &v else { unreachable!() };
        for (_, p) in PREDS1 {
            let has = functors::list_has(items, &mut lift_pred1(*p)).unwrap();
            assert_eq!(bool_of(&has), l.iter().any(|&x| p(x)));

            let find = functors::list_find(items, &mut lift_pred1(*p)).unwrap();
            match l.iter().copied().find(|&x| p(x)) {
                Some(x) => assert_eq!(int_of(&find), x),
                None => assert!(value_eq(&find, &Value::None)),
            }

            let count = functors::list_count(items, &mut lift_pred1(*p)).unwrap();
            assert!(value_eq(&count, &Value::Nat(l.iter().filter(|&&x| p(x)).count() as u64)));

            let all = functors::list_all_of(items, &mut lift_pred1(*p)).unwrap();
            assert_eq!(bool_of(&all), l.iter().all(|&x| p(x)));
        }
    }
}

#[test]
fn unique_holds_when_every_pair_satisfies_the_predicate() {
    for l in all_lists() {
        let v = vl(&l);
        let Value::List(items) = &v else { unreachable!() };
        for (_, p) in PREDS2 {
            let got = functors::list_unique(items, &mut lift_pred2(*p)).unwrap();
            let mut expect = true;
            'outer: for i in 0..l.len() {
                for j in i + 1..l.len() {
                    if !p(l[i], l[j]) {
                        expect = false;
                        break 'outer;
                    }
                }
            }
            assert_eq!(bool_of(&got), expect, "unique over {l:?}");
        }
    }
}

#[test]
fn sum_folds_left_with_a_typed_zero() {
    let pos = site_pos();
    let site = ErrSite { function: "t", pos: &pos };
    for l in all_lists() {
        let v = vl(&l);
        let Value::List(items) = &v else { unreachable!() };
        let got = functors::list_sum(&site, items, Value::Int(0)).unwrap();
        assert_eq!(int_of(&got), l.iter().sum::<i64>());
    }
    // The zero hint decides the result of an empty sum.
    let got = functors::list_sum(&site, &[], Value::Nat(0)).unwrap();
    assert!(value_eq(&got, &Value::Nat(0)));
}

#[test]
fn sum_of_measures_then_sums() {
    let pos = site_pos();
    let site = ErrSite { function: "t", pos: &pos };
    for l in all_lists() {
        let v = vl(&l);
        let Value::List(items) = &v else { unreachable!() };
        for (_, f) in FNS1 {
            let got =
                functors::list_sum_of(&site, items, &mut lift_fn1(*f), Value::Int(0)).unwrap();
            assert_eq!(int_of(&got), l.iter().map(|&x| f(x)).sum::<i64>());
        }
    }
}

#[test]
fn reduce_is_a_left_fold() {
    for l in all_lists() {
        let v = vl(&l);
        let Value::List(items) = &v else { unreachable!() };
        let mut step =
            |args: &[Value]| Ok(Value::Int(int_of(&args[0]) * 2 - int_of(&args[1])));
        let got = functors::list_reduce(Value::Int(3), items, &mut step).unwrap();
        let expect = l.iter().fold(3i64, |acc, &x| acc * 2 - x);
        assert_eq!(int_of(&got), expect);
    }
}

#[test]
fn max_and_max_arg_take_the_first_maximal() {
    let pos = site_pos();
    let site = ErrSite { function: "t", pos: &pos };
    for l in all_lists() {
        let v = vl(&l);
        let Value::List(items) = &v else { unreachable!() };

        let got = functors::list_max(&site, items);
        match l.iter().copied().max() {
            Some(m) => assert_eq!(int_of(&got.unwrap()), m),
            None => assert_eq!(got.unwrap_err().code, ErrorCode::EmptyCollection),
        }

        for (_, f) in FNS1 {
            let got = functors::list_max_arg(&site, items, &mut lift_fn1(*f));
            if l.is_empty() {
                assert_eq!(got.unwrap_err().code, ErrorCode::EmptyCollection);
            } else {
                // First element whose measure equals the maximum measure.
                let best = l
                    .iter()
                    .copied()
                    .reduce(|best, x| if f(x) > f(best) { x } else { best })
                    .unwrap();
                assert_eq!(int_of(&got.unwrap()), best, "maxArg over {l:?}");
            }
        }
    }
}

#[test]
fn zip_truncates_to_the_shorter_side() {
    for a in all_lists().iter().take(60) {
        for b in all_lists().iter().take(60) {
            let (va, vb) = (vl(a), vl(b));
            let (Value::List(ia), Value::List(ib)) = (&va, &vb) else { unreachable!() };
            let got = functors::list_zip(ia, ib);
            let Value::List(pairs) = &got else { panic!() };
            let expect: Vec<(i64, i64)> =
                a.iter().copied().zip(b.iter().copied()).collect();
            assert_eq!(pairs.len(), expect.len());
            for (p, (x, y)) in pairs.iter().zip(expect) {
                let Value::Tuple(items) = p else { panic!() };
                assert_eq!(int_of(&items[0]), x);
                assert_eq!(int_of(&items[1]), y);
            }
        }
    }
}

#[test]
fn join_is_a_filtered_cross_product_left_major() {
    for a in all_lists().iter().filter(|l| l.len() <= 3) {
        for b in all_lists().iter().filter(|l| l.len() <= 3) {
            let (va, vb) = (vl(a), vl(b));
            let (Value::List(ia), Value::List(ib)) = (&va, &vb) else { unreachable!() };
            for (_, p) in PREDS2 {
                let got = functors::list_join(ia, ib, &mut lift_pred2(*p)).unwrap();
                let Value::List(pairs) = &got else { panic!() };
                let mut expect = Vec::new();
                for &x in a {
                    for &y in b {
                        if p(x, y) {
                            expect.push((x, y));
                        }
                    }
                }
                assert_eq!(pairs.len(), expect.len());
                for (pair, (x, y)) in pairs.iter().zip(expect) {
                    let Value::Tuple(items) = pair else { panic!() };
                    assert_eq!(int_of(&items[0]), x);
                    assert_eq!(int_of(&items[1]), y);
                }
            }
        }
    }
}

#[test]
fn lambda_errors_propagate_in_iteration_order() {
    // `has` stops at the first passing element; elements after it are never
    // evaluated, elements before it are.
    let v = vl(&[1, 0]);
    let Value::List(items) = &v else { unreachable!() };
    assert!(bool_of(&functors::list_has(items, &mut poison_on_zero()).unwrap()));

    let v = vl(&[0, 1]);
    let Value::List(items) = &v else { unreachable!() };
    assert_eq!(
        functors::list_has(items, &mut poison_on_zero()).unwrap_err().code,
        ErrorCode::DivZero
    );

    // `allOf` stops at the first failing element.
    let v = vl(&[-1, 0]);
    let Value::List(items) = &v else { unreachable!() };
    assert!(!bool_of(&functors::list_all_of(items, &mut poison_on_zero()).unwrap()));

    // `find` stops at the first passing element.
    let v = vl(&[1, 0]);
    let Value::List(items) = &v else { unreachable!() };
    assert_eq!(
        int_of(&functors::list_find(items, &mut poison_on_zero()).unwrap()),
        1
    );

    // `map`, `filter`, `count` evaluate every element left to right; the
    // first error wins.
    let v = vl(&[1, 0, 0]);
    let Value::List(items) = &v else { unreachable!() };
    assert_eq!(
        functors::list_count(items, &mut poison_on_zero()).unwrap_err().code,
        ErrorCode::DivZero
    );
}

// ----- maps -----

/// Every map of size <= 3 with keys from {0n, 1n, 2n} and values from
/// {-1i, 0i, 1i}: 64 maps.
fn all_maps() -> Vec<Vec<(u64, i64)>> {
    let keys = [0u64, 1, 2];
    let vals = [-1i64, 0, 1];
    let mut out = Vec::new();
    for mask in 0u32..8 {
        let picked: Vec<u64> =
            keys.iter().copied().filter(|&k| mask & (1 << k) != 0).collect();
        let mut assignments: Vec<Vec<(u64, i64)>> = vec![Vec::new()];
        for &k in &picked {
            let mut next = Vec::new();
            for base in &assignments {
                for &v in &vals {
                    let mut m = base.clone();
                    m.push((k, v));
                    next.push(m);
                }
            }
            assignments = next;
        }
        out.extend(assignments);
    }
    assert_eq!(out.len(), 64);
    out
}

fn vm(entries: &[(u64, i64)]) -> Value {
    Value::map_from_pairs(
        entries.iter().map(|&(k, v)| (Value::Nat(k), Value::Int(v))).collect(),
    )
    .unwrap()
}

#[test]
fn map_operations_match_the_model() {
    let pos = site_pos();
    let site = ErrSite { function: "t", pos: &pos };
    for m in all_maps() {
        let v = vm(&m);
        let Value::Map(pairs) = &v else { unreachable!() };

        assert!(value_eq(&functors::map_size(pairs), &Value::Nat(m.len() as u64)));

        for k in 0..=3u64 {
            let got = functors::map_get(&site, pairs, &Value::Nat(k));
            match m.iter().find(|&&(mk, _)| mk == k) {
                Some(&(_, mv)) => assert_eq!(int_of(&got.unwrap()), mv),
                None => assert_eq!(got.unwrap_err().code, ErrorCode::IndexOutOfBounds),
            }
            let has = functors::map_has(pairs, &Value::Nat(k));
            assert_eq!(bool_of(&has), m.iter().any(|&(mk, _)| mk == k));
        }

        // Transform values; keys stay and enumeration is ascending.
        let mut f = |args: &[Value]| {
            let k = match &args[0] {
                Value::Nat(k) => *k as i64,
                _ => panic!(),
            };
            Ok(Value::Int(int_of(&args[1]) * 10 + k))
        };
        let got = functors::map_map(pairs, &mut f).unwrap();
        let Value::Map(gp) = &got else { panic!() };
        let mut expect: Vec<(u64, i64)> =
            m.iter().map(|&(k, v)| (k, v * 10 + k as i64)).collect();
        expect.sort();
        assert_eq!(gp.len(), expect.len());
        for ((gk, gv), (ek, ev)) in gp.iter().zip(expect) {
            assert!(value_eq(gk, &Value::Nat(ek)));
            assert_eq!(int_of(gv), ev);
        }

        // Filter by key and value.
        let mut p = |args: &[Value]| {
            let k = match &args[0] {
                Value::Nat(k) => *k,
                _ => panic!(),
            };
            Ok(Value::Bool(k == 1 || int_of(&args[1]) == 0))
        };
        let got = functors::map_filter(pairs, &mut p).unwrap();
        let Value::Map(gp) = &got else { panic!() };
        let mut expect: Vec<(u64, i64)> =
            m.iter().copied().filter(|&(k, v)| k == 1 || v == 0).collect();
        expect.sort();
        assert_eq!(gp.len(), expect.len());
        for ((gk, gv), (ek, ev)) in gp.iter().zip(expect) {
            assert!(value_eq(gk, &Value::Nat(ek)));
            assert_eq!(int_of(gv), ev);
        }
    }
}

#[test]
fn map_enumeration_is_ascending_by_key() {
    let v = vm(&[(2, 1), (0, -1), (1, 0)]);
    let Value::Map(pairs) = &v else { unreachable!() };
    let keys: Vec<u64> = pairs
        .iter()
        .map(|(k, _)| match k {
            Value::Nat(k) => *k,
            _ => panic!(),
        })
        .collect();
    assert_eq!(keys, vec![0, 1, 2]);
}
