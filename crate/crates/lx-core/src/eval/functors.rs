//! The list and map operation catalog shared by both interpreters.
//!
//! Each operation takes the container's backing storage plus any lambda
//! arguments as callbacks, so the surface interpreter and the IR machine
//! evaluate lambdas their own way while the iteration order, short-circuit
//! behavior, and error codes live in exactly one place. Iteration is always
//! left to right (ascending key order for maps), and the first lambda error
//! aborts the whole operation.

use alloc::boxed::Box;
use alloc::string::ToString;
use alloc::vec::Vec;

use num_bigint::{BigInt, BigUint};
use num_traits::Zero;

use crate::diag::SourcePos;
use crate::eval::num::{self, ArithOp};
use crate::eval::value::{value_eq, ErrorCode, Outcome, RuntimeError, Value};
use crate::types::TypeSig;

/// Where a failing operation reports itself: the enclosing function and the
/// call's source position.
pub struct ErrSite<'a> {
    pub function: &'a str,
    pub pos: &'a SourcePos,
}

impl ErrSite<'_> {
    fn err(&self, code: ErrorCode, message: alloc::string::String) -> RuntimeError {
        RuntimeError::new(code, self.function, self.pos.clone(), message)
    }
}

/// A lambda argument: called with the element (or accumulator/element,
/// key/value, pair) and producing a value or aborting the operation.
pub type Lambda<'a> = &'a mut dyn FnMut(&[Value]) -> Outcome<Value>;

fn nat_index(v: &Value) -> u64 {
    match v {
        Value::Nat(n) => *n,
        _ => unreachable!("typechecked index"),
    }
}

fn truth(v: &Value) -> bool {
    match v {
        Value::Bool(b) => *b,
        _ => unreachable!("typechecked predicate result"),
    }
}

/// The additive identity for a static numeric element type; `None` when the
/// type is not numeric (the typechecker rejects those sums earlier).
pub fn zero_of_type(ty: &TypeSig) -> Option<Value> {
    Some(match ty {
        TypeSig::Nat => Value::Nat(0),
        TypeSig::Int => Value::Int(0),
        TypeSig::BigNat => Value::BigNat(BigUint::zero()),
        TypeSig::BigInt => Value::BigInt(BigInt::zero()),
        TypeSig::Float => Value::Float(0.0),
        TypeSig::Decimal => Value::Decimal(0),
        TypeSig::Rational => Value::Rational(num_rational::BigRational::zero()),
        TypeSig::Typedecl { name, base } => Value::Typedecl {
            name: name.clone(),
            value: Box::new(zero_of_type(base)?),
        },
        _ => return None,
    })
}

// ----- lists -----

pub fn list_size(items: &[Value]) -> Value {
    Value::Nat(items.len() as u64)
}

pub fn list_get(site: &ErrSite, items: &[Value], index: &Value) -> Outcome<Value> {
    let i = nat_index(index);
    items.get(i as usize).cloned().ok_or_else(|| {
        site.err(
            ErrorCode::IndexOutOfBounds,
            alloc::format!("index {i} out of bounds for a list of size {}", items.len()),
        )
    })
}

/// Half-open `[from, to)`; requires `from <= to <= size`.
pub fn list_slice(site: &ErrSite, items: &[Value], from: &Value, to: &Value) -> Outcome<Value> {
    let (a, b) = (nat_index(from), nat_index(to));
    if a > b || b as usize > items.len() {
        return Err(site.err(
            ErrorCode::IndexOutOfBounds,
            alloc::format!("slice {a}..{b} out of bounds for a list of size {}", items.len()),
        ));
    }
    Ok(Value::List(items[a as usize..b as usize].to_vec()))
}

pub fn list_concat(a: &[Value], b: &[Value]) -> Value {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    Value::List(out)
}

pub fn list_push_back(items: &[Value], v: Value) -> Value {
    let mut out = Vec::with_capacity(items.len() + 1);
    out.extend_from_slice(items);
    out.push(v);
    Value::List(out)
}

pub fn list_contains(items: &[Value], v: &Value) -> Value {
    Value::Bool(items.iter().any(|x| value_eq(x, v)))
}

pub fn list_map(items: &[Value], f: Lambda) -> Outcome<Value> {
    let mut out = Vec::with_capacity(items.len());
    for x in items {
        out.push(f(core::slice::from_ref(x))?);
    }
    Ok(Value::List(out))
}

pub fn list_filter(items: &[Value], pred: Lambda) -> Outcome<Value> {
    let mut out = Vec::new();
    for x in items {
        if truth(&pred(core::slice::from_ref(x))?) {
            out.push(x.clone());
        }
    }
    Ok(Value::List(out))
}

/// Stops at the first passing element.
pub fn list_has(items: &[Value], pred: Lambda) -> Outcome<Value> {
    for x in items {
        if truth(&pred(core::slice::from_ref(x))?) {
            return Ok(Value::Bool(true));
        }
    }
    Ok(Value::Bool(false))
}

/// First passing element, or `none`.
pub fn list_find(items: &[Value], pred: Lambda) -> Outcome<Value> {
    for x in items {
        if truth(&pred(core::slice::from_ref(x))?) {
            return Ok(x.clone());
        }
    }
    Ok(Value::None)
}

pub fn list_count(items: &[Value], pred: Lambda) -> Outcome<Value> {
    let mut n = 0u64;
    for x in items {
        if truth(&pred(core::slice::from_ref(x))?) {
            n += 1;
        }
    }
    Ok(Value::Nat(n))
}

/// Stops at the first failing element.
pub fn list_all_of(items: &[Value], pred: Lambda) -> Outcome<Value> {
    for x in items {
        if !truth(&pred(core::slice::from_ref(x))?) {
            return Ok(Value::Bool(false));
        }
    }
    Ok(Value::Bool(true))
}

/// True when every index pair `i < j` satisfies the predicate. Pairs are
/// visited outer-`i`, inner-`j`, stopping at the first failure.
pub fn list_unique(items: &[Value], pred: Lambda) -> Outcome<Value> {
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            if !truth(&pred(&[items[i].clone(), items[j].clone()])?) {
                return Ok(Value::Bool(false));
            }
        }
    }
    Ok(Value::Bool(true))
}

/// Left fold of `+` starting from the element type's zero.
pub fn list_sum(site: &ErrSite, items: &[Value], zero: Value) -> Outcome<Value> {
    let mut acc = zero;
    for x in items {
        acc = num::arith(ArithOp::Add, &acc, x)
            .map_err(|code| site.err(code, "sum overflowed".to_string()))?;
    }
    Ok(acc)
}

/// Measures each element, then sums the measures.
pub fn list_sum_of(site: &ErrSite, items: &[Value], f: Lambda, zero: Value) -> Outcome<Value> {
    let mut acc = zero;
    for x in items {
        let m = f(core::slice::from_ref(x))?;
        acc = num::arith(ArithOp::Add, &acc, &m)
            .map_err(|code| site.err(code, "sum overflowed".to_string()))?;
    }
    Ok(acc)
}

/// Left fold: `step(acc, element)`.
pub fn list_reduce(init: Value, items: &[Value], step: Lambda) -> Outcome<Value> {
    let mut acc = init;
    for x in items {
        acc = step(&[acc, x.clone()])?;
    }
    Ok(acc)
}

/// The first element whose measure is maximal; empty lists are an error.
pub fn list_max_arg(site: &ErrSite, items: &[Value], f: Lambda) -> Outcome<Value> {
    let mut best: Option<(Value, Value)> = None;
    for x in items {
        let m = f(core::slice::from_ref(x))?;
        let replace = match &best {
            None => true,
            Some((_, best_m)) => {
                num::compare(&m, best_m) == Some(core::cmp::Ordering::Greater)
            }
        };
        if replace {
            best = Some((x.clone(), m));
        }
    }
    match best {
        Some((x, _)) => Ok(x),
        None => Err(site.err(
            ErrorCode::EmptyCollection,
            "maxArg of an empty list".to_string(),
        )),
    }
}

/// The first maximal element; empty lists are an error.
pub fn list_max(site: &ErrSite, items: &[Value]) -> Outcome<Value> {
    let mut best: Option<&Value> = None;
    for x in items {
        let replace = match best {
            None => true,
            Some(b) => num::compare(x, b) == Some(core::cmp::Ordering::Greater),
        };
        if replace {
            best = Some(x);
        }
    }
    best.cloned()
        .ok_or_else(|| site.err(ErrorCode::EmptyCollection, "max of an empty list".to_string()))
}

/// Pairs elements positionally, truncating to the shorter list.
pub fn list_zip(a: &[Value], b: &[Value]) -> Value {
    Value::List(
        a.iter()
            .zip(b)
            .map(|(x, y)| Value::Tuple(alloc::vec![x.clone(), y.clone()]))
            .collect(),
    )
}

/// Cross product filtered by the predicate, left list major.
pub fn list_join(a: &[Value], b: &[Value], pred: Lambda) -> Outcome<Value> {
    let mut out = Vec::new();
    for x in a {
        for y in b {
            if truth(&pred(&[x.clone(), y.clone()])?) {
                out.push(Value::Tuple(alloc::vec![x.clone(), y.clone()]));
            }
        }
    }
    Ok(Value::List(out))
}

// ----- maps -----

pub fn map_size(pairs: &[(Value, Value)]) -> Value {
    Value::Nat(pairs.len() as u64)
}

/// A missing key is an error; probe with `has` first.
pub fn map_get(site: &ErrSite, pairs: &[(Value, Value)], key: &Value) -> Outcome<Value> {
    Value::map_get(pairs, key).cloned().ok_or_else(|| {
        site.err(
            ErrorCode::IndexOutOfBounds,
            alloc::format!("key {} not in map", crate::eval::value::print_value(key)),
        )
    })
}

pub fn map_has(pairs: &[(Value, Value)], key: &Value) -> Value {
    Value::Bool(Value::map_get(pairs, key).is_some())
}

/// Transforms each value with `f(key, value)`; keys are untouched, so the
/// result is already sorted.
pub fn map_map(pairs: &[(Value, Value)], f: Lambda) -> Outcome<Value> {
    let mut out = Vec::with_capacity(pairs.len());
    for (k, v) in pairs {
        out.push((k.clone(), f(&[k.clone(), v.clone()])?));
    }
    Ok(Value::Map(out))
}

/// Keeps entries where `pred(key, value)` holds.
pub fn map_filter(pairs: &[(Value, Value)], pred: Lambda) -> Outcome<Value> {
    let mut out = Vec::new();
    for (k, v) in pairs {
        if truth(&pred(&[k.clone(), v.clone()])?) {
            out.push((k.clone(), v.clone()));
        }
    }
    Ok(Value::Map(out))
}
