//! Runtime membership of a value in a static type.
//!
//! Drives flow tests, match patterns, cast checks, and external-data
//! admission. Membership is structural for containers and nominal (via the
//! provides closure) for entities; numeric kinds never cross-match, so an
//! `Int` value is not a `Nat` even when non-negative.

use crate::eval::value::Value;
use crate::types::{TypeSig, TypeUniverse};

pub fn value_fits(u: &TypeUniverse, v: &Value, t: &TypeSig) -> bool {
    match t {
        TypeSig::Union(ms) => ms.iter().any(|m| value_fits(u, v, m)),
        TypeSig::None => matches!(v, Value::None),
        TypeSig::Bool => matches!(v, Value::Bool(_)),
        TypeSig::Nat => matches!(v, Value::Nat(_)),
        TypeSig::Int => matches!(v, Value::Int(_)),
        TypeSig::BigNat => matches!(v, Value::BigNat(_)),
        TypeSig::BigInt => matches!(v, Value::BigInt(_)),
        TypeSig::Float => matches!(v, Value::Float(_)),
        TypeSig::Decimal => matches!(v, Value::Decimal(_)),
        TypeSig::Rational => matches!(v, Value::Rational(_)),
        TypeSig::String => matches!(v, Value::Str(_)),
        TypeSig::ASCIIString => matches!(v, Value::Ascii(_)),
        TypeSig::StringOf(name) => {
            matches!(v, Value::StringOf { validator, .. } if validator == name)
        }
        TypeSig::Typedecl { name, .. } => {
            matches!(v, Value::Typedecl { name: vn, .. } if vn == name)
        }
        TypeSig::Ok(p) => matches!(v, Value::Ok(inner) if value_fits(u, inner, p)),
        TypeSig::Err(p) => matches!(v, Value::Err(inner) if value_fits(u, inner, p)),
        TypeSig::Tuple(ts) => match v {
            Value::Tuple(vs) => {
                vs.len() == ts.len() && vs.iter().zip(ts).all(|(x, xt)| value_fits(u, x, xt))
            }
            _ => false,
        },
        TypeSig::Record(props) => match v {
            Value::Record(vs) => {
                vs.len() == props.len()
                    && vs
                        .iter()
                        .zip(props)
                        .all(|((vn, x), (pn, pt))| vn == pn && value_fits(u, x, pt))
            }
            _ => false,
        },
        TypeSig::Nominal(n) => match v {
            Value::Entity { name, .. } => {
                name == n
                    || u.type_info(name).is_some_and(|i| i.closure.contains(n))
            }
            _ => false,
        },
        TypeSig::List(elem) => match v {
            Value::List(items) => items.iter().all(|x| value_fits(u, x, elem)),
            _ => false,
        },
        TypeSig::Map(k, val) => match v {
            Value::Map(pairs) => pairs
                .iter()
                .all(|(pk, pv)| value_fits(u, pk, k) && value_fits(u, pv, val)),
            _ => false,
        },
    }
}
