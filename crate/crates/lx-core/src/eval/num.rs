//! Arithmetic on runtime values.
//!
//! Every operation is total-or-error: bounded kinds (`Nat`, `Int`,
//! `Decimal`) report `overflow`/`nat-underflow`, all division by zero is
//! `div-zero`, and division truncates toward zero for every integer-like
//! kind. Typedecl wrappers are transparent: both operands carry the same
//! typedecl (the typechecker guarantees it) and the result is rewrapped.

use alloc::boxed::Box;
use core::cmp::Ordering;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};

use crate::eval::value::{ErrorCode, Value, DECIMAL_SCALE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

pub fn arith(op: ArithOp, a: &Value, b: &Value) -> Result<Value, ErrorCode> {
    match (a, b) {
        (Value::Typedecl { name, value: va }, Value::Typedecl { name: nb, value: vb })
            if name == nb =>
        {
            let inner = arith(op, va, vb)?;
            return Ok(Value::Typedecl { name: name.clone(), value: Box::new(inner) });
        }
        _ => {}
    }
    match (a, b) {
        (Value::Nat(x), Value::Nat(y)) => {
            let r = match op {
                ArithOp::Add => x.checked_add(*y).ok_or(ErrorCode::Overflow)?,
                ArithOp::Sub => x.checked_sub(*y).ok_or(ErrorCode::NatUnderflow)?,
                ArithOp::Mul => x.checked_mul(*y).ok_or(ErrorCode::Overflow)?,
                ArithOp::Div => {
                    if *y == 0 {
                        return Err(ErrorCode::DivZero);
                    }
                    x / y
                }
            };
            Ok(Value::Nat(r))
        }
        (Value::Int(x), Value::Int(y)) => {
            let r = match op {
                ArithOp::Add => x.checked_add(*y).ok_or(ErrorCode::Overflow)?,
                ArithOp::Sub => x.checked_sub(*y).ok_or(ErrorCode::Overflow)?,
                ArithOp::Mul => x.checked_mul(*y).ok_or(ErrorCode::Overflow)?,
                ArithOp::Div => {
                    if *y == 0 {
                        return Err(ErrorCode::DivZero);
                    }
                    // i64::MIN / -1 is the one overflowing division.
                    x.checked_div(*y).ok_or(ErrorCode::Overflow)?
                }
            };
            Ok(Value::Int(r))
        }
        (Value::BigNat(x), Value::BigNat(y)) => {
            let r = match op {
                ArithOp::Add => x + y,
                ArithOp::Sub => {
                    if y > x {
                        return Err(ErrorCode::NatUnderflow);
                    }
                    x - y
                }
                ArithOp::Mul => x * y,
                ArithOp::Div => {
                    if y.is_zero() {
                        return Err(ErrorCode::DivZero);
                    }
                    x / y
                }
            };
            Ok(Value::BigNat(r))
        }
        (Value::BigInt(x), Value::BigInt(y)) => {
            let r = match op {
                ArithOp::Add => x + y,
                ArithOp::Sub => x - y,
                ArithOp::Mul => x * y,
                ArithOp::Div => {
                    if y.is_zero() {
                        return Err(ErrorCode::DivZero);
                    }
                    x / y
                }
            };
            Ok(Value::BigInt(r))
        }
        (Value::Float(x), Value::Float(y)) => {
            let r = match op {
                ArithOp::Add => x + y,
                ArithOp::Sub => x - y,
                ArithOp::Mul => x * y,
                ArithOp::Div => {
                    if *y == 0.0 {
                        return Err(ErrorCode::DivZero);
                    }
                    x / y
                }
            };
            Ok(Value::Float(r))
        }
        (Value::Decimal(x), Value::Decimal(y)) => decimal_arith(op, *x, *y),
        (Value::Rational(x), Value::Rational(y)) => {
            let r = match op {
                ArithOp::Add => x + y,
                ArithOp::Sub => x - y,
                ArithOp::Mul => x * y,
                ArithOp::Div => {
                    if y.is_zero() {
                        return Err(ErrorCode::DivZero);
                    }
                    x / y
                }
            };
            Ok(Value::Rational(r))
        }
        _ => unreachable!("typechecked arithmetic operands"),
    }
}

fn decimal_arith(op: ArithOp, x: i128, y: i128) -> Result<Value, ErrorCode> {
    let r = match op {
        ArithOp::Add => x.checked_add(y).ok_or(ErrorCode::Overflow)?,
        ArithOp::Sub => x.checked_sub(y).ok_or(ErrorCode::Overflow)?,
        ArithOp::Mul => {
            // Exact product in big integers, scaled back with truncation
            // toward zero.
            let wide = BigInt::from(x) * BigInt::from(y) / BigInt::from(DECIMAL_SCALE);
            i128::try_from(wide).map_err(|_| ErrorCode::Overflow)?
        }
        ArithOp::Div => {
            if y == 0 {
                return Err(ErrorCode::DivZero);
            }
            let wide = BigInt::from(x) * BigInt::from(DECIMAL_SCALE) / BigInt::from(y);
            i128::try_from(wide).map_err(|_| ErrorCode::Overflow)?
        }
    };
    Ok(Value::Decimal(r))
}

/// Unary minus. `Nat`/`BigNat` operands are rejected by the typechecker.
pub fn negate(a: &Value) -> Result<Value, ErrorCode> {
    match a {
        Value::Typedecl { name, value } => {
            let inner = negate(value)?;
            Ok(Value::Typedecl { name: name.clone(), value: Box::new(inner) })
        }
        Value::Int(x) => x.checked_neg().map(Value::Int).ok_or(ErrorCode::Overflow),
        Value::BigInt(x) => Ok(Value::BigInt(-x)),
        Value::Float(x) => Ok(Value::Float(-x)),
        Value::Decimal(x) => x.checked_neg().map(Value::Decimal).ok_or(ErrorCode::Overflow),
        Value::Rational(x) => Ok(Value::Rational(-x)),
        _ => unreachable!("typechecked negation operand"),
    }
}

/// Ordering for `<`/`<=`/`>`/`>=`: same-kind numerics and strings. Floats
/// use the IEEE total order so comparison stays deterministic with NaN.
pub fn compare(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Typedecl { name, value: va }, Value::Typedecl { name: nb, value: vb })
            if name == nb =>
        {
            compare(va, vb)
        }
        (Value::Nat(x), Value::Nat(y)) => Some(x.cmp(y)),
        (Value::Int(x), Value::Int(y)) => Some(x.cmp(y)),
        (Value::BigNat(x), Value::BigNat(y)) => Some(x.cmp(y)),
        (Value::BigInt(x), Value::BigInt(y)) => Some(x.cmp(y)),
        (Value::Float(x), Value::Float(y)) => Some(x.total_cmp(y)),
        (Value::Decimal(x), Value::Decimal(y)) => Some(x.cmp(y)),
        (Value::Rational(x), Value::Rational(y)) => Some(x.cmp(y)),
        (Value::Str(x), Value::Str(y)) | (Value::Ascii(x), Value::Ascii(y)) => Some(x.cmp(y)),
        _ => None,
    }
}

/// `true` when the value is its kind's additive identity; used by folds.
pub fn is_zero_of_kind(v: &Value) -> bool {
    match v {
        Value::Nat(0) | Value::Int(0) | Value::Decimal(0) => true,
        Value::BigNat(n) => n.is_zero(),
        Value::BigInt(n) => n.is_zero(),
        Value::Float(f) => *f == 0.0,
        Value::Rational(r) => r.is_zero(),
        _ => false,
    }
}

/// Additive identity of the same kind as `sample`.
pub fn zero_like(sample: &Value) -> Value {
    match sample {
        Value::Nat(_) => Value::Nat(0),
        Value::Int(_) => Value::Int(0),
        Value::BigNat(_) => Value::BigNat(num_bigint::BigUint::zero()),
        Value::BigInt(_) => Value::BigInt(BigInt::zero()),
        Value::Float(_) => Value::Float(0.0),
        Value::Decimal(_) => Value::Decimal(0),
        Value::Rational(_) => Value::Rational(num_rational::BigRational::zero()),
        Value::Typedecl { name, value } => Value::Typedecl {
            name: name.clone(),
            value: Box::new(zero_like(value)),
        },
        _ => unreachable!("typechecked numeric fold"),
    }
}

/// Checks that a signed magnitude is representable as the declared kind;
/// used when literals and external data are admitted.
pub fn abs_is(v: &Value) -> Option<BigInt> {
    match v {
        Value::Nat(n) => Some(BigInt::from(*n).abs()),
        Value::Int(i) => Some(BigInt::from(*i).abs()),
        Value::BigNat(n) => Some(BigInt::from(n.clone())),
        Value::BigInt(i) => Some(i.abs()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::value::{decimal_from_text, print_value};

    #[test]
    fn bounded_kinds_report_errors() {
        let err = |r: Result<Value, ErrorCode>| r.err().unwrap();
        assert_eq!(
            err(arith(ArithOp::Add, &Value::Nat(u64::MAX), &Value::Nat(1))),
            ErrorCode::Overflow
        );
        assert_eq!(
            err(arith(ArithOp::Sub, &Value::Nat(0), &Value::Nat(1))),
            ErrorCode::NatUnderflow
        );
        assert_eq!(err(arith(ArithOp::Div, &Value::Int(1), &Value::Int(0))), ErrorCode::DivZero);
        assert_eq!(
            err(arith(ArithOp::Div, &Value::Int(i64::MIN), &Value::Int(-1))),
            ErrorCode::Overflow
        );
        assert_eq!(err(negate(&Value::Int(i64::MIN))), ErrorCode::Overflow);
    }

    #[test]
    fn division_truncates_toward_zero() {
        let div = |x: i64, y: i64| match arith(ArithOp::Div, &Value::Int(x), &Value::Int(y)) {
            Ok(Value::Int(r)) => r,
            other => panic!("{other:?}"),
        };
        assert_eq!(div(7, 2), 3);
        assert_eq!(div(-7, 2), -3);
        assert_eq!(div(7, -2), -3);
        let big = |x: i64, y: i64| {
            match arith(ArithOp::Div, &Value::BigInt(x.into()), &Value::BigInt(y.into())) {
                Ok(Value::BigInt(r)) => r,
                other => panic!("{other:?}"),
            }
        };
        assert_eq!(big(-7, 2), BigInt::from(-3));
    }

    #[test]
    fn decimal_is_exact_fixed_point() {
        let d = |t: &str| Value::Decimal(decimal_from_text(t).unwrap());
        let show = |r: Result<Value, ErrorCode>| print_value(&r.unwrap());
        assert_eq!(show(arith(ArithOp::Add, &d("0.1"), &d("0.2"))), "0.3d");
        assert_eq!(show(arith(ArithOp::Mul, &d("1.5"), &d("2"))), "3d");
        assert_eq!(show(arith(ArithOp::Div, &d("1"), &d("8"))), "0.125d");
        assert_eq!(arith(ArithOp::Div, &d("1"), &d("0")).err(), Some(ErrorCode::DivZero));
    }

    #[test]
    fn typedecl_wrappers_are_transparent() {
        let c = |f: f64| Value::Typedecl { name: "Celsius".into(), value: Box::new(Value::Float(f)) };
        let r = arith(ArithOp::Add, &c(1.5), &c(2.0)).unwrap();
        assert_eq!(print_value(&r), "3.5_Celsius");
        assert_eq!(compare(&c(1.0), &c(2.0)), Some(Ordering::Less));
    }

    #[test]
    fn float_division_by_zero_is_an_error() {
        assert_eq!(
            arith(ArithOp::Div, &Value::Float(1.0), &Value::Float(0.0)).err(),
            Some(ErrorCode::DivZero)
        );
    }
}
