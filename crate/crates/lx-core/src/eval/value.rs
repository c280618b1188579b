//! Runtime values, error outcomes, and the canonical value ordering.
//!
//! Values are fully dynamic: every value knows its own shape, and a value of
//! union type is simply whichever member it currently is. Maps are kept as
//! key-sorted pair vectors under [`key_cmp`], which fixes enumeration order
//! everywhere (evaluation, printing, serialization, verification).

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;

use crate::diag::SourcePos;

/// Fixed-point scale for `Decimal`: 19 fractional digits.
pub const DECIMAL_SCALE: i128 = 10_000_000_000_000_000_000;
pub const DECIMAL_FRAC_DIGITS: u32 = 19;

#[derive(Clone, Debug)]
pub enum Value {
    None,
    Bool(bool),
    Nat(u64),
    Int(i64),
    BigNat(BigUint),
    BigInt(BigInt),
    Float(f64),
    /// Fixed-point decimal in units of 10^-19.
    Decimal(i128),
    Rational(BigRational),
    Str(String),
    Ascii(String),
    /// A string that passed the named validator.
    StringOf { validator: String, value: String },
    /// A typedecl-wrapped value; `value` has the underlying type.
    Typedecl { name: String, value: Box<Value> },
    Ok(Box<Value>),
    Err(Box<Value>),
    Tuple(Vec<Value>),
    /// Props sorted by name.
    Record(Vec<(String, Value)>),
    /// Fields in constructor order.
    Entity { name: String, fields: Vec<Value> },
    List(Vec<Value>),
    /// Pairs sorted by key under [`key_cmp`], keys unique.
    Map(Vec<(Value, Value)>),
}

/// Why evaluation stopped instead of producing a value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ErrorCode {
    AssertFail,
    PreconditionFail,
    PostconditionFail,
    InvariantFail,
    ValidateFail,
    Overflow,
    NatUnderflow,
    DivZero,
    CastFail,
    IndexOutOfBounds,
    EmptyCollection,
    RegexMismatch,
    RecursionBudgetExceeded,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::AssertFail => "assert-fail",
            ErrorCode::PreconditionFail => "precondition-fail",
            ErrorCode::PostconditionFail => "postcondition-fail",
            ErrorCode::InvariantFail => "invariant-fail",
            ErrorCode::ValidateFail => "validate-fail",
            ErrorCode::Overflow => "overflow",
            ErrorCode::NatUnderflow => "nat-underflow",
            ErrorCode::DivZero => "div-zero",
            ErrorCode::CastFail => "cast-fail",
            ErrorCode::IndexOutOfBounds => "index-out-of-bounds",
            ErrorCode::EmptyCollection => "empty-collection",
            ErrorCode::RegexMismatch => "regex-mismatch",
            ErrorCode::RecursionBudgetExceeded => "recursion-budget-exceeded",
        }
    }

    pub fn parse(s: &str) -> Option<ErrorCode> {
        Some(match s {
            "assert-fail" => ErrorCode::AssertFail,
            "precondition-fail" => ErrorCode::PreconditionFail,
            "postcondition-fail" => ErrorCode::PostconditionFail,
            "invariant-fail" => ErrorCode::InvariantFail,
            "validate-fail" => ErrorCode::ValidateFail,
            "overflow" => ErrorCode::Overflow,
            "nat-underflow" => ErrorCode::NatUnderflow,
            "div-zero" => ErrorCode::DivZero,
            "cast-fail" => ErrorCode::CastFail,
            "index-out-of-bounds" => ErrorCode::IndexOutOfBounds,
            "empty-collection" => ErrorCode::EmptyCollection,
            "regex-mismatch" => ErrorCode::RegexMismatch,
            "recursion-budget-exceeded" => ErrorCode::RecursionBudgetExceeded,
            _ => return None,
        })
    }

    pub const ALL: &'static [ErrorCode] = &[
        ErrorCode::AssertFail,
        ErrorCode::PreconditionFail,
        ErrorCode::PostconditionFail,
        ErrorCode::InvariantFail,
        ErrorCode::ValidateFail,
        ErrorCode::Overflow,
        ErrorCode::NatUnderflow,
        ErrorCode::DivZero,
        ErrorCode::CastFail,
        ErrorCode::IndexOutOfBounds,
        ErrorCode::EmptyCollection,
        ErrorCode::RegexMismatch,
        ErrorCode::RecursionBudgetExceeded,
    ];
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A terminated run: the first failing check or implicit operation wins.
#[derive(Clone, Debug)]
pub struct RuntimeError {
    pub code: ErrorCode,
    /// Function the failure occurred in (entry function for argument-level
    /// failures).
    pub function: String,
    pub pos: SourcePos,
    pub message: String,
}

impl RuntimeError {
    pub fn new(code: ErrorCode, function: &str, pos: SourcePos, message: String) -> Self {
        RuntimeError { code, function: function.to_string(), pos, message }
    }
}

impl fmt::Display for RuntimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} in `{}`: {}", self.pos, self.code, self.function, self.message)
    }
}

pub type Outcome<T = Value> = Result<T, RuntimeError>;

// ----- equality and ordering -----

/// Structural equality. Values of different shapes are unequal; floats
/// compare by bit pattern so the relation stays an equivalence.
pub fn value_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::None, Value::None) => true,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Nat(x), Value::Nat(y)) => x == y,
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::BigNat(x), Value::BigNat(y)) => x == y,
        (Value::BigInt(x), Value::BigInt(y)) => x == y,
        (Value::Float(x), Value::Float(y)) => x.to_bits() == y.to_bits(),
        (Value::Decimal(x), Value::Decimal(y)) => x == y,
        (Value::Rational(x), Value::Rational(y)) => x == y,
        (Value::Str(x), Value::Str(y)) => x == y,
        (Value::Ascii(x), Value::Ascii(y)) => x == y,
        (
            Value::StringOf { validator: va, value: xa },
            Value::StringOf { validator: vb, value: xb },
        ) => va == vb && xa == xb,
        (Value::Typedecl { name: na, value: xa }, Value::Typedecl { name: nb, value: xb }) => {
            na == nb && value_eq(xa, xb)
        }
        (Value::Ok(x), Value::Ok(y)) | (Value::Err(x), Value::Err(y)) => value_eq(x, y),
        (Value::Tuple(xs), Value::Tuple(ys)) | (Value::List(xs), Value::List(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| value_eq(x, y))
        }
        (Value::Record(xs), Value::Record(ys)) => {
            xs.len() == ys.len()
                && xs.iter().zip(ys).all(|((nx, x), (ny, y))| nx == ny && value_eq(x, y))
        }
        (Value::Entity { name: na, fields: xs }, Value::Entity { name: nb, fields: ys }) => {
            na == nb && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| value_eq(x, y))
        }
        (Value::Map(xs), Value::Map(ys)) => {
            xs.len() == ys.len()
                && xs.iter().zip(ys).all(|((kx, vx), (ky, vy))| value_eq(kx, ky) && value_eq(vx, vy))
        }
        _ => false,
    }
}

fn class_rank(v: &Value) -> u8 {
    match v {
        Value::None => 0,
        Value::Bool(_) => 1,
        Value::Nat(_) | Value::Int(_) | Value::BigNat(_) | Value::BigInt(_) => 2,
        Value::Str(_) | Value::Ascii(_) | Value::StringOf { .. } => 3,
        Value::Typedecl { .. } => 4,
        // Non-key shapes: ranked so the order stays total everywhere.
        Value::Float(_) => 5,
        Value::Decimal(_) => 6,
        Value::Rational(_) => 7,
        Value::Ok(_) => 8,
        Value::Err(_) => 9,
        Value::Tuple(_) => 10,
        Value::Record(_) => 11,
        Value::Entity { .. } => 12,
        Value::List(_) => 13,
        Value::Map(_) => 14,
    }
}

fn numeric_rank(v: &Value) -> u8 {
    match v {
        Value::Nat(_) => 0,
        Value::Int(_) => 1,
        Value::BigNat(_) => 2,
        Value::BigInt(_) => 3,
        _ => u8::MAX,
    }
}

fn as_bigint(v: &Value) -> Option<BigInt> {
    match v {
        Value::Nat(n) => Some(BigInt::from(*n)),
        Value::Int(i) => Some(BigInt::from(*i)),
        Value::BigNat(n) => Some(BigInt::from(n.clone())),
        Value::BigInt(i) => Some(i.clone()),
        _ => None,
    }
}

/// Total deterministic order: `none`, then `false < true`, then integers by
/// numeric value (ties by kind: Nat, Int, BigNat, BigInt), then strings by
/// code point (ties by kind, then validator), then typedecl values by name
/// and underlying value. Non-key shapes get a stable structural order so the
/// relation is total on every value.
pub fn key_cmp(a: &Value, b: &Value) -> Ordering {
    let (ra, rb) = (class_rank(a), class_rank(b));
    if ra != rb {
        return ra.cmp(&rb);
    }
    match (a, b) {
        (Value::None, Value::None) => Ordering::Equal,
        (Value::Bool(x), Value::Bool(y)) => x.cmp(y),
        (x, y) if ra == 2 => {
            let vx = as_bigint(x).unwrap();
            let vy = as_bigint(y).unwrap();
            vx.cmp(&vy).then_with(|| numeric_rank(x).cmp(&numeric_rank(y)))
        }
        (x, y) if ra == 3 => {
            let (sx, kx, vx) = string_key(x);
            let (sy, ky, vy) = string_key(y);
            sx.cmp(sy).then_with(|| kx.cmp(&ky)).then_with(|| vx.cmp(vy))
        }
        (Value::Typedecl { name: na, value: xa }, Value::Typedecl { name: nb, value: xb }) => {
            na.cmp(nb).then_with(|| key_cmp(xa, xb))
        }
        (Value::Float(x), Value::Float(y)) => x.total_cmp(y),
        (Value::Decimal(x), Value::Decimal(y)) => x.cmp(y),
        (Value::Rational(x), Value::Rational(y)) => x.cmp(y),
        (Value::Ok(x), Value::Ok(y)) | (Value::Err(x), Value::Err(y)) => key_cmp(x, y),
        (Value::Tuple(xs), Value::Tuple(ys)) | (Value::List(xs), Value::List(ys)) => {
            seq_cmp(xs, ys)
        }
        (Value::Record(xs), Value::Record(ys)) => {
            for ((nx, x), (ny, y)) in xs.iter().zip(ys) {
                let o = nx.cmp(ny).then_with(|| key_cmp(x, y));
                if o != Ordering::Equal {
                    return o;
                }
            }
            xs.len().cmp(&ys.len())
        }
        (Value::Entity { name: na, fields: xs }, Value::Entity { name: nb, fields: ys }) => {
            na.cmp(nb).then_with(|| seq_cmp(xs, ys))
        }
        (Value::Map(xs), Value::Map(ys)) => {
            for ((kx, vx), (ky, vy)) in xs.iter().zip(ys) {
                let o = key_cmp(kx, ky).then_with(|| key_cmp(vx, vy));
                if o != Ordering::Equal {
                    return o;
                }
            }
            xs.len().cmp(&ys.len())
        }
        _ => unreachable!("class ranks matched"),
    }
}

fn string_key(v: &Value) -> (&str, u8, &str) {
    match v {
        Value::Str(s) => (s, 0, ""),
        Value::Ascii(s) => (s, 1, ""),
        Value::StringOf { validator, value } => (value, 2, validator),
        _ => unreachable!(),
    }
}

fn seq_cmp(xs: &[Value], ys: &[Value]) -> Ordering {
    for (x, y) in xs.iter().zip(ys) {
        let o = key_cmp(x, y);
        if o != Ordering::Equal {
            return o;
        }
    }
    xs.len().cmp(&ys.len())
}

impl Value {
    /// Builds a map value from unordered pairs; returns the duplicated key
    /// if two pairs collide.
    pub fn map_from_pairs(pairs: Vec<(Value, Value)>) -> Result<Value, Value> {
        let mut sorted = pairs;
        sorted.sort_by(|a, b| key_cmp(&a.0, &b.0));
        for w in sorted.windows(2) {
            if value_eq(&w[0].0, &w[1].0) {
                return Err(w[1].0.clone());
            }
        }
        Ok(Value::Map(sorted))
    }

    pub fn map_get<'a>(pairs: &'a [(Value, Value)], key: &Value) -> Option<&'a Value> {
        pairs
            .binary_search_by(|(k, _)| key_cmp(k, key))
            .ok()
            .map(|i| &pairs[i].1)
    }
}

// ----- canonical printing -----

/// Prints a value the way a literal would be written: suffixed numerics,
/// quoted strings, positional constructors. Deterministic by construction.
pub fn print_value(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v);
    out
}

fn write_value(out: &mut String, v: &Value) {
    use core::fmt::Write;
    match v {
        Value::None => out.push_str("none"),
        Value::Bool(true) => out.push_str("true"),
        Value::Bool(false) => out.push_str("false"),
        Value::Nat(n) => {
            let _ = write!(out, "{n}n");
        }
        Value::Int(i) => {
            let _ = write!(out, "{i}i");
        }
        Value::BigNat(n) => {
            let _ = write!(out, "{n}N");
        }
        Value::BigInt(i) => {
            let _ = write!(out, "{i}I");
        }
        Value::Float(f) => {
            let _ = write!(out, "{f}f");
        }
        Value::Decimal(d) => {
            out.push_str(&decimal_text(*d));
            out.push('d');
        }
        Value::Rational(r) => {
            let _ = write!(out, "{}/{}R", r.numer(), r.denom());
        }
        Value::Str(s) | Value::Ascii(s) => write_quoted(out, s),
        Value::StringOf { value, .. } => write_quoted(out, value),
        Value::Typedecl { name, value } => match &**value {
            Value::Str(s) | Value::Ascii(s) | Value::StringOf { value: s, .. } => {
                write_quoted(out, s);
                out.push_str(name);
            }
            base => {
                let text = print_value(base);
                // Strip the base suffix: `10i` under Celsius prints 10_Celsius.
                let trimmed = text.trim_end_matches(|c: char| c.is_ascii_alphabetic());
                out.push_str(trimmed);
                out.push('_');
                out.push_str(name);
            }
        },
        Value::Ok(inner) => {
            out.push_str("Ok{");
            write_value(out, inner);
            out.push('}');
        }
        Value::Err(inner) => {
            out.push_str("Err{");
            write_value(out, inner);
            out.push('}');
        }
        Value::Tuple(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Record(props) => {
            out.push('{');
            for (i, (n, item)) in props.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(n);
                out.push('=');
                write_value(out, item);
            }
            out.push('}');
        }
        Value::Entity { name, fields } => {
            out.push_str(name);
            out.push('{');
            for (i, f) in fields.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(out, f);
            }
            out.push('}');
        }
        Value::List(items) => {
            out.push_str("List{");
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(out, item);
            }
            out.push('}');
        }
        Value::Map(pairs) => {
            out.push_str("Map{");
            for (i, (k, val)) in pairs.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(out, k);
                out.push_str(" => ");
                write_value(out, val);
            }
            out.push('}');
        }
    }
}

fn write_quoted(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Decimal units to text with the shortest fraction: `15000...0` -> "1.5".
pub fn decimal_text(units: i128) -> String {
    use core::fmt::Write;
    let neg = units < 0;
    let abs = units.unsigned_abs();
    let scale = DECIMAL_SCALE as u128;
    let int_part = abs / scale;
    let frac_part = abs % scale;
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    let _ = write!(out, "{int_part}");
    if frac_part != 0 {
        let mut frac = alloc::format!("{frac_part:019}");
        while frac.ends_with('0') {
            frac.pop();
        }
        out.push('.');
        out.push_str(&frac);
    }
    out
}

/// Parses decimal literal text (digits with an optional single point) into
/// scaled units; fails on overflow or more than 19 fraction digits.
pub fn decimal_from_text(text: &str) -> Option<i128> {
    let (int_text, frac_text) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    if frac_text.len() > DECIMAL_FRAC_DIGITS as usize {
        return None;
    }
    let int_part: i128 = if int_text.is_empty() { 0 } else { int_text.parse().ok()? };
    let mut frac_part: i128 = if frac_text.is_empty() { 0 } else { frac_text.parse().ok()? };
    for _ in frac_text.len()..DECIMAL_FRAC_DIGITS as usize {
        frac_part = frac_part.checked_mul(10)?;
    }
    int_part.checked_mul(DECIMAL_SCALE)?.checked_add(frac_part)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn nat(n: u64) -> Value {
        Value::Nat(n)
    }

    #[test]
    fn key_order_classes() {
        let mut vals = alloc::vec![
            Value::Str("b".into()),
            nat(2),
            Value::Bool(true),
            Value::None,
            Value::Int(-1),
            Value::Bool(false),
            Value::Str("a".into()),
            Value::BigInt(BigInt::from(2)),
        ];
        vals.sort_by(key_cmp);
        let shown: Vec<String> = vals.iter().map(print_value).collect();
        assert_eq!(shown, ["none", "false", "true", "-1i", "2n", "2I", "\"a\"", "\"b\""]);
    }

    #[test]
    fn map_construction_sorts_and_rejects_duplicates() {
        let m = Value::map_from_pairs(alloc::vec![
            (nat(3), Value::Bool(true)),
            (nat(1), Value::Bool(false)),
        ])
        .unwrap();
        assert_eq!(print_value(&m), "Map{1n => false, 3n => true}");
        assert!(Value::map_from_pairs(alloc::vec![
            (nat(1), Value::Bool(true)),
            (nat(1), Value::Bool(false)),
        ])
        .is_err());
        if let Value::Map(pairs) = &m {
            assert!(value_eq(Value::map_get(pairs, &nat(3)).unwrap(), &Value::Bool(true)));
            assert!(Value::map_get(pairs, &nat(2)).is_none());
        }
    }

    #[test]
    fn printing_is_literal_shaped() {
        assert_eq!(print_value(&Value::Int(-5)), "-5i");
        assert_eq!(print_value(&Value::Float(2.0)), "2f");
        assert_eq!(print_value(&Value::Decimal(DECIMAL_SCALE / 2)), "0.5d");
        assert_eq!(
            print_value(&Value::Rational(BigRational::new(BigInt::from(1), BigInt::from(2)))),
            "1/2R"
        );
        assert_eq!(
            print_value(&Value::Tuple(alloc::vec![nat(1), Value::Str("x\"y".into())])),
            "[1n, \"x\\\"y\"]"
        );
        assert_eq!(
            print_value(&Value::Entity { name: "Leaf".into(), fields: alloc::vec![nat(1)] }),
            "Leaf{1n}"
        );
        assert_eq!(
            print_value(&Value::Typedecl {
                name: "Zipcode".into(),
                value: Box::new(Value::StringOf { validator: "V".into(), value: "40502".into() })
            }),
            "\"40502\"Zipcode"
        );
        assert_eq!(
            print_value(&Value::Typedecl { name: "Celsius".into(), value: Box::new(Value::Float(10.0)) }),
            "10_Celsius"
        );
    }

    #[test]
    fn decimal_text_round_trip() {
        for t in ["0", "1", "1.5", "-2.25", "0.0000000000000000001", "12345.678"] {
            let units = decimal_from_text(t.trim_start_matches('-')).unwrap();
            let units = if t.starts_with('-') { -units } else { units };
            assert_eq!(decimal_text(units), t.trim_end_matches(".0"));
        }
        assert!(decimal_from_text("0.00000000000000000001").is_none());
        assert_eq!(decimal_from_text("1.50").unwrap(), decimal_from_text("1.5").unwrap());
    }

    #[test]
    fn equality_is_shape_strict() {
        assert!(!value_eq(&nat(2), &Value::Int(2)));
        assert!(value_eq(&Value::Float(f64::NAN), &Value::Float(f64::NAN)));
        assert!(!value_eq(&Value::Str("a".into()), &Value::Ascii("a".into())));
        assert!(value_eq(
            &Value::List(alloc::vec![nat(1)]),
            &Value::List(alloc::vec![nat(1)])
        ));
    }
}
