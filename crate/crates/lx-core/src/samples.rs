//! Bundled sample programs.
//!
//! These are the worked examples the test suites and tools lean on: a
//! binary tree with a size invariant, a small trading app in three
//! variants (one buggy, two fixed), by-ref counters, flow narrowing, bulk
//! updates, typed strings, and a deferred function with examples for the
//! candidate-ranking harness.

/// Binary tree ADT with a `test`-level size invariant and recursive search.
pub const TREE: &str = include_str!("../samples/tree.lx");

/// Order processing with a postcondition that a negative order quantity can
/// violate.
pub const TRADING: &str = include_str!("../samples/trading.lx");

/// The trading app with the money fields as BigNat, making the
/// postcondition unfalsifiable.
pub const TRADING_FIXED_BIGNAT: &str = include_str!("../samples/trading_fixed_bignat.lx");

/// The trading app with a `quantity >= 0I` invariant on SaleOrder instead.
pub const TRADING_FIXED_INVARIANT: &str = include_str!("../samples/trading_fixed_invariant.lx");

/// Counter entity whose `ref` method threads the updated receiver back.
pub const COUNTER: &str = include_str!("../samples/counter.lx");

/// Absolute value via a rebindable local; the lowering reference case.
pub const ABS: &str = include_str!("../samples/abs.lx");

/// Deferred `maxPair` with ensures clauses and one example.
pub const MAXPAIR: &str = include_str!("../samples/maxpair.lx");

/// Two candidate bodies for `maxPair`, separated by `---`.
pub const MAXPAIR_CANDIDATES: &str = include_str!("../samples/maxpair_candidates.txt");

/// Concepts, inheritance, and dynamic dispatch.
pub const GREETINGS: &str = include_str!("../samples/greetings.lx");

/// Validated string types and numeric typedecls.
pub const ZIPCODE: &str = include_str!("../samples/zipcode.lx");

/// Early-return flow operators `??` and `@@`.
pub const BAR_FLOW: &str = include_str!("../samples/bar_flow.lx");

/// Bulk field updates with `$field` binders.
pub const BAZ_BULK: &str = include_str!("../samples/baz_bulk.lx");

/// Flow-typed `if none (x)` with the `$` binder in the else branch.
pub const FLOW_IF: &str = include_str!("../samples/flow_if.lx");

/// Every bundled program, by name.
pub fn all() -> [(&'static str, &'static str); 12] {
    [
        ("tree", TREE),
        ("trading", TRADING),
        ("trading_fixed_bignat", TRADING_FIXED_BIGNAT),
        ("trading_fixed_invariant", TRADING_FIXED_INVARIANT),
        ("counter", COUNTER),
        ("abs", ABS),
        ("maxpair", MAXPAIR),
        ("greetings", GREETINGS),
        ("zipcode", ZIPCODE),
        ("bar_flow", BAR_FLOW),
        ("baz_bulk", BAZ_BULK),
        ("flow_if", FLOW_IF),
    ]
}
