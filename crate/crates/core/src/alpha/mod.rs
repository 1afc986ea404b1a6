//! Alpha expression language.
//!
//! Formulas combine panel columns (`open`, `high`, `low`, `close`, `vwap`,
//! `volume`, `market_cap`, `return`) with arithmetic, comparisons (which
//! yield 1 or 0) and the operator catalog:
//!
//! | operator | meaning |
//! |---|---|
//! | `rank(x)` | cross-sectional average rank scaled to `(0, 1]` |
//! | `cs_mean(x)` | cross-sectional mean |
//! | `ts_rank(x, w)` | rank of today's value in its trailing window, `/ w` |
//! | `delay(x, d)`, `delta(x, d)` | lag, and `x - delay(x, d)` |
//! | `ts_min/ts_max/ts_sum/ts_mean/ts_std(x, w)` | trailing-window statistics |
//! | `corr(x, y, w)`, `cov(x, y, w)` | trailing Pearson correlation / sample covariance |
//! | `decay_linear(x, w)` | weights `w, ..., 1` (latest first), normalized |
//! | `sma(x, n, m)` | recursive mean `(m·x + (n - m)·prev) / n` |
//! | `sign, abs, log, min, max, power, cond` | elementwise |
//!
//! Window arguments must be integer literals.

mod ast;
mod bundle;
mod eval;
pub mod ops;
mod parser;

pub use ast::{AlphaExpression, BinaryOp, Column, Expr, Func};
pub use bundle::{
    load_expression_bundle, parse_bundle, representative_bundle, Bundle, BundleError, BundleFailure,
    REPRESENTATIVE_BUNDLE,
};
pub use eval::{evaluate, EvalError, EvalInputs, EvalOptions, SignalPanel};
pub use parser::{parse, ParseError, ParseErrorKind};
