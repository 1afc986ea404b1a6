use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::ast::{AlphaExpression, BinaryOp, Column, Expr, Func};
use super::ops;
use crate::grid::Grid;
use crate::panel::{PricePanel, ReturnPanel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("expression reads column \"{0}\" which the panel does not provide")]
    MissingColumn(&'static str),
    #[error("evaluation window {window} is shorter than the expression's {span}-date lookback")]
    WindowTooShort { window: usize, span: usize },
    #[error("return panel does not match the price panel")]
    Misaligned,
}

/// Inputs read by expressions.
#[derive(Debug, Clone, Copy)]
pub struct EvalInputs<'a> {
    pub prices: &'a PricePanel,
    pub returns: &'a ReturnPanel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Trailing history (in dates) available to every evaluation.
    pub window: usize,
    /// Blank any cell whose asset lacks a referenced input anywhere in the
    /// trailing window, including the first `window - 1` dates.
    pub complete_window: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            window: 252,
            complete_window: true,
        }
    }
}

/// Per-asset per-date values of one expression.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalPanel {
    pub name: String,
    pub window: usize,
    pub asset_ids: Vec<String>,
    pub calendar: Vec<NaiveDate>,
    pub values: Grid,
}

impl SignalPanel {
    /// Share of present cells.
    pub fn coverage(&self) -> f64 {
        let total = self.values.n_assets() * self.values.n_dates();
        if total == 0 {
            0.0
        } else {
            self.values.count_present() as f64 / total as f64
        }
    }

    /// Market capitalization as a characteristic panel (for size sorts).
    pub fn market_cap(panel: &PricePanel) -> SignalPanel {
        SignalPanel {
            name: "market_cap".into(),
            window: 1,
            asset_ids: panel.asset_ids(),
            calendar: panel.calendar().to_vec(),
            values: panel.market_cap().clone(),
        }
    }
}

struct Ctx<'a> {
    inputs: EvalInputs<'a>,
    history: usize,
}

impl Ctx<'_> {
    fn column(&self, c: Column) -> Grid {
        match c.field() {
            Some(f) => self.inputs.prices.field(f).clone(),
            None => self.inputs.returns.returns.clone(),
        }
    }

    fn shape(&self) -> (usize, usize) {
        (self.inputs.prices.n_assets(), self.inputs.prices.n_dates())
    }
}

fn per_asset(g: &Grid, f: impl Fn(&[f64]) -> Vec<f64>) -> Grid {
    Grid::from_rows((0..g.n_assets()).map(|a| f(g.row(a))).collect())
}

fn per_asset_pair(x: &Grid, y: &Grid, f: impl Fn(&[f64], &[f64]) -> Vec<f64>) -> Grid {
    Grid::from_rows((0..x.n_assets()).map(|a| f(x.row(a), y.row(a))).collect())
}

fn per_date(g: &Grid, f: impl Fn(&[f64]) -> Vec<f64>) -> Grid {
    let mut out = Grid::missing(g.n_assets(), g.n_dates());
    for d in 0..g.n_dates() {
        for (a, v) in f(&g.column(d)).into_iter().enumerate() {
            out.set(a, d, v);
        }
    }
    out
}

fn both(a: f64, b: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
    if a.is_finite() && b.is_finite() {
        f(a, b)
    } else {
        f64::NAN
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn eval_node(expr: &Expr, ctx: &Ctx) -> Grid {
    let (n, t) = ctx.shape();
    match expr {
        Expr::Col(c) => ctx.column(*c),
        Expr::Num(v) => Grid::filled(n, t, *v),
        Expr::Neg(e) => eval_node(e, ctx).map(|v| -v),
        Expr::Binary(op, a, b) => {
            let (a, b) = (eval_node(a, ctx), eval_node(b, ctx));
            let op = *op;
            a.zip_map(&b, |x, y| {
                both(x, y, |x, y| match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                    BinaryOp::Div => x / y,
                    BinaryOp::Lt => indicator(x < y),
                    BinaryOp::Le => indicator(x <= y),
                    BinaryOp::Gt => indicator(x > y),
                    BinaryOp::Ge => indicator(x >= y),
                    BinaryOp::Eq => indicator(x == y),
                    BinaryOp::Ne => indicator(x != y),
                })
            })
        }
        Expr::Call { func, args, params } => {
            let vals: Vec<Grid> = args.iter().map(|a| eval_node(a, ctx)).collect();
            let x = &vals[0];
            let w = params.first().copied().unwrap_or(0);
            match func {
                Func::Rank => per_date(x, ops::cs_rank),
                Func::CsMean => per_date(x, ops::cs_mean),
                Func::TsRank => per_asset(x, |r| ops::ts_rank(r, w)),
                Func::Delay => per_asset(x, |r| ops::delay(r, w)),
                Func::Delta => per_asset(x, |r| ops::delta(r, w)),
                Func::TsMin => per_asset(x, |r| ops::ts_min(r, w)),
                Func::TsMax => per_asset(x, |r| ops::ts_max(r, w)),
                Func::TsSum => per_asset(x, |r| ops::ts_sum(r, w)),
                Func::TsMean => per_asset(x, |r| ops::ts_mean(r, w)),
                Func::TsStd => per_asset(x, |r| ops::ts_std(r, w)),
                Func::DecayLinear => per_asset(x, |r| ops::decay_linear(r, w)),
                Func::Sma => per_asset(x, |r| ops::sma(r, w, params[1], ctx.history)),
                Func::Corr => per_asset_pair(x, &vals[1], |a, b| ops::corr(a, b, w)),
                Func::Cov => per_asset_pair(x, &vals[1], |a, b| ops::cov(a, b, w)),
                Func::Sign => x.map(|v| if v.is_finite() { v.signum() * indicator(v != 0.0) } else { v }),
                Func::Abs => x.map(f64::abs),
                Func::Log => x.map(|v| if v > 0.0 { v.ln() } else { f64::NAN }),
                Func::Min => x.zip_map(&vals[1], |a, b| both(a, b, f64::min)),
                Func::Max => x.zip_map(&vals[1], |a, b| both(a, b, f64::max)),
                Func::Power => x.zip_map(&vals[1], |a, b| both(a, b, f64::powf)),
                Func::Cond => {
                    let (yes, no) = (&vals[1], &vals[2]);
                    let mut out = Grid::missing(n, t);
                    for a in 0..n {
                        for d in 0..t {
                            if let Some(p) = x.value(a, d) {
                                out.set(a, d, if p != 0.0 { yes.get(a, d) } else { no.get(a, d) });
                            }
                        }
                    }
                    out
                }
            }
        }
    }
}

/// Evaluates an expression over the whole panel.
pub fn evaluate(
    expr: &AlphaExpression,
    inputs: EvalInputs,
    opts: EvalOptions,
) -> Result<SignalPanel, EvalError> {
    let prices = inputs.prices;
    if inputs.returns.returns.n_assets() != prices.n_assets()
        || inputs.returns.calendar.as_slice() != prices.calendar()
    {
        return Err(EvalError::Misaligned);
    }
    let columns = expr.ast.columns();
    for c in &columns {
        if let Some(f) = c.field() {
            if !prices.has_field(f) {
                return Err(EvalError::MissingColumn(c.name()));
            }
        }
    }
    let span = expr.ast.span();
    if opts.window < span {
        return Err(EvalError::WindowTooShort {
            window: opts.window,
            span,
        });
    }
    let ctx = Ctx {
        inputs,
        history: opts.window,
    };
    let mut values = eval_node(&expr.ast, &ctx);
    if opts.complete_window {
        let inputs: Vec<Grid> = columns.iter().map(|&c| ctx.column(c)).collect();
        mask_incomplete_windows(&mut values, &inputs, opts.window);
    }
    Ok(SignalPanel {
        name: expr.name.clone(),
        window: opts.window,
        asset_ids: prices.asset_ids(),
        calendar: prices.calendar().to_vec(),
        values,
    })
}

fn mask_incomplete_windows(values: &mut Grid, inputs: &[Grid], window: usize) {
    let (n, t) = (values.n_assets(), values.n_dates());
    for a in 0..n {
        let mut last_gap: Option<usize> = None;
        for d in 0..t {
            if inputs.iter().any(|g| !g.is_present(a, d)) {
                last_gap = Some(d);
            }
            let complete = d + 1 >= window && last_gap.is_none_or(|g| g + window <= d);
            if !complete {
                values.set(a, d, f64::NAN);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{compute_returns, AssetInfo, Exchange, PanelColumns, ShareClass};

    fn panel(closes: Vec<Vec<f64>>, volumes: Vec<Vec<f64>>) -> PricePanel {
        let t = closes[0].len();
        let n = closes.len();
        let calendar = (0..t)
            .map(|i| NaiveDate::from_ymd_opt(2021, 1, 1).unwrap() + chrono::Days::new(i as u64))
            .collect();
        let c = Grid::from_rows(closes);
        PricePanel::new(
            (0..n)
                .map(|i| AssetInfo {
                    id: format!("A{i}"),
                    exchange: Exchange::Nyse,
                    share_class: ShareClass::Common,
                })
                .collect(),
            calendar,
            PanelColumns {
                open: c.clone(),
                high: c.clone(),
                low: c.clone(),
                close: c,
                vwap: None,
                volume: Grid::from_rows(volumes),
                market_cap: Grid::filled(n, t, 1.0),
            },
        )
        .unwrap()
    }

    fn run(src: &str, p: &PricePanel, window: usize) -> Result<SignalPanel, EvalError> {
        let r = compute_returns(p);
        let e = AlphaExpression::parse("t", src).unwrap();
        evaluate(
            &e,
            EvalInputs {
                prices: p,
                returns: &r,
            },
            EvalOptions {
                window,
                complete_window: true,
            },
        )
    }

    #[test]
    fn delay_example() {
        let p = panel(vec![vec![1.0, 2.0, 3.0]], vec![vec![1.0; 3]]);
        let s = run("delay(close, 1)", &p, 2).unwrap();
        assert_eq!(s.values.value(0, 0), None);
        assert_eq!(s.values.value(0, 1), Some(1.0));
        assert_eq!(s.values.value(0, 2), Some(2.0));
    }

    #[test]
    fn decay_linear_example() {
        let p = panel(vec![vec![1.0, 2.0, 3.0]], vec![vec![1.0; 3]]);
        let s = run("decay_linear(close, 3)", &p, 3).unwrap();
        assert!((s.values.value(0, 2).unwrap() - 14.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn perfectly_dependent_volume_has_unit_corr() {
        let closes: Vec<f64> = (0..12).map(|i| 10.0 + ((i * 7) % 5) as f64).collect();
        let vols: Vec<f64> = closes.iter().map(|c| 2.0 * c).collect();
        let p = panel(vec![closes], vec![vols]);
        let s = run("corr(close, volume, 5)", &p, 5).unwrap();
        let present: Vec<f64> = (0..12).filter_map(|d| s.values.value(0, d)).collect();
        assert_eq!(present.len(), 8);
        assert!(present.iter().all(|c| (c - 1.0).abs() < 1e-12));
    }

    #[test]
    fn window_and_column_errors() {
        let p = panel(vec![vec![1.0, 2.0, 3.0]], vec![vec![1.0; 3]]);
        assert_eq!(
            run("ts_mean(close, 3)", &p, 2).unwrap_err(),
            EvalError::WindowTooShort { window: 2, span: 3 }
        );
        assert_eq!(run("vwap", &p, 5).unwrap_err(), EvalError::MissingColumn("vwap"));
    }

    #[test]
    fn single_asset_cross_section_ranks_one() {
        let p = panel(vec![vec![1.0, 2.0, 3.0]], vec![vec![1.0; 3]]);
        let s = run("rank(close)", &p, 1).unwrap();
        assert!((0..3).all(|d| s.values.value(0, d) == Some(1.0)));
    }

    #[test]
    fn complete_window_blanks_gapped_history() {
        let p = panel(
            vec![vec![1.0, 2.0, f64::NAN, 4.0, 5.0, 6.0, 7.0]],
            vec![vec![1.0; 7]],
        );
        let s = run("close", &p, 3).unwrap();
        let present: Vec<bool> = (0..7).map(|d| s.values.is_present(0, d)).collect();
        assert_eq!(present, vec![false, false, false, false, false, true, true]);
    }

    #[test]
    fn cond_and_comparisons() {
        let p = panel(vec![vec![1.0, 3.0, 2.0]], vec![vec![5.0; 3]]);
        let s = run("cond(close > delay(close, 1), volume, -volume)", &p, 2).unwrap();
        assert_eq!(s.values.value(0, 1), Some(5.0));
        assert_eq!(s.values.value(0, 2), Some(-5.0));
    }
}
