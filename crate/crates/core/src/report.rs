//! Text rendering of premium tables.
//!
//! Rows are ordered by descending |t| of the first table (missing t last,
//! ties in input order). Premia are shown in basis points rounded to whole
//! numbers and t-statistics to two decimals; stars follow each table's
//! significance thresholds.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::pipeline::{PremiumRow, PremiumTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Tsv,
    Markdown,
}

impl FromStr for Style {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(Style::Tsv),
            "markdown" | "md" => Ok(Style::Markdown),
            _ => Err(format!("unknown style `{s}`")),
        }
    }
}

pub const TSV_HEADER: &str = "factor\tlambda_bp\tt\tstars\testimator";

pub fn format_bp(coefficient: f64) -> String {
    let v = (coefficient * 1e4).round();
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v:.0}")
    }
}

pub fn format_t(t: Option<f64>) -> String {
    match t {
        Some(t) if t.is_finite() => {
            let s = format!("{t:.2}");
            if s == "-0.00" {
                "0.00".into()
            } else {
                s
            }
        }
        _ => "n/a".into(),
    }
}

/// `"<bp>, <t><stars>"`, e.g. `79, 3.68**`.
pub fn format_cell(table: &PremiumTable, row: &PremiumRow) -> String {
    format!("{}, {}{}", format_bp(row.coefficient), format_t(row.t), table.stars(row))
}

fn order(rows: &[PremiumRow]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    let key = |i: usize| rows[i].t.filter(|t| t.is_finite()).map(f64::abs);
    idx.sort_by(|&a, &b| match (key(a), key(b)) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    idx
}

pub fn render_table(table: &PremiumTable, style: Style) -> String {
    render_tables(std::slice::from_ref(table), style)
}

/// Renders several estimators' tables. TSV stacks them in long form;
/// markdown puts one column per estimator, matching rows by factor name.
pub fn render_tables(tables: &[PremiumTable], style: Style) -> String {
    let mut out = String::new();
    match style {
        Style::Tsv => {
            out.push_str(TSV_HEADER);
            out.push('\n');
            for table in tables {
                for i in order(&table.alphas) {
                    let r = &table.alphas[i];
                    out.push_str(&format!(
                        "{}\t{}\t{}\t{}\t{}\n",
                        r.factor,
                        format_bp(r.coefficient),
                        format_t(r.t),
                        table.stars(r),
                        table.estimator
                    ));
                }
            }
        }
        Style::Markdown => {
            out.push_str("| factor |");
            for t in tables {
                out.push_str(&format!(" {} |", t.estimator));
            }
            out.push_str("\n|---|");
            out.push_str(&"---|".repeat(tables.len()));
            out.push('\n');
            let Some(lead) = tables.first() else { return out };
            for i in order(&lead.alphas) {
                let name = &lead.alphas[i].factor;
                out.push_str(&format!("| {name} |"));
                for t in tables {
                    let cell = t.alpha(name).map(|r| format_cell(t, r)).unwrap_or_default();
                    out.push_str(&format!(" {cell} |"));
                }
                out.push('\n');
            }
        }
    }
    out
}
