use std::collections::BTreeSet;
use std::fmt;

use crate::panel::Field;

/// Panel columns an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Column {
    Open,
    High,
    Low,
    Close,
    Vwap,
    Volume,
    MarketCap,
    Return,
}

impl Column {
    pub fn from_name(name: &str) -> Option<Column> {
        Some(match name {
            "open" => Column::Open,
            "high" => Column::High,
            "low" => Column::Low,
            "close" => Column::Close,
            "vwap" => Column::Vwap,
            "volume" => Column::Volume,
            "market_cap" => Column::MarketCap,
            "return" | "returns" => Column::Return,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Column::Return => "return",
            other => other.field().expect("price field").name(),
        }
    }

    /// The panel field backing this column; `None` for returns.
    pub fn field(self) -> Option<Field> {
        Some(match self {
            Column::Open => Field::Open,
            Column::High => Field::High,
            Column::Low => Field::Low,
            Column::Close => Field::Close,
            Column::Vwap => Field::Vwap,
            Column::Volume => Field::Volume,
            Column::MarketCap => Field::MarketCap,
            Column::Return => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
        }
    }
}

/// Built-in operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Rank,
    CsMean,
    TsRank,
    Delay,
    Delta,
    TsMin,
    TsMax,
    TsSum,
    TsMean,
    TsStd,
    Corr,
    Cov,
    DecayLinear,
    Sma,
    Sign,
    Abs,
    Log,
    Min,
    Max,
    Power,
    Cond,
}

impl Func {
    pub const ALL: [Func; 21] = [
        Func::Rank,
        Func::CsMean,
        Func::TsRank,
        Func::Delay,
        Func::Delta,
        Func::TsMin,
        Func::TsMax,
        Func::TsSum,
        Func::TsMean,
        Func::TsStd,
        Func::Corr,
        Func::Cov,
        Func::DecayLinear,
        Func::Sma,
        Func::Sign,
        Func::Abs,
        Func::Log,
        Func::Min,
        Func::Max,
        Func::Power,
        Func::Cond,
    ];

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Rank => "rank",
            Func::CsMean => "cs_mean",
            Func::TsRank => "ts_rank",
            Func::Delay => "delay",
            Func::Delta => "delta",
            Func::TsMin => "ts_min",
            Func::TsMax => "ts_max",
            Func::TsSum => "ts_sum",
            Func::TsMean => "ts_mean",
            Func::TsStd => "ts_std",
            Func::Corr => "corr",
            Func::Cov => "cov",
            Func::DecayLinear => "decay_linear",
            Func::Sma => "sma",
            Func::Sign => "sign",
            Func::Abs => "abs",
            Func::Log => "log",
            Func::Min => "min",
            Func::Max => "max",
            Func::Power => "power",
            Func::Cond => "cond",
        }
    }

    /// `(series arguments, trailing integer parameters)`.
    pub fn signature(self) -> (usize, usize) {
        match self {
            Func::Rank | Func::CsMean | Func::Sign | Func::Abs | Func::Log => (1, 0),
            Func::Min | Func::Max | Func::Power => (2, 0),
            Func::Cond => (3, 0),
            Func::TsRank
            | Func::Delay
            | Func::Delta
            | Func::TsMin
            | Func::TsMax
            | Func::TsSum
            | Func::TsMean
            | Func::TsStd
            | Func::DecayLinear => (1, 1),
            Func::Corr | Func::Cov => (2, 1),
            Func::Sma => (1, 2),
        }
    }

    /// Smallest legal value of the first integer parameter.
    pub fn min_window(self) -> usize {
        match self {
            Func::TsStd | Func::Corr | Func::Cov => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Col(Column),
    Num(f64),
    Neg(Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Call {
        func: Func,
        args: Vec<Expr>,
        params: Vec<usize>,
    },
}

impl Expr {
    pub fn call(func: Func, args: Vec<Expr>, params: Vec<usize>) -> Expr {
        Expr::Call { func, args, params }
    }

    /// Number of consecutive dates (ending at the evaluation date) the
    /// expression reads from.
    pub fn span(&self) -> usize {
        match self {
            Expr::Col(_) | Expr::Num(_) => 1,
            Expr::Neg(e) => e.span(),
            Expr::Binary(_, a, b) => a.span().max(b.span()),
            Expr::Call { func, args, params } => {
                let inner = args.iter().map(Expr::span).max().unwrap_or(1);
                match func {
                    Func::Delay | Func::Delta => inner + params[0],
                    Func::Sma
                    | Func::TsRank
                    | Func::TsMin
                    | Func::TsMax
                    | Func::TsSum
                    | Func::TsMean
                    | Func::TsStd
                    | Func::Corr
                    | Func::Cov
                    | Func::DecayLinear => inner + params[0] - 1,
                    _ => inner,
                }
            }
        }
    }

    pub fn columns(&self) -> BTreeSet<Column> {
        let mut out = BTreeSet::new();
        self.collect_columns(&mut out);
        out
    }

    fn collect_columns(&self, out: &mut BTreeSet<Column>) {
        match self {
            Expr::Col(c) => {
                out.insert(*c);
            }
            Expr::Num(_) => {}
            Expr::Neg(e) => e.collect_columns(out),
            Expr::Binary(_, a, b) => {
                a.collect_columns(out);
                b.collect_columns(out);
            }
            Expr::Call { args, .. } => args.iter().for_each(|a| a.collect_columns(out)),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Col(c) => f.write_str(c.name()),
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call { func, args, params } => {
                write!(f, "{}(", func.name())?;
                let parts: Vec<String> = args
                    .iter()
                    .map(ToString::to_string)
                    .chain(params.iter().map(ToString::to_string))
                    .collect();
                write!(f, "{})", parts.join(", "))
            }
        }
    }
}

/// A named, parsed signal formula.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaExpression {
    pub name: String,
    pub source: String,
    pub ast: Expr,
}

impl AlphaExpression {
    pub fn parse(name: impl Into<String>, source: impl Into<String>) -> Result<Self, super::ParseError> {
        let source = source.into();
        let ast = super::parse(&source)?;
        Ok(Self {
            name: name.into(),
            source,
            ast,
        })
    }
}
