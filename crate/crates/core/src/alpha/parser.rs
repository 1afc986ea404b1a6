//! Recursive-descent parser.
//!
//! Precedence, loosest first: comparison, `+ -`, `* /`, unary minus.
//! Binary operators are left associative.

use std::fmt;

use super::ast::{BinaryOp, Column, Expr, Func};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("at byte {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    BadNumber(String),
    UnexpectedToken(String),
    UnexpectedEnd,
    UnknownFunction(String),
    UnknownIdentifier(String),
    Arity {
        func: &'static str,
        series: usize,
        params: usize,
        got: usize,
    },
    BadWindow {
        func: &'static str,
        min: usize,
    },
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnexpectedChar(c) => write!(f, "unexpected character '{c}'"),
            Self::BadNumber(s) => write!(f, "malformed number \"{s}\""),
            Self::UnexpectedToken(t) => write!(f, "unexpected {t}"),
            Self::UnexpectedEnd => f.write_str("unexpected end of input"),
            Self::UnknownFunction(n) => write!(f, "unknown function \"{n}\""),
            Self::UnknownIdentifier(n) => write!(f, "unknown identifier \"{n}\""),
            Self::Arity {
                func,
                series,
                params,
                got,
            } => {
                write!(f, "{func} expects {} arguments ({series} series", series + params)?;
                if *params > 0 {
                    write!(f, " + {params} integer")?;
                }
                write!(f, "), got {got}")
            }
            Self::BadWindow { func, min } => {
                write!(f, "{func} window argument must be an integer literal >= {min}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    LParen,
    RParen,
    Comma,
    Op(BinaryOp),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier \"{s}\""),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Op(op) => format!("'{}'", op.symbol()),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let err = |kind| Err(ParseError { offset: start, kind });
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'(' => out.push((Tok::LParen, i)),
            b')' => out.push((Tok::RParen, i)),
            b',' => out.push((Tok::Comma, i)),
            b'+' => out.push((Tok::Op(BinaryOp::Add), i)),
            b'-' => out.push((Tok::Op(BinaryOp::Sub), i)),
            b'*' => out.push((Tok::Op(BinaryOp::Mul), i)),
            b'/' => out.push((Tok::Op(BinaryOp::Div), i)),
            b'<' | b'>' | b'=' | b'!' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                let op = match (c, eq) {
                    (b'<', false) => BinaryOp::Lt,
                    (b'<', true) => BinaryOp::Le,
                    (b'>', false) => BinaryOp::Gt,
                    (b'>', true) => BinaryOp::Ge,
                    (b'=', true) => BinaryOp::Eq,
                    (b'!', true) => BinaryOp::Ne,
                    _ => return err(ParseErrorKind::UnexpectedChar(c as char)),
                };
                if eq {
                    i += 1;
                }
                out.push((Tok::Op(op), start));
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    i += 1;
                    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                        i += 1;
                    }
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let text = &src[start..i];
                match text.parse::<f64>() {
                    Ok(v) => out.push((Tok::Num(v), start)),
                    Err(_) => return err(ParseErrorKind::BadNumber(text.into())),
                }
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_ascii_lowercase()), start));
                continue;
            }
            _ => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return err(ParseErrorKind::UnexpectedChar(ch));
            }
        }
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, o)| *o)
    }

    fn next(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn fail<T>(&self, kind: ParseErrorKind) -> Result<T, ParseError> {
        Err(ParseError {
            offset: self.offset(),
            kind,
        })
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => self.fail(ParseErrorKind::UnexpectedToken(t.describe())),
            None => self.fail(ParseErrorKind::UnexpectedEnd),
        }
    }

    fn binary_level(
        &mut self,
        ops: &[BinaryOp],
        operand: fn(&mut Self) -> Result<Expr, ParseError>,
    ) -> Result<Expr, ParseError> {
        let mut lhs = operand(self)?;
        while let Some(Tok::Op(op)) = self.peek() {
            let op = *op;
            if !ops.contains(&op) {
                break;
            }
            self.pos += 1;
            let rhs = operand(self)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        use BinaryOp::*;
        self.binary_level(&[Lt, Le, Gt, Ge, Eq, Ne], Self::additive)
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(&[BinaryOp::Add, BinaryOp::Sub], Self::term)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(&[BinaryOp::Mul, BinaryOp::Div], Self::unary)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(&Tok::Op(BinaryOp::Sub)) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.next() {
            Some((Tok::Num(v), _)) => Ok(Expr::Num(v)),
            Some((Tok::LParen, _)) => {
                let e = self.comparison()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some((Tok::Ident(name), _)) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    self.call(name, offset)
                } else if let Some(col) = Column::from_name(&name) {
                    Ok(Expr::Col(col))
                } else {
                    Err(ParseError {
                        offset,
                        kind: ParseErrorKind::UnknownIdentifier(name),
                    })
                }
            }
            Some((t, o)) => Err(ParseError {
                offset: o,
                kind: ParseErrorKind::UnexpectedToken(t.describe()),
            }),
            None => Err(ParseError {
                offset,
                kind: ParseErrorKind::UnexpectedEnd,
            }),
        }
    }

    fn call(&mut self, name: String, offset: usize) -> Result<Expr, ParseError> {
        let Some(func) = Func::from_name(&name) else {
            return Err(ParseError {
                offset,
                kind: ParseErrorKind::UnknownFunction(name),
            });
        };
        let mut args = Vec::new();
        if self.peek() != Some(&Tok::RParen) {
            loop {
                let at = self.offset();
                args.push((self.comparison()?, at));
                if self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;

        let (series, params) = func.signature();
        if args.len() != series + params {
            return Err(ParseError {
                offset,
                kind: ParseErrorKind::Arity {
                    func: func.name(),
                    series,
                    params,
                    got: args.len(),
                },
            });
        }
        let param_args = args.split_off(series);
        let mut windows = Vec::with_capacity(params);
        for (k, (expr, at)) in param_args.into_iter().enumerate() {
            let min = if k == 0 { func.min_window() } else { 1 };
            match expr {
                Expr::Num(v) if v.fract() == 0.0 && v >= min as f64 && v <= u32::MAX as f64 => {
                    windows.push(v as usize)
                }
                _ => {
                    return Err(ParseError {
                        offset: at,
                        kind: ParseErrorKind::BadWindow {
                            func: func.name(),
                            min,
                        },
                    })
                }
            }
        }
        // sma(x, n, m) needs 1 <= m <= n for a convex recursion.
        if func == Func::Sma && windows[1] > windows[0] {
            return Err(ParseError {
                offset,
                kind: ParseErrorKind::BadWindow {
                    func: func.name(),
                    min: 1,
                },
            });
        }
        Ok(Expr::Call {
            func,
            args: args.into_iter().map(|(e, _)| e).collect(),
            params: windows,
        })
    }
}

/// Parses formula text into an expression tree.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: src.len(),
    };
    let e = p.comparison()?;
    match p.peek() {
        None => Ok(e),
        Some(t) => p.fail(ParseErrorKind::UnexpectedToken(t.describe())),
    }
}
