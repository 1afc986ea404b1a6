//! Expression bundles: UTF-8 text with one `name = formula` per line and
//! `#` starting a comment.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use super::ast::AlphaExpression;

/// A bundle shipped with the crate covering the factors that survive the
/// double-selection screen in the reference study. Formulas follow publicly
/// circulated Alpha191 definitions and are not part of that study.
pub const REPRESENTATIVE_BUNDLE: &str = include_str!("../../bundles/alpha191_representative.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct BundleFailure {
    pub line: usize,
    pub name: Option<String>,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("cannot read bundle {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{}", format_failures(.0))]
    Invalid(Vec<BundleFailure>),
}

fn format_failures(failures: &[BundleFailure]) -> String {
    let lines: Vec<String> = failures
        .iter()
        .map(|f| match &f.name {
            Some(n) => format!("line {} ({n}): {}", f.line, f.message),
            None => format!("line {}: {}", f.line, f.message),
        })
        .collect();
    format!("{} invalid bundle line(s): {}", failures.len(), lines.join("; "))
}

#[derive(Debug, Clone, Default)]
pub struct Bundle {
    pub expressions: Vec<AlphaExpression>,
    pub warnings: Vec<String>,
}

impl fmt::Display for Bundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.expressions {
            writeln!(f, "{} = {}", e.name, e.source)?;
        }
        Ok(())
    }
}

/// Parses every line; fails with all offending lines if any is invalid.
pub fn parse_bundle(text: &str) -> Result<Bundle, BundleError> {
    let mut bundle = Bundle::default();
    let mut failures = Vec::new();
    let mut names = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((name, formula)) = line.split_once('=').filter(|(n, _)| {
            // `==` inside a formula is not a separator
            !n.trim().is_empty() && !n.ends_with(['<', '>', '!', '='])
        }) else {
            failures.push(BundleFailure {
                line: line_no,
                name: None,
                message: "expected `name = formula`".into(),
            });
            continue;
        };
        let name = name.trim().to_string();
        if !names.insert(name.clone()) {
            failures.push(BundleFailure {
                line: line_no,
                name: Some(name),
                message: "duplicate expression name".into(),
            });
            continue;
        }
        match AlphaExpression::parse(name.clone(), formula.trim()) {
            Ok(e) => bundle.expressions.push(e),
            Err(e) => failures.push(BundleFailure {
                line: line_no,
                name: Some(name),
                message: e.to_string(),
            }),
        }
    }
    if !failures.is_empty() {
        return Err(BundleError::Invalid(failures));
    }
    if bundle.expressions.is_empty() {
        let msg = "bundle contains no expressions".to_string();
        log::warn!("{msg}");
        bundle.warnings.push(msg);
    }
    Ok(bundle)
}

pub fn load_expression_bundle(path: &Path) -> Result<Bundle, BundleError> {
    let text = std::fs::read_to_string(path).map_err(|e| BundleError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_bundle(&text)
}

pub fn representative_bundle() -> Bundle {
    parse_bundle(REPRESENTATIVE_BUNDLE).expect("bundled expressions parse")
}
