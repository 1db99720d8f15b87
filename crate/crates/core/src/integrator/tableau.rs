use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

const ROK2_SOURCE: &str = include_str!("../../tableaus/rok2.tab");
const ROK4A_SOURCE: &str = include_str!("../../tableaus/rok4a.tab");

/// Tolerance on `sum(b) = 1`.
const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableauError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("unknown built-in tableau `{0}`")]
    Unknown(String),
}

/// Coefficients of an `s`-stage linearly implicit method
/// `k_i = phi(h gamma A) (h F_i + h A sum_{j<i} gamma_ij k_j)`,
/// `F_i = f(y_n + sum_{j<i} alpha_ij k_j)`, `y_{n+1} = y_n + sum b_i k_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodTableau {
    pub name: String,
    pub s: usize,
    /// Strictly lower triangular.
    pub alpha: DMatrix<f64>,
    /// Strictly lower triangular; the diagonal is `gamma_diag`.
    pub gamma_lower: DMatrix<f64>,
    pub gamma_diag: f64,
    pub b: DVector<f64>,
    pub b_hat: Option<DVector<f64>>,
    pub order: usize,
    pub order_hat: usize,
}

impl MethodTableau {
    /// Two-stage order-2 method with an order-1 embedded solution.
    pub fn rok2() -> Self {
        load_tableau(ROK2_SOURCE).expect("bundled rok2 tableau is valid")
    }

    /// Four-stage order-4 method with an order-3 embedded solution.
    pub fn rok4a() -> Self {
        load_tableau(ROK4A_SOURCE).expect("bundled rok4a tableau is valid")
    }

    /// Looks up a bundled tableau by name.
    pub fn builtin(name: &str) -> Result<Self, TableauError> {
        match name.to_ascii_lowercase().as_str() {
            "rok2" => Ok(Self::rok2()),
            "rok4a" | "rok4" => Ok(Self::rok4a()),
            _ => Err(TableauError::Unknown(name.to_string())),
        }
    }

    /// `Gamma` including the diagonal.
    pub fn gamma_full(&self) -> DMatrix<f64> {
        let mut g = self.gamma_lower.clone();
        for i in 0..self.s {
            g[(i, i)] = self.gamma_diag;
        }
        g
    }

    /// `b - b_hat`, if an embedded method is present.
    pub fn error_weights(&self) -> Option<DVector<f64>> {
        self.b_hat.as_ref().map(|bh| &self.b - bh)
    }

    /// Nodes `c_i = sum_j alpha_ij`.
    pub fn c(&self) -> DVector<f64> {
        DVector::from_iterator(self.s, self.alpha.row_iter().map(|r| r.sum()))
    }

    fn validate(&self) -> Result<(), TableauError> {
        let invalid = |field: &str, message: String| TableauError::Validation { field: field.into(), message };
        if !(self.gamma_diag > 0.0) || !self.gamma_diag.is_finite() {
            return Err(invalid("gamma_diag", format!("must be positive, got {}", self.gamma_diag)));
        }
        for (field, m) in [("alpha", &self.alpha), ("gamma", &self.gamma_lower)] {
            for i in 0..self.s {
                for j in i..self.s {
                    if m[(i, j)] != 0.0 {
                        return Err(invalid(field, format!("entry ({}, {}) is not strictly lower", i + 1, j + 1)));
                    }
                }
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(invalid(field, "non-finite entry".into()));
            }
        }
        let sum = self.b.sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(invalid("b", format!("weights sum to {sum}, expected 1")));
        }
        if let Some(bh) = &self.b_hat {
            let sum = bh.sum();
            if self.order_hat >= 1 && (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(invalid("bhat", format!("weights sum to {sum}, expected 1")));
            }
        }
        if self.order == 0 {
            return Err(invalid("order", "order must be at least 1".into()));
        }
        Ok(())
    }
}

impl fmt::Display for MethodTableau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (s = {}, order {}({}))", self.name, self.s, self.order, self.order_hat)
    }
}

/// Parses a tableau file.
///
/// The format is line oriented: `s <int>`, `order <p> [<p_hat>]`,
/// `gamma_diag <real>`, `alpha i j <real>` and `gamma i j <real>` with 1-based
/// strictly lower indices, `b <s reals>`, optionally `bhat <s reals>` and
/// `name <ident>`. `#` starts a comment.
pub fn load_tableau(source: &str) -> Result<MethodTableau, TableauError> {
    let mut name = None;
    let mut s: Option<usize> = None;
    let mut order = None;
    let mut gamma_diag = None;
    let mut entries: Vec<(&str, usize, usize, f64, usize)> = Vec::new();
    let mut b = None;
    let mut b_hat = None;

    for (lineno, raw) in source.lines().enumerate() {
        let line = lineno + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let err = |message: String| TableauError::Parse { line, message };
        let mut tokens = text.split_whitespace();
        let key = tokens.next().expect("nonempty line");
        let rest: Vec<&str> = tokens.collect();
        let real = |tok: &str| tok.parse::<f64>().map_err(|_| err(format!("`{tok}` is not a number")));
        let int = |tok: &str| tok.parse::<usize>().map_err(|_| err(format!("`{tok}` is not a nonnegative integer")));
        match key {
            "name" => {
                if rest.len() != 1 {
                    return Err(err("`name` takes one identifier".into()));
                }
                name = Some(rest[0].to_string());
            }
            "s" => {
                if rest.len() != 1 {
                    return Err(err("`s` takes one integer".into()));
                }
                let v = int(rest[0])?;
                if v == 0 {
                    return Err(err("stage count must be positive".into()));
                }
                s = Some(v);
            }
            "order" => match rest.as_slice() {
                [p] => order = Some((int(p)?, 0)),
                [p, q] => order = Some((int(p)?, int(q)?)),
                _ => return Err(err("`order` takes one or two integers".into())),
            },
            "gamma_diag" => {
                if rest.len() != 1 {
                    return Err(err("`gamma_diag` takes one number".into()));
                }
                gamma_diag = Some(real(rest[0])?);
            }
            "alpha" | "gamma" => {
                if rest.len() != 3 {
                    return Err(err(format!("`{key}` takes `i j value`")));
                }
                entries.push((
                    if key == "alpha" { "alpha" } else { "gamma" },
                    int(rest[0])?,
                    int(rest[1])?,
                    real(rest[2])?,
                    line,
                ));
            }
            "b" | "bhat" => {
                let v = rest.iter().map(|t| real(t)).collect::<Result<Vec<_>, _>>()?;
                if v.is_empty() {
                    return Err(err(format!("`{key}` needs at least one weight")));
                }
                if key == "b" {
                    b = Some((v, line));
                } else {
                    b_hat = Some((v, line));
                }
            }
            other => return Err(err(format!("unknown key `{other}`"))),
        }
    }

    let missing = |what: &str| TableauError::Parse { line: 0, message: format!("missing `{what}`") };
    let s = s.ok_or_else(|| missing("s"))?;
    let (order, order_hat) = order.ok_or_else(|| missing("order"))?;
    let gamma_diag = gamma_diag.ok_or_else(|| missing("gamma_diag"))?;
    let (b, b_line) = b.ok_or_else(|| missing("b"))?;

    let mut alpha = DMatrix::zeros(s, s);
    let mut gamma_lower = DMatrix::zeros(s, s);
    for (field, i, j, v, line) in entries {
        if i == 0 || j == 0 || i > s || j > s {
            return Err(TableauError::Parse { line, message: format!("index ({i}, {j}) out of range for s = {s}") });
        }
        if j >= i {
            return Err(TableauError::Validation {
                field: format!("{field} {i} {j} (line {line})"),
                message: "entries must be strictly lower triangular".into(),
            });
        }
        let m = if field == "alpha" { &mut alpha } else { &mut gamma_lower };
        m[(i - 1, j - 1)] = v;
    }
    let weights = |v: Vec<f64>, line: usize, field: &str| {
        if v.len() != s {
            Err(TableauError::Parse { line, message: format!("`{field}` has {} weights, expected {s}", v.len()) })
        } else {
            Ok(DVector::from_vec(v))
        }
    };
    let b = weights(b, b_line, "b")?;
    let b_hat = b_hat.map(|(v, line)| weights(v, line, "bhat")).transpose()?;

    let tableau = MethodTableau {
        name: name.unwrap_or_else(|| format!("tableau-s{s}-p{order}")),
        s,
        alpha,
        gamma_lower,
        gamma_diag,
        b,
        b_hat,
        order,
        order_hat,
    };
    tableau.validate()?;
    Ok(tableau)
}
