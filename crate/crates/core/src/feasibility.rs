//! OT-core search in finite deterministic two-party functions.
//!
//! A quadruple `(x, x', y, y')` is an OT-core of `F = (f_A, f_B)` when
//!
//! * `f_A(x, y) = f_A(x, y')`,
//! * `f_B(x, y) = f_B(x', y)`, and
//! * `f_A(x', y) != f_A(x', y')` or `f_B(x, y') != f_B(x', y')`.
//!
//! Inputs are labelled `0..|Gamma|`; outputs are arbitrary `u32` values.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest `|Gamma_A| * |Gamma_B|` accepted by [`find_ot_cores`].
pub const MAX_DOMAIN: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeasibilityError {
    #[error("input {value} is outside the alphabet of size {size} for party {party}")]
    OutOfAlphabet { party: char, value: usize, size: usize },
    #[error("domain of size {0} exceeds the exhaustive-search limit {MAX_DOMAIN}")]
    TooLarge(usize),
    #[error("alphabet size {0} is below the minimum of 2")]
    AlphabetSize(usize),
    #[error("function table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoPartyFunction {
    gamma_a: usize,
    gamma_b: usize,
    /// Row-major, `f_a[x * gamma_b + y]`.
    f_a: Vec<u32>,
    f_b: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Quad {
    pub x: usize,
    pub x_prime: usize,
    pub y: usize,
    pub y_prime: usize,
}

impl Quad {
    pub fn new(x: usize, x_prime: usize, y: usize, y_prime: usize) -> Self {
        Quad { x, x_prime, y, y_prime }
    }
}

impl fmt::Display for Quad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x, self.x_prime, self.y, self.y_prime)
    }
}

impl TwoPartyFunction {
    /// Builds a function from its two output tables, each `gamma_a` rows of
    /// `gamma_b` entries.
    pub fn new(gamma_a: usize, gamma_b: usize, f_a: Vec<u32>, f_b: Vec<u32>) -> Result<Self, FeasibilityError> {
        if gamma_a == 0 || gamma_b == 0 {
            return Err(FeasibilityError::Table("alphabets must be nonempty".into()));
        }
        let size = gamma_a.checked_mul(gamma_b).ok_or(FeasibilityError::TooLarge(usize::MAX))?;
        if f_a.len() != size || f_b.len() != size {
            return Err(FeasibilityError::Table(format!(
                "expected {size} entries per table, found {} and {}",
                f_a.len(),
                f_b.len()
            )));
        }
        Ok(TwoPartyFunction { gamma_a, gamma_b, f_a, f_b })
    }

    pub fn from_fn(gamma_a: usize, gamma_b: usize, f: impl Fn(usize, usize) -> (u32, u32)) -> Result<Self, FeasibilityError> {
        let (mut f_a, mut f_b) = (Vec::new(), Vec::new());
        for x in 0..gamma_a {
            for y in 0..gamma_b {
                let (a, b) = f(x, y);
                f_a.push(a);
                f_b.push(b);
            }
        }
        Self::new(gamma_a, gamma_b, f_a, f_b)
    }

    pub fn gamma_a(&self) -> usize {
        self.gamma_a
    }

    pub fn gamma_b(&self) -> usize {
        self.gamma_b
    }

    pub fn f_a(&self, x: usize, y: usize) -> u32 {
        self.f_a[x * self.gamma_b + y]
    }

    pub fn f_b(&self, x: usize, y: usize) -> u32 {
        self.f_b[x * self.gamma_b + y]
    }

    /// Parses a table file.
    ///
    /// The first line holds `|Gamma_A| |Gamma_B|`. Each of the following
    /// `|Gamma_A|` lines holds `|Gamma_B|` cells written `a,b`; a bare `v`
    /// gives both parties the common output `v`. Blank lines and text after
    /// `#` are ignored.
    pub fn parse_table(text: &str) -> Result<Self, FeasibilityError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let err = |line: usize, msg: String| FeasibilityError::Table(format!("line {line}: {msg}"));
        let (hline, header) = lines.next().ok_or_else(|| FeasibilityError::Table("empty table".into()))?;
        let sizes: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| err(hline, format!("bad alphabet size {t:?}"))))
            .collect::<Result<_, _>>()?;
        let [gamma_a, gamma_b] = sizes[..] else {
            return Err(err(hline, "header must hold two alphabet sizes".into()));
        };
        let (mut f_a, mut f_b) = (Vec::new(), Vec::new());
        let mut rows = 0;
        for (n, line) in lines {
            if rows == gamma_a {
                return Err(err(n, format!("more than {gamma_a} rows")));
            }
            let cells: Vec<&str> = line.split_whitespace().collect();
            if cells.len() != gamma_b {
                return Err(err(n, format!("expected {gamma_b} cells, found {}", cells.len())));
            }
            for cell in cells {
                let value = |t: &str| t.parse::<u32>().map_err(|_| err(n, format!("bad output {t:?}")));
                let (a, b) = match cell.split_once(',') {
                    Some((a, b)) => (value(a)?, value(b)?),
                    None => {
                        let v = value(cell)?;
                        (v, v)
                    }
                };
                f_a.push(a);
                f_b.push(b);
            }
            rows += 1;
        }
        if rows != gamma_a {
            return Err(FeasibilityError::Table(format!("expected {gamma_a} rows, found {rows}")));
        }
        Self::new(gamma_a, gamma_b, f_a, f_b)
    }

    /// Inverse of [`parse_table`](Self::parse_table).
    pub fn to_table(&self) -> String {
        let mut out = format!("{} {}\n", self.gamma_a, self.gamma_b);
        for x in 0..self.gamma_a {
            let row: Vec<String> = (0..self.gamma_b)
                .map(|y| {
                    let (a, b) = (self.f_a(x, y), self.f_b(x, y));
                    if a == b {
                        a.to_string()
                    } else {
                        format!("{a},{b}")
                    }
                })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    fn check(&self, q: &Quad) -> Result<(), FeasibilityError> {
        for (party, value, size) in [
            ('A', q.x, self.gamma_a),
            ('A', q.x_prime, self.gamma_a),
            ('B', q.y, self.gamma_b),
            ('B', q.y_prime, self.gamma_b),
        ] {
            if value >= size {
                return Err(FeasibilityError::OutOfAlphabet { party, value, size });
            }
        }
        Ok(())
    }

    fn core_unchecked(&self, q: &Quad) -> bool {
        let Quad { x, x_prime: xp, y, y_prime: yp } = *q;
        self.f_a(x, y) == self.f_a(x, yp)
            && self.f_b(x, y) == self.f_b(xp, y)
            && (self.f_a(xp, y) != self.f_a(xp, yp) || self.f_b(x, yp) != self.f_b(xp, yp))
    }
}

pub fn is_ot_core(f: &TwoPartyFunction, q: &Quad) -> Result<bool, FeasibilityError> {
    f.check(q)?;
    Ok(f.core_unchecked(q))
}

/// Every OT-core of `f`, in lexicographic order of `(x, x', y, y')`.
pub fn find_ot_cores(f: &TwoPartyFunction) -> Result<Vec<Quad>, FeasibilityError> {
    let size = f.gamma_a * f.gamma_b;
    if size > MAX_DOMAIN {
        return Err(FeasibilityError::TooLarge(size));
    }
    let mut cores = Vec::new();
    for x in 0..f.gamma_a {
        for x_prime in 0..f.gamma_a {
            for y in 0..f.gamma_b {
                for y_prime in 0..f.gamma_b {
                    let q = Quad { x, x_prime, y, y_prime };
                    if f.core_unchecked(&q) {
                        cores.push(q);
                    }
                }
            }
        }
    }
    Ok(cores)
}

/// `f_A = f_B = [x = y]` over an alphabet of the given size.
pub fn equality_function(size: usize) -> Result<TwoPartyFunction, FeasibilityError> {
    if size < 2 {
        return Err(FeasibilityError::AlphabetSize(size));
    }
    TwoPartyFunction::from_fn(size, size, |x, y| {
        let eq = u32::from(x == y);
        (eq, eq)
    })
}
