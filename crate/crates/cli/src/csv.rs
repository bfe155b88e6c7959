//! Bit-stable CSV output: header always present, fixed column order, LF
//! line endings, real numbers with six significant digits (`%g` style),
//! integers written exactly.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Text(String),
    /// Written as `1` / `0`.
    Flag(bool),
    /// An empty field, for values that do not exist (e.g. infeasible
    /// points).
    Missing,
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Flag(v)
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `%g` with six significant digits: plain notation for exponents in
/// `[-4, 6)`, otherwise `d.ddddde+XX`; trailing zeros removed.
pub fn format_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_fraction(mantissa), exp.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            bail!("row has {} cells, table has {} columns", row.len(), self.columns.len());
        }
        if let Some(Cell::Num(x)) = row.iter().find(|c| matches!(c, Cell::Num(x) if !x.is_finite())) {
            bail!("refusing to write non-finite value {x}");
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                match cell {
                    Cell::Int(v) => write!(out, "{v}").unwrap(),
                    Cell::Num(v) => out.push_str(&format_g6(*v)),
                    Cell::Text(s) => out.push_str(s),
                    Cell::Flag(b) => out.push(if *b { '1' } else { '0' }),
                    Cell::Missing => {}
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits_like_printf_g() {
        let cases = [
            (0.0, "0"),
            (-0.0, "0"),
            (1.0, "1"),
            (0.5, "0.5"),
            (123456.0, "123456"),
            (1234567.0, "1.23457e+06"),
            (0.000123456789, "0.000123457"),
            (0.0000123456, "1.23456e-05"),
            (2.098176, "2.09818"),
            (-4.32109876, "-4.3211"),
            (999999.5, "1e+06"),
            (0.1 + 0.2, "0.3"),
            (1e-300, "1e-300"),
            (0.9999995, "1"),
        ];
        for (x, want) in cases {
            assert_eq!(format_g6(x), want, "{x:e}");
        }
    }

    #[test]
    fn render_uses_lf_and_fixed_columns() {
        let mut t = Table::new(&["a", "b", "c", "d", "e"]);
        t.push(vec![Cell::Int(3), Cell::Num(0.25), "x".into(), true.into(), Cell::Missing]).unwrap();
        assert_eq!(t.render(), "a,b,c,d,e\n3,0.25,x,1,\n");
        assert!(t.push(vec![Cell::Int(1)]).is_err());
        let nan_row = vec![Cell::Num(f64::NAN), Cell::Int(0), Cell::Int(0), Cell::Int(0), Cell::Int(0)];
        assert!(t.push(nan_row).is_err());
    }
}
