//! Dense column-major matrices and the plain-text matrix fixture format.
//!
//! The text format is a header line `rows cols R|C` followed by the entries
//! in row-major order, separated by whitespace. Complex entries are written
//! as `a+bi` / `a-bi`; a bare number is read as a real value.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::linalg;
use crate::model::{Scalar, ScalarField};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    /// Column-major.
    data: Vec<Scalar>,
    field: ScalarField,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize, field: ScalarField) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![Scalar::new(0.0, 0.0); rows * cols],
            field,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n, ScalarField::Real);
        for i in 0..n {
            m.data[i * n + i] = Scalar::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Scalar) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                data.push(f(r, c));
            }
        }
        let field = ScalarField::of_values(&data);
        DenseMatrix { rows, cols, data, field }
    }

    pub fn from_row_major(rows: usize, cols: usize, entries: &[Scalar]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}×{cols} matrix",
                entries.len()
            )));
        }
        Ok(DenseMatrix::from_fn(rows, cols, |r, c| entries[r * cols + c]))
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Ok(DenseMatrix::from_fn(n_rows, n_cols, |r, c| Scalar::new(rows[r][c], 0.0)))
    }

    pub(crate) fn from_col_major(rows: usize, cols: usize, data: Vec<Scalar>, field: ScalarField) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        DenseMatrix { rows, cols, data, field }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    pub fn get(&self, r: usize, c: usize) -> Scalar {
        self.data[c * self.rows + r]
    }

    pub fn column(&self, c: usize) -> &[Scalar] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// `self · x`.
    pub fn mul_vec(&self, x: &[Scalar]) -> Vec<Scalar> {
        assert_eq!(x.len(), self.cols, "mul_vec dimension");
        let mut out = vec![Scalar::new(0.0, 0.0); self.rows];
        for (c, xc) in x.iter().enumerate() {
            if !crate::model::is_zero(xc) {
                linalg::axpy(*xc, self.column(c), &mut out);
            }
        }
        out
    }

    /// `self^* · z`.
    pub fn adjoint_mul_vec(&self, z: &[Scalar]) -> Vec<Scalar> {
        assert_eq!(z.len(), self.rows, "adjoint_mul_vec dimension");
        (0..self.cols).map(|c| linalg::dot(self.column(c), z)).collect()
    }

    pub fn to_nalgebra(&self) -> DMatrix<Scalar> {
        DMatrix::from_column_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<Scalar>) -> Self {
        let data = m.as_slice().to_vec();
        let field = ScalarField::of_values(&data);
        DenseMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
            field,
        }
    }

    /// `self^* · self`.
    pub(crate) fn gram(&self) -> DMatrix<Scalar> {
        let m = self.to_nalgebra();
        m.adjoint() * m
    }

    /// `self^* · other`.
    pub(crate) fn cross_gram(&self, other: &DenseMatrix) -> DMatrix<Scalar> {
        self.to_nalgebra().adjoint() * other.to_nalgebra()
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &DenseMatrix) -> DenseMatrix {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut out = DenseMatrix::from_fn(rows, cols, |r, c| {
            self.get(r / other.rows, c / other.cols) * other.get(r % other.rows, c % other.cols)
        });
        out.field = self.field.join(other.field);
        out
    }
}

impl fmt::Display for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.field {
            ScalarField::Real => 'R',
            ScalarField::Complex => 'C',
        };
        writeln!(f, "{} {} {}", self.rows, self.cols, tag)?;
        for r in 0..self.rows {
            let mut line = String::new();
            for c in 0..self.cols {
                if c > 0 {
                    line.push(' ');
                }
                let v = self.get(r, c);
                match self.field {
                    ScalarField::Real => write!(line, "{:?}", v.re)?,
                    ScalarField::Complex if v.im.is_sign_negative() => {
                        write!(line, "{:?}-{:?}i", v.re, -v.im)?
                    }
                    ScalarField::Complex => write!(line, "{:?}+{:?}i", v.re, v.im)?,
                }
            }
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

impl FromStr for DenseMatrix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty matrix file".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "matrix header must be `rows cols R|C`, got `{header}`"
            )));
        }
        let rows: usize = parts[0]
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad row count `{}`", parts[0])))?;
        let cols: usize = parts[1]
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad column count `{}`", parts[1])))?;
        let field = match parts[2] {
            "R" => ScalarField::Real,
            "C" => ScalarField::Complex,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "field must be R or C, got `{other}`"
                )))
            }
        };
        let entries = lines
            .flat_map(str::split_whitespace)
            .map(parse_scalar)
            .collect::<Result<Vec<_>>>()?;
        if field == ScalarField::Real && entries.iter().any(|v| v.im != 0.0) {
            return Err(Error::InvalidArgument(
                "complex entry in a matrix declared R".into(),
            ));
        }
        let mut m = DenseMatrix::from_row_major(rows, cols, &entries)?;
        m.field = field;
        Ok(m)
    }
}

/// Parses `a`, `a+bi`, `a-bi` or `bi`.
fn parse_scalar(token: &str) -> Result<Scalar> {
    let bad = || Error::InvalidArgument(format!("cannot parse matrix entry `{token}`"));
    let Some(body) = token.strip_suffix('i') else {
        return token.parse::<f64>().map(|re| Scalar::new(re, 0.0)).map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    // last sign that is neither leading nor part of an exponent
    let split = (1..bytes.len())
        .rev()
        .find(|&p| (bytes[p] == b'+' || bytes[p] == b'-') && !matches!(bytes[p - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(p) => (&body[..p], &body[p..]),
        None => ("0", body),
    };
    let im = match im {
        "+" | "" => "1",
        "-" => "-1",
        other => other,
    };
    let re: f64 = re.parse().map_err(|_| bad())?;
    let im: f64 = im.trim_start_matches('+').parse().map_err(|_| bad())?;
    Ok(Scalar::new(re, im))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries() {
        assert_eq!(parse_scalar("1.5").unwrap(), Scalar::new(1.5, 0.0));
        assert_eq!(parse_scalar("1.5-2i").unwrap(), Scalar::new(1.5, -2.0));
        assert_eq!(parse_scalar("-1e-3+4.5e2i").unwrap(), Scalar::new(-1e-3, 450.0));
        assert_eq!(parse_scalar("3i").unwrap(), Scalar::new(0.0, 3.0));
        assert_eq!(parse_scalar("-i").unwrap(), Scalar::new(0.0, -1.0));
        assert!(parse_scalar("abc").is_err());
    }

    #[test]
    fn text_format_roundtrip() {
        let m = DenseMatrix::from_row_major(
            2,
            2,
            &[
                Scalar::new(1.0, 0.0),
                Scalar::new(0.25, -3.0),
                Scalar::new(-2.0, 1e-20),
                Scalar::new(0.0, 0.0),
            ],
        )
        .unwrap();
        let text = m.to_string();
        assert!(text.starts_with("2 2 C\n"));
        let back: DenseMatrix = text.parse().unwrap();
        assert_eq!(back, m);

        let real: DenseMatrix = "2 3 R\n1 2 3\n4 5 6\n".parse().unwrap();
        assert_eq!(real.get(1, 2), Scalar::new(6.0, 0.0));
        assert_eq!(real.field(), ScalarField::Real);
        assert!("2 2 R\n1 2 3\n".parse::<DenseMatrix>().is_err());
        assert!("2 2 R\n1 2 3 1+i\n".parse::<DenseMatrix>().is_err());
        assert!("".parse::<DenseMatrix>().is_err());
    }

    #[test]
    fn kron_layout() {
        let a = DenseMatrix::from_real_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = DenseMatrix::from_real_rows(&[vec![1.0], vec![3.0]]).unwrap();
        let k = a.kron(&b);
        assert_eq!((k.rows(), k.cols()), (2, 2));
        assert_eq!(k.get(1, 1), Scalar::new(6.0, 0.0));
    }
}
