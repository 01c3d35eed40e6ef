//! Matrix ingestion: Matrix Market coordinate files (sparse) and headered CSV
//! (dense). Both parsers treat their input as untrusted.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::matrix::{DenseMatrix, Matrix, MatrixError, SparseMatrix};

/// Largest row or column count accepted from a file.
pub const MAX_DIMENSION: usize = 1 << 24;
/// Largest number of entries accepted from a file.
pub const MAX_ENTRIES: usize = 1 << 28;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn parse_err<T>(line: usize, msg: impl Into<String>) -> Result<T, IoError> {
    Err(IoError::Parse {
        line,
        msg: msg.into(),
    })
}

#[derive(Clone, Copy, PartialEq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

/// Reads a `%%MatrixMarket matrix coordinate {real|integer|pattern}
/// {general|symmetric|skew-symmetric}` file.
pub fn read_matrix_market<R: BufRead>(reader: R) -> Result<SparseMatrix, IoError> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (ln, header) = match lines.next() {
        Some((ln, l)) => (ln, l?),
        None => return parse_err(1, "empty input"),
    };
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return parse_err(
            ln,
            "expected '%%MatrixMarket matrix coordinate <field> <symmetry>'",
        );
    }
    if tokens[2] != "coordinate" {
        return parse_err(
            ln,
            format!(
                "unsupported format {:?}; only coordinate is read",
                tokens[2]
            ),
        );
    }
    let field = match tokens[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "pattern" => Field::Pattern,
        other => return parse_err(ln, format!("unsupported field {other:?}")),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return parse_err(ln, format!("unsupported symmetry {other:?}")),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    let mut seen = 0usize;
    for (ln, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        let Some((rows, cols, nnz)) = size else {
            if parts.len() != 3 {
                return parse_err(ln, "size line must be 'rows cols entries'");
            }
            let num = |s: &str| {
                s.parse::<usize>().map_err(|_| IoError::Parse {
                    line: ln,
                    msg: format!("bad count {s:?}"),
                })
            };
            let (r, c, n) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if r == 0 || c == 0 || r > MAX_DIMENSION || c > MAX_DIMENSION {
                return parse_err(
                    ln,
                    format!("dimensions {r}x{c} outside 1..={MAX_DIMENSION}"),
                );
            }
            if n > MAX_ENTRIES || n as u128 > r as u128 * c as u128 {
                return parse_err(ln, format!("entry count {n} too large"));
            }
            if symmetry != Symmetry::General && r != c {
                return parse_err(ln, "symmetric storage requires a square matrix");
            }
            size = Some((r, c, n));
            triplets.reserve(n.min(1 << 20));
            continue;
        };
        if seen == nnz {
            return parse_err(ln, format!("more than the declared {nnz} entries"));
        }
        let want = if field == Field::Pattern { 2 } else { 3 };
        if parts.len() != want {
            return parse_err(ln, format!("expected {want} fields, found {}", parts.len()));
        }
        let index = |s: &str, bound: usize| -> Result<usize, IoError> {
            match s.parse::<usize>() {
                Ok(v) if v >= 1 && v <= bound => Ok(v - 1),
                _ => parse_err(ln, format!("index {s:?} outside 1..={bound}")),
            }
        };
        let (i, j) = (index(parts[0], rows)?, index(parts[1], cols)?);
        let v = match field {
            Field::Pattern => 1.0,
            Field::Integer => parts[2].parse::<i64>().map_err(|_| IoError::Parse {
                line: ln,
                msg: format!("bad integer {:?}", parts[2]),
            })? as f64,
            Field::Real => match parts[2].parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => return parse_err(ln, format!("bad value {:?}", parts[2])),
            },
        };
        triplets.push((i, j, v));
        match symmetry {
            Symmetry::General => {}
            Symmetry::Symmetric if i != j => triplets.push((j, i, v)),
            Symmetry::SkewSymmetric if i == j => {
                return parse_err(ln, "skew-symmetric diagonal entry")
            }
            Symmetry::SkewSymmetric => triplets.push((j, i, -v)),
            Symmetry::Symmetric => {}
        }
        seen += 1;
    }
    let Some((rows, cols, nnz)) = size else {
        return parse_err(0, "missing size line");
    };
    if seen != nnz {
        return parse_err(0, format!("declared {nnz} entries, found {seen}"));
    }
    Ok(SparseMatrix::from_triplets(rows, cols, &triplets)?)
}

pub fn parse_matrix_market(bytes: &[u8]) -> Result<SparseMatrix, IoError> {
    read_matrix_market(bytes)
}

/// Writes `m` as `coordinate real general`, column-major.
pub fn write_matrix_market<W: Write>(m: &SparseMatrix, mut w: W) -> Result<(), IoError> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", m.rows(), m.cols(), m.nnz())?;
    for (i, j, v) in m.triplets() {
        writeln!(w, "{} {} {:?}", i + 1, j + 1, v)?;
    }
    Ok(())
}

/// Reads a dense matrix from CSV: one header row naming the columns, then
/// one row of numbers per matrix row.
pub fn read_dense_csv<R: std::io::Read>(reader: R) -> Result<DenseMatrix, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let cols = rdr.headers()?.len();
    if cols == 0 || cols > MAX_DIMENSION {
        return parse_err(1, format!("header names {cols} columns"));
    }
    let mut data = Vec::new();
    let mut rows = 0usize;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let ln = r + 2;
        if record.len() != cols {
            return parse_err(
                ln,
                format!("expected {cols} fields, found {}", record.len()),
            );
        }
        if data.len() + cols > MAX_ENTRIES {
            return parse_err(ln, "matrix too large");
        }
        for field in record.iter() {
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => data.push(v),
                _ => return parse_err(ln, format!("bad value {field:?}")),
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return parse_err(2, "no data rows");
    }
    Ok(DenseMatrix::new(rows, cols, data)?)
}

pub fn parse_dense_csv(bytes: &[u8]) -> Result<DenseMatrix, IoError> {
    read_dense_csv(bytes)
}

/// Writes `m` with header `c0,c1,…`.
pub fn write_dense_csv<W: Write>(m: &DenseMatrix, w: W) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record((0..m.cols()).map(|j| format!("c{j}")))?;
    for i in 0..m.rows() {
        wtr.write_record(m.row(i).iter().map(|v| format!("{v:?}")))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Loads a matrix by extension: `.mtx` as sparse, anything else as dense CSV.
pub fn load_matrix(path: &std::path::Path) -> Result<Matrix, IoError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("mtx"))
    {
        Ok(Matrix::Sparse(read_matrix_market(file)?))
    } else {
        Ok(Matrix::Dense(read_dense_csv(file)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn reads_general_real() {
        let src = b"%%MatrixMarket matrix coordinate real general\n% comment\n3 4 3\n1 1 2.5\n3 4 -1\n2 2 1e-3\n";
        let m = parse_matrix_market(src).unwrap();
        assert_eq!((m.rows(), m.cols(), m.nnz()), (3, 4, 3));
        let d = m.to_dense();
        assert_eq!(d.get(0, 0), 2.5);
        assert_eq!(d.get(2, 3), -1.0);
        assert_eq!(d.get(1, 1), 1e-3);
    }

    #[test]
    fn reads_symmetric_pattern() {
        let src = b"%%MatrixMarket matrix coordinate pattern symmetric\n3 3 2\n2 1\n3 3\n";
        let d = parse_matrix_market(src).unwrap().to_dense();
        assert_eq!(d.get(1, 0), 1.0);
        assert_eq!(d.get(0, 1), 1.0);
        assert_eq!(d.get(2, 2), 1.0);
    }

    #[test]
    fn rejects_malformed_market_files() {
        for bad in [
            &b""[..],
            b"%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n",
            b"%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n",
            b"%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n",
            b"%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 nan\n",
            b"%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1.0\n2 2 1.0\n",
            b"%%MatrixMarket matrix coordinate real general\n99999999999 2 1\n",
            b"%%MatrixMarket matrix coordinate real symmetric\n2 3 0\n",
        ] {
            assert!(
                parse_matrix_market(bad).is_err(),
                "{}",
                String::from_utf8_lossy(bad)
            );
        }
    }

    #[test]
    fn market_round_trip() {
        let m = SparseMatrix::random(7, 5, 0.6, &mut stream(2, 0)).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&m, &mut buf).unwrap();
        assert_eq!(parse_matrix_market(&buf).unwrap(), m);
    }

    #[test]
    fn dense_csv_round_trip_and_errors() {
        let m = DenseMatrix::random(4, 3, &mut stream(3, 0)).unwrap();
        let mut buf = Vec::new();
        write_dense_csv(&m, &mut buf).unwrap();
        assert!(buf.starts_with(b"c0,c1,c2\n"));
        assert_eq!(parse_dense_csv(&buf).unwrap(), m);

        assert!(parse_dense_csv(b"a,b\n1,2\n3\n").is_err());
        assert!(parse_dense_csv(b"a,b\n1,x\n").is_err());
        assert!(parse_dense_csv(b"a,b\n").is_err());
    }
}
