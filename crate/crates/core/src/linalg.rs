//! Small dense solves used by the decoder: row-equilibrated LU with partial
//! pivoting, numerical rank and 1-norm condition numbers.

/// A pivot is treated as zero below this, after scaling every row to unit max-norm.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

fn row_scale(row: &[f64]) -> f64 {
    row.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// LU factorisation `P·D·G = L·U` of a square matrix, where `D` scales each
/// row of `G` to unit max-norm.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    /// Packed L (unit diagonal, below) and U (on and above), row-major.
    lu: Vec<f64>,
    /// `perm[i]` is the original row now at position `i`.
    perm: Vec<usize>,
    /// Reciprocal row scales, indexed by original row.
    inv_scale: Vec<f64>,
}

impl Lu {
    /// Factorises `rows` (n rows of length n). Returns the position of the
    /// first negligible pivot on failure.
    pub fn factor(rows: &[Vec<f64>]) -> Result<Lu, usize> {
        let n = rows.len();
        let mut lu = Vec::with_capacity(n * n);
        let mut inv_scale = Vec::with_capacity(n);
        for (i, row) in rows.iter().enumerate() {
            debug_assert_eq!(row.len(), n);
            let s = row_scale(row);
            if s == 0.0 || !s.is_finite() {
                return Err(i);
            }
            inv_scale.push(1.0 / s);
            lu.extend(row.iter().map(|v| v / s));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let (piv, mag) =
                (col..n)
                    .map(|r| (r, lu[r * n + col].abs()))
                    .fold(
                        (col, -1.0),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if !(mag >= PIVOT_TOLERANCE) {
                return Err(col);
            }
            if piv != col {
                for j in 0..n {
                    lu.swap(piv * n + j, col * n + j);
                }
                perm.swap(piv, col);
            }
            let p = lu[col * n + col];
            for r in col + 1..n {
                let f = lu[r * n + col] / p;
                lu[r * n + col] = f;
                if f != 0.0 {
                    for j in col + 1..n {
                        lu[r * n + j] -= f * lu[col * n + j];
                    }
                }
            }
        }
        Ok(Lu {
            n,
            lu,
            perm,
            inv_scale,
        })
    }

    /// Solves `G·u = b` for one right-hand side.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self
            .perm
            .iter()
            .map(|&r| b[r] * self.inv_scale[r])
            .collect();
        for i in 0..n {
            let mut acc = y[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * y[j];
            }
            y[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in i + 1..n {
                acc -= self.lu[i * n + j] * y[j];
            }
            y[i] = acc / self.lu[i * n + i];
        }
        y
    }

    /// Explicit inverse of `G`.
    pub fn inverse(&self) -> Vec<Vec<f64>> {
        let n = self.n;
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                self.solve(&e)
            })
            .collect();
        (0..n)
            .map(|i| (0..n).map(|j| cols[j][i]).collect())
            .collect()
    }
}

/// Maximum absolute column sum.
pub fn norm_1(m: &[Vec<f64>]) -> f64 {
    let n = m.first().map_or(0, Vec::len);
    (0..n)
        .map(|j| m.iter().map(|r| r[j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `κ₁(G) = ‖G‖₁·‖G⁻¹‖₁`, or infinity when `G` is numerically singular.
pub fn condition_number(rows: &[Vec<f64>]) -> f64 {
    match Lu::factor(rows) {
        Ok(lu) => norm_1(rows) * norm_1(&lu.inverse()),
        Err(_) => f64::INFINITY,
    }
}

/// Numerical rank of a (possibly rectangular) matrix by row-equilibrated
/// Gaussian elimination with partial pivoting.
pub fn rank(rows: &[Vec<f64>]) -> usize {
    let mut m: Vec<Vec<f64>> = rows
        .iter()
        .filter_map(|r| {
            let s = row_scale(r);
            (s > 0.0 && s.is_finite()).then(|| r.iter().map(|v| v / s).collect())
        })
        .collect();
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..cols {
        if rank == m.len() {
            break;
        }
        let (piv, mag) =
            (rank..m.len())
                .map(|r| (r, m[r][col].abs()))
                .fold(
                    (rank, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if mag < PIVOT_TOLERANCE {
            continue;
        }
        m.swap(rank, piv);
        for r in rank + 1..m.len() {
            let f = m[r][col] / m[rank][col];
            if f != 0.0 {
                for j in col..cols {
                    let v = m[rank][j];
                    m[r][j] -= f * v;
                }
            }
        }
        rank += 1;
    }
    rank
}
