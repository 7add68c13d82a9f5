//! Compressed-row storage and a Jacobi-preconditioned conjugate-gradient
//! solver for the SPD systems produced by the P1 discretisation.

/// Symmetric sparse matrix in CSR form.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from (row, col, value) triplets, summing duplicates. The sort is
    /// stable so repeated assembly is bitwise reproducible.
    pub fn from_triplets(n: usize, mut triplets: Vec<(u32, u32, f64)>) -> CsrMatrix {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut rows: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        for &(r, c, v) in &triplets {
            if rows.last() == Some(&(r as usize)) && cols.last() == Some(&(c as usize)) {
                *vals.last_mut().unwrap() += v;
            } else {
                rows.push(r as usize);
                cols.push(c as usize);
                vals.push(v);
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.cols[k] == i {
                    d[i] = self.vals[k];
                }
            }
        }
        d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.cols[k] == j {
                return self.vals[k];
            }
        }
        0.0
    }

    /// Largest relative symmetry defect; assembled stiffness matrices must be
    /// symmetric to machine precision.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let scale = self
            .vals
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-300);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                if j > i {
                    worst = worst.max((self.vals[k] - self.get(j, i)).abs() / scale);
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveReport {
    pub residual: f64,
    pub iterations: usize,
}

/// Jacobi-preconditioned CG. Iterates toward `tol_target`, stops at
/// `max_iter`; the caller decides whether the achieved residual is
/// acceptable.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    tol_target: f64,
    max_iter: usize,
) -> (Vec<f64>, SolveReport) {
    let n = a.n;
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return (
            x,
            SolveReport {
                residual: 0.0,
                iterations: 0,
            },
        );
    }
    let diag = a.diagonal();
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    let mut res = 1.0;
    let mut it = 0;
    while it < max_iter {
        it += 1;
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / b_norm;
        if res <= tol_target {
            break;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (
        x,
        SolveReport {
            residual: res,
            iterations: it,
        },
    )
}

/// Dense Cholesky solve for small systems; cross-checks CG in tests.
pub fn dense_cholesky_solve(a: &CsrMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.n;
    if n > 2000 {
        return None;
    }
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for k in a.row_ptr[i]..a.row_ptr[i + 1] {
            m[i * n + a.cols[k]] = a.vals[k];
        }
    }
    // In-place lower Cholesky.
    for j in 0..n {
        let mut d = m[j * n + j];
        for k in 0..j {
            d -= m[j * n + k] * m[j * n + k];
        }
        if d <= 0.0 {
            return None;
        }
        let d = d.sqrt();
        m[j * n + j] = d;
        for i in (j + 1)..n {
            let mut v = m[i * n + j];
            for k in 0..j {
                v -= m[i * n + k] * m[j * n + k];
            }
            m[i * n + j] = v / d;
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= m[i * n + k] * y[k];
        }
        y[i] /= m[i * n + i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            y[i] -= m[k * n + i] * y[k];
        }
        y[i] /= m[i * n + i];
    }
    Some(y)
}
