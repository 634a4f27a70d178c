//! Linear solves for the Newton system on a node lattice.
//!
//! The Hessian couples nodes at lattice offsets up to two cells, so each row
//! holds at most a fixed 5x5 window of 2x2 blocks. Small systems go through a
//! dense Cholesky factorization; larger ones use conjugate gradients with a
//! diagonal preconditioner at relative residual 1e-8.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

/// Scalar-unknown threshold below which the dense direct path is used.
pub const DENSE_THRESHOLD: usize = 200;

/// Relative residual target for the iterative path.
pub const CG_RELATIVE_RESIDUAL: f64 = 1e-8;

const WINDOW: usize = 5;
pub const SLOTS: usize = WINDOW * WINDOW;
pub const CENTER_SLOT: usize = SLOTS / 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveFailure {
    /// Direct factorization failed or CG met non-positive curvature.
    Indefinite,
    /// CG exhausted its iteration budget.
    NoConvergence,
}

/// Symmetric block matrix over free lattice nodes. `neighbors[r][s]` holds
/// the column index for lattice offset s (or -1), fixed per problem;
/// `blocks` are rebuilt every assembly.
#[derive(Debug, Clone)]
pub struct BlockLattice {
    pub n: usize,
    pub neighbors: Vec<[i32; SLOTS]>,
    pub blocks: Vec<[Matrix2<f64>; SLOTS]>,
}

impl BlockLattice {
    pub fn new(neighbors: Vec<[i32; SLOTS]>) -> Self {
        let n = neighbors.len();
        Self {
            n,
            neighbors,
            blocks: vec![[Matrix2::zeros(); SLOTS]; n],
        }
    }

    pub fn clear(&mut self) {
        for row in &mut self.blocks {
            for b in row.iter_mut() {
                *b = Matrix2::zeros();
            }
        }
    }

    #[inline]
    pub fn add_block(&mut self, row: usize, slot: usize, block: &Matrix2<f64>) {
        self.blocks[row][slot] += block;
    }

    pub fn mul(&self, v: &[Vector2<f64>], out: &mut [Vector2<f64>]) {
        for r in 0..self.n {
            let mut acc = Vector2::zeros();
            let cols = &self.neighbors[r];
            let blocks = &self.blocks[r];
            for s in 0..SLOTS {
                let c = cols[s];
                if c >= 0 {
                    acc += blocks[s] * v[c as usize];
                }
            }
            out[r] = acc;
        }
    }

    /// Scalar diagonal (for the Jacobi preconditioner). Returns None if any
    /// entry is non-positive.
    pub fn diagonal(&self) -> Option<Vec<Vector2<f64>>> {
        let mut d = Vec::with_capacity(self.n);
        for r in 0..self.n {
            let b = &self.blocks[r][CENTER_SLOT];
            if b[(0, 0)] <= 0.0 || b[(1, 1)] <= 0.0 {
                return None;
            }
            d.push(Vector2::new(b[(0, 0)], b[(1, 1)]));
        }
        Some(d)
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(2 * self.n, 2 * self.n);
        for r in 0..self.n {
            for s in 0..SLOTS {
                let c = self.neighbors[r][s];
                if c < 0 {
                    continue;
                }
                let b = &self.blocks[r][s];
                for a in 0..2 {
                    for bb in 0..2 {
                        m[(2 * r + a, 2 * c as usize + bb)] += b[(a, bb)];
                    }
                }
            }
        }
        m
    }

    /// Solves A x = rhs, choosing the direct or iterative path by size.
    pub fn solve(&self, rhs: &[Vector2<f64>]) -> Result<Vec<Vector2<f64>>, SolveFailure> {
        if 2 * self.n <= DENSE_THRESHOLD {
            self.solve_dense(rhs)
        } else {
            self.solve_pcg(rhs)
        }
    }

    fn solve_dense(&self, rhs: &[Vector2<f64>]) -> Result<Vec<Vector2<f64>>, SolveFailure> {
        let m = self.to_dense();
        let mut b = DVector::zeros(2 * self.n);
        for r in 0..self.n {
            b[2 * r] = rhs[r].x;
            b[2 * r + 1] = rhs[r].y;
        }
        let chol = m.cholesky().ok_or(SolveFailure::Indefinite)?;
        let x = chol.solve(&b);
        Ok((0..self.n)
            .map(|r| Vector2::new(x[2 * r], x[2 * r + 1]))
            .collect())
    }

    fn solve_pcg(&self, rhs: &[Vector2<f64>]) -> Result<Vec<Vector2<f64>>, SolveFailure> {
        let n = self.n;
        let diag = self.diagonal().ok_or(SolveFailure::Indefinite)?;
        let precond = |r: &[Vector2<f64>], z: &mut Vec<Vector2<f64>>| {
            for i in 0..n {
                z[i] = Vector2::new(r[i].x / diag[i].x, r[i].y / diag[i].y);
            }
        };
        let dot = |a: &[Vector2<f64>], b: &[Vector2<f64>]| -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                s += a[i].dot(&b[i]);
            }
            s
        };

        let mut x = vec![Vector2::zeros(); n];
        let mut r = rhs.to_vec();
        let norm_b = dot(&r, &r).sqrt();
        if norm_b == 0.0 {
            return Ok(x);
        }
        let tol = CG_RELATIVE_RESIDUAL * norm_b;
        let mut z = vec![Vector2::zeros(); n];
        precond(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![Vector2::zeros(); n];
        let max_iter = (40 * n).max(200);
        for _ in 0..max_iter {
            self.mul(&p, &mut ap);
            let p_ap = dot(&p, &ap);
            if p_ap <= 0.0 {
                return Err(SolveFailure::Indefinite);
            }
            let alpha = rz / p_ap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if dot(&r, &r).sqrt() <= tol {
                return Ok(x);
            }
            precond(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(SolveFailure::NoConvergence)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice_neighbors(nx: usize, ny: usize) -> Vec<[i32; SLOTS]> {
        let idx = |i: i64, j: i64| -> i32 {
            if i < 0 || j < 0 || i >= nx as i64 || j >= ny as i64 {
                -1
            } else {
                (j * nx as i64 + i) as i32
            }
        };
        let mut out = Vec::new();
        for j in 0..ny as i64 {
            for i in 0..nx as i64 {
                let mut row = [-1; SLOTS];
                for dj in -2..=2i64 {
                    for di in -2..=2i64 {
                        row[((dj + 2) * 5 + di + 2) as usize] = idx(i + di, j + dj);
                    }
                }
                out.push(row);
            }
        }
        out
    }

    fn laplacian(nx: usize, ny: usize) -> BlockLattice {
        let mut m = BlockLattice::new(lattice_neighbors(nx, ny));
        for r in 0..m.n {
            m.add_block(r, CENTER_SLOT, &Matrix2::from_diagonal_element(4.2));
            for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let slot = ((dj + 2) * 5 + di + 2) as usize;
                if m.neighbors[r][slot] >= 0 {
                    m.add_block(r, slot, &Matrix2::from_diagonal_element(-1.0));
                }
            }
        }
        m
    }

    fn check_solution(m: &BlockLattice, x: &[Vector2<f64>], b: &[Vector2<f64>]) {
        let mut ax = vec![Vector2::zeros(); m.n];
        m.mul(x, &mut ax);
        let res: f64 = ax
            .iter()
            .zip(b)
            .map(|(a, bb)| (a - bb).norm_squared())
            .sum::<f64>()
            .sqrt();
        let norm_b: f64 = b.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
        assert!(res <= 1e-7 * norm_b, "residual {res} vs |b| {norm_b}");
    }

    #[test]
    fn dense_and_pcg_agree_on_spd_lattice() {
        // Small enough for the dense path.
        let m = laplacian(5, 5);
        assert!(2 * m.n <= DENSE_THRESHOLD);
        let b: Vec<Vector2<f64>> = (0..m.n)
            .map(|i| Vector2::new((i as f64 * 0.37).sin(), (i as f64 * 0.61).cos()))
            .collect();
        let x_dense = m.solve_dense(&b).unwrap();
        let x_pcg = m.solve_pcg(&b).unwrap();
        check_solution(&m, &x_dense, &b);
        check_solution(&m, &x_pcg, &b);
        for i in 0..m.n {
            assert!((x_dense[i] - x_pcg[i]).norm() < 1e-6);
        }
    }

    #[test]
    fn large_lattice_uses_pcg() {
        let m = laplacian(20, 20);
        assert!(2 * m.n > DENSE_THRESHOLD);
        let b: Vec<Vector2<f64>> = (0..m.n)
            .map(|i| Vector2::new(1.0 + (i % 7) as f64, (i % 3) as f64 - 1.0))
            .collect();
        let x = m.solve(&b).unwrap();
        check_solution(&m, &x, &b);
    }

    #[test]
    fn indefinite_matrix_is_detected() {
        let mut m = laplacian(3, 3);
        m.add_block(4, CENTER_SLOT, &Matrix2::from_diagonal_element(-50.0));
        assert_eq!(m.solve_dense(&vec![Vector2::x(); m.n]), Err(SolveFailure::Indefinite));
        assert!(m.solve_pcg(&vec![Vector2::x(); m.n]).is_err());
    }
}
