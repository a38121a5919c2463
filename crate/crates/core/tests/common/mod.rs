#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use seesim::model::SeeModel;

/// Gauss-Jordan inverse with partial pivoting, independent of the LU path.
pub fn gauss_jordan_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| m[(i, j)]).collect();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
        a.swap(c, p);
        let piv = a[c][c];
        for v in a[c].iter_mut() {
            *v /= piv;
        }
        let pivot_row = a[c].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != c {
                let f = row[c];
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    DMatrix::from_fn(n, n, |i, j| a[i][n + j])
}

pub fn random_volumes(rng: &mut impl Rng, m: &SeeModel) -> Vec<f64> {
    (0..m.n()).map(|_| rng.random_range(0.0..m.geometry().max_volume)).collect()
}
