use super::eigen::symmetric_eigen;
use super::ClusterError;
use crate::Scalar;

/// A fitted linear projection onto the leading principal components.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca<T> {
    pub mean: Vec<T>,
    /// Unit-norm principal directions, one per row.
    pub components: Vec<Vec<T>>,
    /// Variance captured by each component.
    pub explained_variance: Vec<T>,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

fn normalize<T: Scalar>(v: &mut [T]) -> T {
    let n = dot(v, v).sqrt();
    if n > T::zero() {
        v.iter_mut().for_each(|x| *x = *x / n);
    }
    n
}

impl<T: Scalar> Pca<T> {
    /// Fit on row vectors. Uses the `n × n` Gram matrix when there are fewer
    /// points than dimensions, the `d × d` covariance matrix otherwise.
    pub fn fit(points: &[Vec<T>], target_dim: usize) -> Result<Self, ClusterError> {
        let n = points.len();
        if n < target_dim || n == 0 {
            return Err(ClusterError::TooFewPoints { found: n, target_dim });
        }
        let d = points[0].len();
        if d < target_dim {
            return Err(ClusterError::InvalidParams(format!(
                "embedding dimension {d} is below target_dim {target_dim}"
            )));
        }
        let nf = T::from_usize(n).expect("usize fits");
        let mut mean = vec![T::zero(); d];
        for p in points {
            for (m, x) in mean.iter_mut().zip(p) {
                *m = *m + *x;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / nf);
        let centered: Vec<Vec<T>> = points
            .iter()
            .map(|p| p.iter().zip(&mean).map(|(x, m)| *x - *m).collect())
            .collect();
        let total: T = centered.iter().map(|r| dot(r, r)).sum();
        if total <= T::zero() {
            return Err(ClusterError::ZeroVariance);
        }
        let denom = if n > 1 { nf - T::one() } else { T::one() };

        let (values, mut dirs) = if n < d {
            let gram: Vec<Vec<T>> = (0..n)
                .map(|i| (0..n).map(|j| dot(&centered[i], &centered[j])).collect())
                .collect();
            let (vals, vecs) = symmetric_eigen(&gram);
            let dirs: Vec<Vec<T>> = vecs
                .iter()
                .map(|u| {
                    let mut v = vec![T::zero(); d];
                    for (ui, row) in u.iter().zip(&centered) {
                        for (vk, xk) in v.iter_mut().zip(row) {
                            *vk = *vk + *ui * *xk;
                        }
                    }
                    v
                })
                .collect();
            (vals, dirs)
        } else {
            let mut cov = vec![vec![T::zero(); d]; d];
            for row in &centered {
                for i in 0..d {
                    for j in i..d {
                        cov[i][j] = cov[i][j] + row[i] * row[j];
                    }
                }
            }
            for i in 0..d {
                for j in 0..i {
                    cov[i][j] = cov[j][i];
                }
            }
            symmetric_eigen(&cov)
        };

        let tol = values[0].abs() * T::epsilon().sqrt();
        let mut components: Vec<Vec<T>> = Vec::with_capacity(target_dim);
        let mut explained = Vec::with_capacity(target_dim);
        for (lambda, dir) in values.iter().zip(dirs.iter_mut()).take(target_dim) {
            if *lambda <= tol {
                break;
            }
            orthogonalize(dir, &components);
            if normalize(dir) <= T::zero() {
                break;
            }
            components.push(dir.clone());
            explained.push(*lambda / denom);
        }
        // Rank-deficient data: complete the basis from coordinate axes.
        let mut axis = 0;
        while components.len() < target_dim && axis < d {
            let mut e = vec![T::zero(); d];
            e[axis] = T::one();
            axis += 1;
            orthogonalize(&mut e, &components);
            orthogonalize(&mut e, &components);
            if normalize(&mut e) > T::from_f64_lossy(1e-3) {
                components.push(e);
                explained.push(T::zero());
            }
        }
        for c in &mut components {
            let mut best = 0;
            for (k, x) in c.iter().enumerate() {
                if x.abs() > c[best].abs() {
                    best = k;
                }
            }
            if c[best] < T::zero() {
                c.iter_mut().for_each(|x| *x = -*x);
            }
        }
        Ok(Pca { mean, components, explained_variance: explained })
    }

    pub fn transform(&self, point: &[T]) -> Vec<T> {
        let centered: Vec<T> = point.iter().zip(&self.mean).map(|(x, m)| *x - *m).collect();
        self.components.iter().map(|c| dot(c, &centered)).collect()
    }
}

fn orthogonalize<T: Scalar>(v: &mut [T], basis: &[Vec<T>]) {
    for b in basis {
        let p = dot(v, b);
        for (x, y) in v.iter_mut().zip(b) {
            *x = *x - p * *y;
        }
    }
}
