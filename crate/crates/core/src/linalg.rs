//! Small dense linear algebra used throughout the toolkit.
//!
//! Everything here is deliberately simple: the matrices are dense, the
//! solvers are direct, and the iterative norm estimators are written for
//! matrices with at most a few thousand rows. Function values are complex
//! (`Complex64`) with the unconjugated bilinear pairing `sum f_i g_i mu_i`;
//! the positive-kernel machinery (operator norms, Boyd iteration) works on
//! real nonnegative matrices.

use num_complex::Complex64;

pub type C64 = Complex64;

/// Dense row-major real matrix.
#[derive(Debug, Clone)]
pub struct RMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl RMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RMat { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            y[i] = acc;
        }
        y
    }

    pub fn t_matvec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut x = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let yi = y[i];
            for (j, a) in row.iter().enumerate() {
                x[j] += a * yi;
            }
        }
        x
    }

    pub fn abs(&self) -> RMat {
        RMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v.abs()).collect() }
    }
}

/// Dense row-major complex matrix.
#[derive(Debug, Clone)]
pub struct CMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![C64::new(0.0, 0.0); self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let mut acc = C64::new(0.0, 0.0);
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            y[i] = acc;
        }
        y
    }

    /// Plain transpose (no conjugation) applied to a vector.
    pub fn t_matvec(&self, y: &[C64]) -> Vec<C64> {
        assert_eq!(y.len(), self.rows);
        let mut x = vec![C64::new(0.0, 0.0); self.cols];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let yi = y[i];
            for (j, a) in row.iter().enumerate() {
                x[j] += a * yi;
            }
        }
        x
    }

    pub fn abs(&self) -> RMat {
        RMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v.norm()).collect() }
    }
}

/// Unconjugated bilinear pairing `sum_i f_i g_i w_i`.
pub fn bilinear(f: &[C64], g: &[C64], w: &[f64]) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..f.len() {
        acc += f[i] * g[i] * w[i];
    }
    acc
}

/// Weighted integral `sum_i f_i w_i`.
pub fn integral(f: &[C64], w: &[f64]) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..f.len() {
        acc += f[i] * w[i];
    }
    acc
}

/// Weighted L^p norm `(sum |f_i|^p w_i)^(1/p)`.
pub fn lp_norm(f: &[C64], w: &[f64], p: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..f.len() {
        acc += f[i].norm().powf(p) * w[i];
    }
    acc.powf(1.0 / p)
}

pub fn l2_norm(f: &[C64], w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..f.len() {
        acc += f[i].norm_sqr() * w[i];
    }
    acc.sqrt()
}

pub fn sup_norm(f: &[C64]) -> f64 {
    f.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Solves the square complex system `A x = b` by Gaussian elimination with
/// partial pivoting. Returns `(x, cond1)` where `cond1` is the exact
/// 1-norm condition number obtained from the explicit inverse (the systems
/// here never exceed the maximum child count of a cube, so this is cheap).
pub fn solve_with_cond(a: &CMat, b: &[C64]) -> Option<(Vec<C64>, f64)> {
    let n = a.rows;
    assert_eq!(a.cols, n);
    assert_eq!(b.len(), n);
    // Augment with b and the identity to read off both the solution and the inverse.
    let m = n + 1 + n;
    let mut w = vec![C64::new(0.0, 0.0); n * m];
    for i in 0..n {
        for j in 0..n {
            w[i * m + j] = a.get(i, j);
        }
        w[i * m + n] = b[i];
        w[i * m + n + 1 + i] = C64::new(1.0, 0.0);
    }
    for col in 0..n {
        let mut piv = col;
        let mut best = w[col * m + col].norm();
        for r in col + 1..n {
            let v = w[r * m + col].norm();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return None;
        }
        if piv != col {
            for j in 0..m {
                w.swap(col * m + j, piv * m + j);
            }
        }
        let d = w[col * m + col];
        for j in col..m {
            w[col * m + j] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = w[r * m + col];
            if factor.norm() == 0.0 {
                continue;
            }
            for j in col..m {
                let v = w[col * m + j];
                w[r * m + j] -= factor * v;
            }
        }
    }
    let x: Vec<C64> = (0..n).map(|i| w[i * m + n]).collect();
    // 1-norm condition from the explicit inverse.
    let col_sum = |get: &dyn Fn(usize, usize) -> C64| -> f64 {
        let mut best: f64 = 0.0;
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                s += get(i, j).norm();
            }
            best = best.max(s);
        }
        best
    };
    let norm_a = col_sum(&|i, j| a.get(i, j));
    let norm_inv = col_sum(&|i, j| w[i * m + n + 1 + j]);
    Some((x, norm_a * norm_inv))
}

/// Spectral norm (largest singular value) of a real matrix by power
/// iteration on `A^T A`, with a deterministic start vector.
pub fn spectral_norm(a: &RMat) -> f64 {
    if a.rows == 0 || a.cols == 0 {
        return 0.0;
    }
    let mut x: Vec<f64> = (0..a.cols).map(|j| 1.0 + (j as f64) * 1e-3).collect();
    normalize2(&mut x);
    let mut sigma = 0.0f64;
    for _ in 0..20_000 {
        let y = a.matvec(&x);
        let mut z = a.t_matvec(&y);
        let lam = norm2(&z);
        if lam == 0.0 {
            return 0.0;
        }
        for v in z.iter_mut() {
            *v /= lam;
        }
        let new_sigma = lam.sqrt();
        let done = (new_sigma - sigma).abs() <= 1e-13 * new_sigma.max(1e-300);
        sigma = new_sigma;
        x = z;
        if done {
            break;
        }
    }
    sigma
}

/// Spectral norm of a complex matrix via power iteration on `A^H A`.
pub fn spectral_norm_c(a: &CMat) -> f64 {
    if a.rows == 0 || a.cols == 0 {
        return 0.0;
    }
    let mut x: Vec<C64> = (0..a.cols)
        .map(|j| C64::new(1.0 + (j as f64) * 1e-3, 0.5 + (j as f64) * 7e-4))
        .collect();
    cnormalize2(&mut x);
    let mut sigma = 0.0f64;
    for _ in 0..20_000 {
        let y = a.matvec(&x);
        // A^H y = conj(A^T conj(y))
        let yc: Vec<C64> = y.iter().map(|v| v.conj()).collect();
        let mut z: Vec<C64> = a.t_matvec(&yc).iter().map(|v| v.conj()).collect();
        let lam = cnorm2(&z);
        if lam == 0.0 {
            return 0.0;
        }
        for v in z.iter_mut() {
            *v /= lam;
        }
        let new_sigma = lam.sqrt();
        let done = (new_sigma - sigma).abs() <= 1e-13 * new_sigma.max(1e-300);
        sigma = new_sigma;
        x = z;
        if done {
            break;
        }
    }
    sigma
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize2(v: &mut [f64]) {
    let n = norm2(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

fn cnorm2(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn cnormalize2(v: &mut [C64]) {
    let n = cnorm2(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

fn lp(v: &[f64], p: f64) -> f64 {
    v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// `l^p -> l^q` operator norm of an (elementwise) nonnegative matrix,
/// estimated with the nonlinear power iteration of Boyd. For `p = q = 2`
/// this agrees with the spectral norm. The iterate is a certified lower
/// bound at every step; convergence is declared at relative fixed-point
/// residual 1e-6 (then polished a little further).
pub fn boyd_norm(a: &RMat, p: f64, q: f64) -> f64 {
    if a.rows == 0 || a.cols == 0 {
        return 0.0;
    }
    let dual = |r: f64| r / (r - 1.0);
    let pd = dual(p);
    let mut x: Vec<f64> = (0..a.cols).map(|j| 1.0 + (j as f64) * 1e-3).collect();
    let nx = lp(&x, p);
    for v in x.iter_mut() {
        *v /= nx;
    }
    let mut best = 0.0f64;
    let mut prev = 0.0f64;
    let mut stable = 0;
    for _ in 0..5_000 {
        let y = a.matvec(&x);
        let ny = lp(&y, q);
        if ny == 0.0 {
            return 0.0;
        }
        best = best.max(ny);
        // duality map: z = A^T (y/|y|_q)^(q-1), new x = z^(p'-1) normalized in l^p
        let yq: Vec<f64> = y.iter().map(|v| (v / ny).powf(q - 1.0)).collect();
        let z = a.t_matvec(&yq);
        let mut xn: Vec<f64> = z.iter().map(|v| v.max(0.0).powf(pd - 1.0)).collect();
        let nxn = lp(&xn, p);
        if nxn == 0.0 {
            break;
        }
        for v in xn.iter_mut() {
            *v /= nxn;
        }
        x = xn;
        if (ny - prev).abs() <= 1e-6 * ny {
            stable += 1;
            if stable >= 8 {
                break;
            }
        } else {
            stable = 0;
        }
        prev = ny;
    }
    best
}

/// Extra certified lower bounds for `l^p -> l^q` norms from random probes.
pub fn random_lower_bound(a: &RMat, p: f64, q: f64, samples: usize, rng: &mut impl rand::Rng) -> f64 {
    let mut best = 0.0f64;
    if a.cols == 0 {
        return 0.0;
    }
    for _ in 0..samples {
        let x: Vec<f64> = (0..a.cols).map(|_| rng.random::<f64>()).collect();
        let nx = lp(&x, p);
        if nx == 0.0 {
            continue;
        }
        let y = a.matvec(&x);
        best = best.max(lp(&y, q) / nx);
    }
    best
}

/// Least-squares fit of `log r = log c + eta * log t` over the pairs with
/// strictly positive coordinates. Returns `(c, eta, rms_residual)`, or
/// `None` when fewer than two usable points remain.
pub fn loglog_fit(pairs: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(t, r)| *t > 0.0 && *r > 0.0)
        .map(|(t, r)| (t.ln(), r.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return None;
    }
    let eta = (n * sxy - sx * sy) / denom;
    let logc = (sy - eta * sx) / n;
    let mut rss = 0.0;
    for (x, y) in &pts {
        let e = y - (logc + eta * x);
        rss += e * e;
    }
    Some((logc.exp(), eta, (rss / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_small_complex_system() {
        let mut a = CMat::zeros(2, 2);
        a.set(0, 0, C64::new(2.0, 0.0));
        a.set(0, 1, C64::new(0.0, 1.0));
        a.set(1, 0, C64::new(-1.0, 0.0));
        a.set(1, 1, C64::new(3.0, 0.0));
        let b = vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let (x, cond) = solve_with_cond(&a, &b).unwrap();
        let r0 = a.get(0, 0) * x[0] + a.get(0, 1) * x[1] - b[0];
        let r1 = a.get(1, 0) * x[0] + a.get(1, 1) * x[1] - b[1];
        assert!(r0.norm() < 1e-14 && r1.norm() < 1e-14);
        assert!(cond > 1.0 && cond < 1e3);
    }

    #[test]
    fn spectral_norm_matches_hand_value() {
        // [[3,0],[0,1]] has spectral norm 3; [[0,2],[0,0]] has norm 2.
        let mut a = RMat::zeros(2, 2);
        a.set(0, 0, 3.0);
        a.set(1, 1, 1.0);
        assert!((spectral_norm(&a) - 3.0).abs() < 1e-10);
        let mut b = RMat::zeros(2, 2);
        b.set(0, 1, 2.0);
        assert!((spectral_norm(&b) - 2.0).abs() < 1e-10);
    }

    #[test]
    fn boyd_agrees_with_spectral_at_two() {
        let mut a = RMat::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                a.set(i, j, 1.0 / (1.0 + (i + 2 * j) as f64));
            }
        }
        let s = spectral_norm(&a);
        let b = boyd_norm(&a, 2.0, 2.0);
        assert!((s - b).abs() < 1e-5 * s, "{s} vs {b}");
    }

    #[test]
    fn boyd_norm_rank_one_closed_form() {
        // A = u v^T with u, v >= 0: |A|_{p->q} = |u|_q * |v|_{p'}.
        let u = [1.0, 2.0, 0.5];
        let v = [0.3, 1.0];
        let p = 1.5f64;
        let q = 3.0f64;
        let mut a = RMat::zeros(3, 2);
        for i in 0..3 {
            for j in 0..2 {
                a.set(i, j, u[i] * v[j]);
            }
        }
        let pd = p / (p - 1.0);
        let expect = u.iter().map(|x| x.powf(q)).sum::<f64>().powf(1.0 / q)
            * v.iter().map(|x| x.powf(pd)).sum::<f64>().powf(1.0 / pd);
        let got = boyd_norm(&a, p, q);
        assert!((got - expect).abs() < 1e-6 * expect, "{got} vs {expect}");
    }

    #[test]
    fn loglog_fit_recovers_power_law() {
        let pairs: Vec<(f64, f64)> = (1..20).map(|k| {
            let t = k as f64 * 0.05;
            (t, 2.5 * t.powf(0.8))
        }).collect();
        let (c, eta, res) = loglog_fit(&pairs).unwrap();
        assert!((c - 2.5).abs() < 1e-9);
        assert!((eta - 0.8).abs() < 1e-12);
        assert!(res < 1e-12);
    }
}
