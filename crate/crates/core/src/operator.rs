//! Kernels, dense operator assembly, standard-estimate diagnostics and
//! Hardy-type bilinear forms.
//!
//! An assembled operator stores the raw kernel values `K(x_i, x_j)` with
//! the convention `K(x, x) = 0`; the action is
//! `Tf(x_i) = sum_j K(x_i, x_j) f_j mu_j` and the adjoint uses the
//! transposed kernel. All pairings are bilinear (no conjugation).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dyadic::{CubeId, DyadicTree};
use crate::error::{Error, Result};
use crate::linalg::{self, C64, CMat, RMat};
use crate::space::PointSpace;

/// Built-in kernel families.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelSpec {
    /// `K(x, y) = 1 / (x - y)` on a 1-d embedded space; antisymmetric.
    #[serde(rename = "cauchy-1d")]
    Cauchy1d,
    /// `K(x, y) = 1 / lambda(x, y)`; positive, satisfies the size bound
    /// with constant exactly 1.
    HardySize,
    /// `K(x, y) = (x_1 - y_1) / |x - y|^2` on a 2-d embedded space.
    #[serde(rename = "riesz-like-2d")]
    RieszLike2d,
    /// dense passthrough; entries are used verbatim (diagonal included)
    CustomMatrix { entries: Vec<Vec<f64>> },
    /// like `custom-matrix`, with the entries read from a headerless CSV
    /// of n rows with n comma-separated real values each
    #[serde(rename = "matrix-file")]
    MatrixFile { path: String },
}

impl KernelSpec {
    /// Hölder exponent used in regularity checks and coefficient weights.
    pub fn alpha(&self) -> f64 {
        1.0
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Cauchy1d => "cauchy-1d",
            KernelSpec::HardySize => "hardy-size",
            KernelSpec::RieszLike2d => "riesz-like-2d",
            KernelSpec::CustomMatrix { .. } => "custom-matrix",
            KernelSpec::MatrixFile { .. } => "matrix-file",
        }
    }
}

#[derive(Debug)]
pub struct KernelOperator {
    space: Arc<PointSpace>,
    /// raw kernel values K(x_i, x_j); row i, column j
    kernel: CMat,
    pub spec: KernelSpec,
}

/// Dense assembly of the operator for a kernel on a space.
pub fn assemble(space: Arc<PointSpace>, spec: &KernelSpec) -> Result<KernelOperator> {
    let n = space.len();
    let mut k = CMat::zeros(n, n);
    match spec {
        KernelSpec::Cauchy1d => {
            for i in 0..n {
                let xi = space
                    .coord1(i)
                    .ok_or_else(|| Error::Precondition("cauchy-1d needs embedded coordinates".into()))?;
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let xj = space.coord1(j).unwrap();
                    if xi == xj {
                        return Err(Error::SingularKernel(i, j));
                    }
                    k.set(i, j, C64::new(1.0 / (xi - xj), 0.0));
                }
            }
        }
        KernelSpec::HardySize => {
            let lam = space.lambda_matrix();
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        k.set(i, j, C64::new(1.0 / lam[i * n + j], 0.0));
                    }
                }
            }
        }
        KernelSpec::RieszLike2d => {
            let coords = space
                .coords()
                .ok_or_else(|| Error::Precondition("riesz-like-2d needs embedded coordinates".into()))?;
            if coords[0].len() < 2 {
                return Err(Error::Precondition("riesz-like-2d needs 2-d coordinates".into()));
            }
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let dx = coords[i][0] - coords[j][0];
                    let dy = coords[i][1] - coords[j][1];
                    let r2 = dx * dx + dy * dy;
                    if r2 == 0.0 {
                        return Err(Error::SingularKernel(i, j));
                    }
                    k.set(i, j, C64::new(dx / r2, 0.0));
                }
            }
        }
        KernelSpec::CustomMatrix { entries } => {
            fill_custom(&mut k, entries, n)?;
        }
        KernelSpec::MatrixFile { path } => {
            let text = std::fs::read_to_string(path)?;
            let entries: Vec<Vec<f64>> = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| {
                    l.split(',')
                        .map(|c| c.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<Vec<f64>>>>()?;
            fill_custom(&mut k, &entries, n)?;
        }
    }
    Ok(KernelOperator { space, kernel: k, spec: spec.clone() })
}

fn fill_custom(k: &mut CMat, entries: &[Vec<f64>], n: usize) -> Result<()> {
    if entries.len() != n || entries.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidParameter("custom kernel matrix shape mismatch".into()));
    }
    for i in 0..n {
        for j in 0..n {
            k.set(i, j, C64::new(entries[i][j], 0.0));
        }
    }
    Ok(())
}

impl KernelOperator {
    pub fn space(&self) -> &PointSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.len() == 0
    }

    #[inline]
    pub fn kernel(&self, i: usize, j: usize) -> C64 {
        self.kernel.get(i, j)
    }

    /// `Tf(x_i) = sum_j K(i, j) f_j mu_j`
    pub fn apply(&self, f: &[C64]) -> Vec<C64> {
        let n = self.len();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            let row = &self.kernel.data[i * n..(i + 1) * n];
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n {
                acc += row[j] * f[j] * self.space.weight(j);
            }
            out[i] = acc;
        }
        out
    }

    /// `T*g(x_i) = sum_j K(j, i) g_j mu_j` (transposed kernel)
    pub fn apply_adjoint(&self, g: &[C64]) -> Vec<C64> {
        let n = self.len();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            let row = &self.kernel.data[j * n..(j + 1) * n];
            let gw = g[j] * self.space.weight(j);
            for i in 0..n {
                out[i] += row[i] * gw;
            }
        }
        out
    }

    /// `T` applied to a sparsely supported function, full dense output.
    pub fn apply_sparse(&self, support: &[usize], values: &[C64]) -> Vec<C64> {
        let n = self.len();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (k, &j) in support.iter().enumerate() {
            let vw = values[k] * self.space.weight(j);
            if vw.norm() == 0.0 {
                continue;
            }
            for i in 0..n {
                out[i] += self.kernel.get(i, j) * vw;
            }
        }
        out
    }

    /// bilinear pairing `<f, Tg>`
    pub fn pairing(&self, f: &[C64], g: &[C64]) -> C64 {
        let tg = self.apply(g);
        linalg::bilinear(f, &tg, self.space.weights())
    }

    /// `<f, Tg>` for sparsely supported `f` and `g`.
    pub fn pairing_sparse(&self, fs: &[usize], fv: &[C64], gs: &[usize], gv: &[C64]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (a, &i) in fs.iter().enumerate() {
            let fi = fv[a] * self.space.weight(i);
            if fi.norm() == 0.0 {
                continue;
            }
            let mut row = C64::new(0.0, 0.0);
            for (b, &j) in gs.iter().enumerate() {
                row += self.kernel.get(i, j) * gv[b] * self.space.weight(j);
            }
            acc += fi * row;
        }
        acc
    }

    /// spectral norm of `T` as an operator on `L^2(mu)`
    pub fn l2_norm(&self) -> f64 {
        let n = self.len();
        let mut s = CMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let v = self.kernel.get(i, j)
                    * (self.space.weight(i).sqrt() * self.space.weight(j).sqrt());
                s.set(i, j, v);
            }
        }
        linalg::spectral_norm_c(&s)
    }

    /// dense weighted matrix `T[i][j] = K(i, j) mu_j`, for export
    pub fn weighted_matrix(&self) -> CMat {
        let n = self.len();
        let mut m = self.kernel.clone();
        for i in 0..n {
            for j in 0..n {
                let v = m.get(i, j) * self.space.weight(j);
                m.set(i, j, v);
            }
        }
        m
    }
}

// ---------------------------------------------------------------------------
// standard Calderon-Zygmund estimate diagnostics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StandardEstimateReport {
    /// max |K(x,y)| * lambda(x,y) over off-diagonal pairs (size bound)
    pub size_ratio_max: f64,
    /// max Hölder quotient over the sampled triples
    pub holder_ratio_max: f64,
    pub holder_samples: usize,
    /// max measured ratio of |<g, Tf>| against the cube-localized bound,
    /// over sampled (mean-zero g on Q, f supported off Q_hat)
    pub cube_decay_ratio_max: f64,
    pub cube_decay_pairs: usize,
    pub skipped_pairs: usize,
}

/// Samples the size bound, the Hölder regularity quotient (a deterministic
/// stratified sample of at most `max_triples` admissible triples) and the
/// mean-zero/far-support decay inequality on dyadic cubes.
pub fn check_standard_estimates(
    op: &KernelOperator,
    tree: &DyadicTree,
    max_triples: usize,
) -> StandardEstimateReport {
    let space = op.space();
    let n = space.len();
    let lam = space.lambda_matrix();
    let alpha = op.spec.alpha();

    let mut size_max: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                size_max = size_max.max(op.kernel(i, j).norm() * lam[i * n + j]);
            }
        }
    }

    // stratified triples (x, x', y) with rho(x, x') <= rho(x, y) / 2
    let mut holder_max: f64 = 0.0;
    let mut sampled = 0usize;
    let stride = ((n * n * n) / max_triples.max(1)).max(1);
    let mut counter = 0usize;
    'outer: for x in 0..n {
        for y in 0..n {
            if y == x {
                continue;
            }
            let rxy = space.dist(x, y);
            for xp in 0..n {
                counter += 1;
                if counter % stride != 0 {
                    continue;
                }
                if xp == x || xp == y {
                    continue;
                }
                let rxxp = space.dist(x, xp);
                if rxxp > rxy / 2.0 || rxxp == 0.0 {
                    continue;
                }
                let num = (op.kernel(x, y) - op.kernel(xp, y)).norm()
                    + (op.kernel(y, x) - op.kernel(y, xp)).norm();
                holder_max = holder_max.max(num * lam[x * n + y] * (rxy / rxxp).powf(alpha));
                sampled += 1;
                if sampled >= max_triples {
                    break 'outer;
                }
            }
        }
    }

    // cube-localized decay: g mean zero on Q, f an indicator far from Q_hat
    let mut decay_max: f64 = 0.0;
    let mut pairs = 0usize;
    let mut skipped = 0usize;
    let max_gen = tree.max_generation().min(4);
    for j in 2..=max_gen {
        for &q in tree.generation(j) {
            let cube = tree.cube(q);
            if cube.children.len() < 2 {
                continue;
            }
            let hat = tree.q_hat(q);
            // mean-zero g: difference of the first two children, mass-balanced
            let c0 = tree.cube(cube.children[0]);
            let c1 = tree.cube(cube.children[1]);
            let mut g = vec![C64::new(0.0, 0.0); n];
            for &m in &c0.members {
                g[m] = C64::new(1.0 / c0.mass, 0.0);
            }
            for &m in &c1.members {
                g[m] = C64::new(-1.0 / c1.mass, 0.0);
            }
            for &r in tree.generation(j) {
                if r == q {
                    continue;
                }
                let rc = tree.cube(r);
                let far = rc.members.iter().all(|m| hat.binary_search(m).is_err());
                if !far {
                    skipped += 1;
                    continue;
                }
                let f: Vec<C64> = {
                    let mut v = vec![C64::new(0.0, 0.0); n];
                    for &m in &rc.members {
                        v[m] = C64::new(1.0, 0.0);
                    }
                    v
                };
                let lhs = op.pairing(&g, &f).norm();
                let g_l1: f64 = g.iter().zip(space.weights()).map(|(v, w)| v.norm() * w).sum();
                let lq = tree.length(q);
                let mut bound = 0.0;
                for &y in &rc.members {
                    let rho = space.dist(cube.center, y) / tree.scale;
                    bound += (lq / rho).powf(alpha) / lam[cube.center * n + y] * space.weight(y);
                }
                let rhs = g_l1 * bound;
                if rhs > 0.0 {
                    decay_max = decay_max.max(lhs / rhs);
                    pairs += 1;
                }
            }
        }
    }

    StandardEstimateReport {
        size_ratio_max: size_max,
        holder_ratio_max: holder_max,
        holder_samples: sampled,
        cube_decay_ratio_max: decay_max,
        cube_decay_pairs: pairs,
        skipped_pairs: skipped,
    }
}

// ---------------------------------------------------------------------------
// Hardy-type bilinear forms
// ---------------------------------------------------------------------------

/// `sum_{x in Q'} sum_{y in Q} |f(y) g(x)| mu_x mu_y / lambda(x, y)` for
/// disjoint index sets.
pub fn hardy_bilinear(space: &PointSpace, q: &[usize], f: &[C64], qp: &[usize], g: &[C64]) -> Result<f64> {
    check_disjoint(q, qp)?;
    let lam = space.lambda_matrix();
    let n = space.len();
    let mut acc = 0.0;
    for &x in qp {
        let gx = g[x].norm() * space.weight(x);
        if gx == 0.0 {
            continue;
        }
        for &y in q {
            let fy = f[y].norm() * space.weight(y);
            if fy == 0.0 {
                continue;
            }
            acc += gx * fy / lam[x * n + y];
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    /// "spectral" for exact singular values, "boyd" for the nonlinear
    /// power iteration (lower bound certified)
    pub method: String,
    pub random_lower_bound: f64,
}

/// Best constant of the Hardy bilinear form over `L^nu(Q) x L^nu'(Q')`:
/// the `l^nu -> l^nu` norm of `M[x][y] = mu_x^(1/nu') mu_y^(1/nu) / lambda(x,y)`.
pub fn hardy_constant(space: &PointSpace, q: &[usize], qp: &[usize], nu: f64) -> Result<NormEstimate> {
    check_disjoint(q, qp)?;
    if !(nu > 1.0) {
        return Err(Error::Precondition("nu must exceed 1".into()));
    }
    let lam = space.lambda_matrix();
    let n = space.len();
    let nu_dual = nu / (nu - 1.0);
    let mut m = RMat::zeros(qp.len(), q.len());
    for (a, &x) in qp.iter().enumerate() {
        for (b, &y) in q.iter().enumerate() {
            m.set(
                a,
                b,
                space.weight(x).powf(1.0 / nu_dual) * space.weight(y).powf(1.0 / nu)
                    / lam[x * n + y],
            );
        }
    }
    Ok(positive_norm_estimate(&m, nu, nu))
}

/// Norm estimate for a nonnegative matrix as `l^p -> l^q`: exact spectral
/// value at p = q = 2, Boyd iteration plus random probes otherwise.
pub fn positive_norm_estimate(m: &RMat, p: f64, q: f64) -> NormEstimate {
    if p == 2.0 && q == 2.0 {
        let v = linalg::spectral_norm(m);
        NormEstimate { value: v, method: "spectral".into(), random_lower_bound: v }
    } else {
        let v = linalg::boyd_norm(m, p, q);
        let mut rng = crate::deterministic_rng(0x9e3779b97f4a7c15);
        let lb = linalg::random_lower_bound(m, p, q, 10_000, &mut rng);
        NormEstimate { value: v.max(lb), method: "boyd".into(), random_lower_bound: lb }
    }
}

/// Best constant of `|Tf|_{L^nu(Qhat \ Q)} <= C |f|_{L^nu(Q)}`.
/// Exact (spectral) at nu = 2; for other nu the value is the Boyd norm of
/// the entrywise-absolute block, an upper bound for the true constant,
/// cross-checked by random lower bounds on the signed block.
pub fn cube_to_halo_constant(op: &KernelOperator, tree: &DyadicTree, q: CubeId, nu: f64) -> NormEstimate {
    let cube = tree.cube(q);
    let hat = tree.q_hat(q);
    let halo: Vec<usize> = hat
        .into_iter()
        .filter(|m| cube.members.binary_search(m).is_err())
        .collect();
    let space = op.space();
    let nu_dual = nu / (nu - 1.0);
    let mut block = CMat::zeros(halo.len(), cube.members.len());
    for (a, &x) in halo.iter().enumerate() {
        for (b, &y) in cube.members.iter().enumerate() {
            let v = op.kernel(x, y)
                * (space.weight(x).powf(1.0 / nu) * space.weight(y).powf(1.0 / nu_dual));
            block.set(a, b, v);
        }
    }
    if nu == 2.0 {
        let v = linalg::spectral_norm_c(&block);
        NormEstimate { value: v, method: "spectral".into(), random_lower_bound: v }
    } else {
        let abs = block.abs();
        let v = linalg::boyd_norm(&abs, nu, nu);
        let mut rng = crate::deterministic_rng(0x4d595df4d0f33173);
        let lb = linalg::random_lower_bound(&abs, nu, nu, 5_000, &mut rng);
        NormEstimate { value: v.max(lb), method: "boyd".into(), random_lower_bound: lb }
    }
}

/// Normalized tail mass `int_{X \ alpha B} |T f_B|^nu dmu / mu(B)` for a
/// function supported on the ball `B`.
pub fn tail_decay_check(
    op: &KernelOperator,
    center: usize,
    radius: f64,
    f_b: &[C64],
    alpha_factor: f64,
    nu: f64,
    l1_bound: f64,
) -> Result<f64> {
    if !(alpha_factor > 1.0) {
        return Err(Error::Precondition("alpha_factor must exceed 1".into()));
    }
    let space = op.space();
    let ball = space.ball(center, radius)?;
    for (i, v) in f_b.iter().enumerate() {
        if v.norm() > 0.0 && ball.members.binary_search(&i).is_err() {
            return Err(Error::Precondition("f_B must be supported on B".into()));
        }
    }
    let mu_b = space.mass_of(&ball.members);
    let l1: f64 = ball.members.iter().map(|&i| f_b[i].norm() * space.weight(i)).sum();
    if l1 > l1_bound * mu_b * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "|f_B|_L1 = {l1} exceeds {l1_bound} * mu(B) = {}",
            l1_bound * mu_b
        )));
    }
    let big = space.ball(center, alpha_factor * radius)?;
    if big.members.len() == space.len() {
        return Err(Error::Precondition("alpha B covers the whole space".into()));
    }
    let tf = op.apply(f_b);
    let mut tail = 0.0;
    for i in 0..space.len() {
        if big.members.binary_search(&i).is_err() {
            tail += tf[i].norm().powf(nu) * space.weight(i);
        }
    }
    Ok(tail / mu_b)
}

fn check_disjoint(a: &[usize], b: &[usize]) -> Result<()> {
    for x in a {
        if b.binary_search(x).is_ok() || b.contains(x) {
            return Err(Error::Precondition("index sets must be disjoint".into()));
        }
    }
    Ok(())
}
