//! Classical and b-adapted martingale difference operators, and the
//! biorthogonal child-constant wavelet systems that diagonalize them.
//!
//! For a cube Q with children Q' and a function b with nonvanishing means,
//! the adapted difference is
//! `D_Q^b f = sum_{Q'} ([f]_{Q'}/[b]_{Q'}) 1_{Q'} - ([f]_Q/[b]_Q) 1_Q`,
//! which integrates to zero against b. On each strongly pseudo-accretive
//! cube with at least two children we build wavelet pairs
//! `(phi^{b,s}, phitilde^{b,s})`, constant on children, mean-zero against
//! b, biorthogonal under the bilinear form `B(f,g) = int_Q f b g dmu`, and
//! satisfying `D_Q^b f = sum_s <f, phi^{b,s}> phitilde^{b,s}`.
//!
//! The phitilde family comes from projecting an orthonormal basis of the
//! mean-zero child-constant space onto `X_Q = {g : B(1_Q, g) = 0}`; the
//! phi family is its dual basis under B, obtained by solving the small
//! bilinear Gram system (conditioning is guarded, degenerate accretivity
//! is an error).

use serde::{Deserialize, Serialize};

use crate::dyadic::{CubeId, DyadicTree};
use crate::error::{Error, Result};
use crate::linalg::{self, C64, CMat};

/// Default lower bound on |[b]_Q| for strong pseudo-accretivity.
pub const DEFAULT_SPA_THRESHOLD: f64 = 0.125;

/// Condition-number guard for the per-cube Gram systems.
pub const CONDITION_GUARD: f64 = 1e12;

// ---------------------------------------------------------------------------
// classical martingale differences
// ---------------------------------------------------------------------------

/// Mean of `f` over every cube, indexed by cube id.
pub fn cube_means(tree: &DyadicTree, f: &[C64]) -> Vec<C64> {
    tree.cubes().iter().map(|q| tree.mean(f, q.id)).collect()
}

/// `D_Q f = sum_{Q' child} [f]_{Q'} 1_{Q'} - [f]_Q 1_Q`, as a full vector.
pub fn classical_difference(tree: &DyadicTree, f: &[C64], q: CubeId) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); tree.space().len()];
    let cube = tree.cube(q);
    if cube.children.len() <= 1 {
        return out;
    }
    let mq = tree.mean(f, q);
    for &c in &cube.children {
        let mc = tree.mean(f, c);
        for &x in &tree.cube(c).members {
            out[x] = mc - mq;
        }
    }
    out
}

/// Sums all classical differences and checks the representation
/// `f - [f]_X = sum_Q D_Q f` together with the Parseval identity.
/// Returns `(reconstruction_residual, parseval_relative_residual)`.
pub fn classical_decomposition_residuals(tree: &DyadicTree, f: &[C64]) -> (f64, f64) {
    let n = tree.space().len();
    let w = tree.space().weights();
    let mean = tree.mean(f, 0);
    let mut acc = vec![C64::new(0.0, 0.0); n];
    let mut sq_sum = 0.0;
    for q in 0..tree.cubes().len() {
        let d = classical_difference(tree, f, q);
        for i in 0..n {
            acc[i] += d[i];
        }
        sq_sum += linalg::l2_norm(&d, w).powi(2);
    }
    let mut recon: f64 = 0.0;
    let mut target = vec![C64::new(0.0, 0.0); n];
    for i in 0..n {
        target[i] = f[i] - mean;
        recon = recon.max((acc[i] - target[i]).norm());
    }
    let norm_sq = linalg::l2_norm(&target, w).powi(2);
    let parseval = if norm_sq > 0.0 { (sq_sum - norm_sq).abs() / norm_sq } else { sq_sum.abs() };
    (recon, parseval)
}

// ---------------------------------------------------------------------------
// adapted differences
// ---------------------------------------------------------------------------

/// Whether `|[b]_Q| >= threshold` and every child mean passes too.
pub fn is_spa(tree: &DyadicTree, b: &[C64], q: CubeId, threshold: f64) -> bool {
    if tree.mean(b, q).norm() < threshold {
        return false;
    }
    tree.cube(q).children.iter().all(|&c| tree.mean(b, c).norm() >= threshold)
}

/// `D_Q^b f`, full vector; errors when a child mean of b is below the
/// strong pseudo-accretivity threshold.
pub fn adapted_difference(
    tree: &DyadicTree,
    b: &[C64],
    q: CubeId,
    f: &[C64],
    threshold: f64,
) -> Result<Vec<C64>> {
    let cube = tree.cube(q);
    let mut out = vec![C64::new(0.0, 0.0); tree.space().len()];
    if cube.children.len() <= 1 {
        return Ok(out);
    }
    let bq = tree.mean(b, q);
    if bq.norm() < threshold {
        return Err(Error::DegenerateCube(q, format!("|[b]_Q| = {} below threshold", bq.norm())));
    }
    let fq = tree.mean(f, q);
    let eq = fq / bq;
    for &c in &cube.children {
        let bc = tree.mean(b, c);
        if bc.norm() < threshold {
            return Err(Error::DegenerateCube(
                q,
                format!("child {c} has |[b]| = {} below threshold", bc.norm()),
            ));
        }
        let ec = tree.mean(f, c) / bc;
        for &x in &tree.cube(c).members {
            out[x] = ec - eq;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// adapted wavelet systems
// ---------------------------------------------------------------------------

/// Wavelet pair family for one cube; functions are stored as per-child
/// values in the order of `children` (sorted by center point index).
#[derive(Debug, Clone)]
pub struct CubeWavelets {
    pub cube: CubeId,
    pub children: Vec<CubeId>,
    /// analysis family phi^{b,s}, s = 1..N_Q-1 (outer index s-1)
    pub phi: Vec<Vec<C64>>,
    /// synthesis family phitilde^{b,s}
    pub phi_tilde: Vec<Vec<C64>>,
    /// normalization constant c_Q with c_Q^2 [b]_Q = 1
    pub c_q: C64,
    /// accretivity constant C(b, Q)
    pub accretivity: f64,
    /// condition number of the bilinear Gram system
    pub cond: f64,
    /// frame bounds of the synthesis family in L^2 (lower, upper)
    pub frame_bounds: (f64, f64),
}

impl CubeWavelets {
    pub fn wavelet_count(&self) -> usize {
        self.phi.len()
    }

    /// Expands a per-child table into a sparse `(points, values)` pair,
    /// sorted by point index.
    pub fn expand(&self, tree: &DyadicTree, table: &[C64]) -> (Vec<usize>, Vec<C64>) {
        let mut pairs: Vec<(usize, C64)> = Vec::new();
        for (k, &c) in self.children.iter().enumerate() {
            for &x in &tree.cube(c).members {
                pairs.push((x, table[k]));
            }
        }
        pairs.sort_by_key(|p| p.0);
        (pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
    }

    /// `<f, phi^{b,s}>` bilinear coefficient.
    pub fn coefficient(&self, tree: &DyadicTree, f: &[C64], s: usize) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (k, &c) in self.children.iter().enumerate() {
            let v = self.phi[s][k];
            if v.norm() == 0.0 {
                continue;
            }
            for &x in &tree.cube(c).members {
                acc += f[x] * v * tree.space().weight(x);
            }
        }
        acc
    }
}

/// Builds the wavelet pair family on one strongly pseudo-accretive cube
/// with at least two children. Returns `None` for single-child cubes.
pub fn build_cube_wavelets(
    tree: &DyadicTree,
    b: &[C64],
    q: CubeId,
    threshold: f64,
) -> Result<Option<CubeWavelets>> {
    let cube = tree.cube(q);
    if cube.children.len() < 2 {
        return Ok(None);
    }
    let mut children = cube.children.clone();
    children.sort_by_key(|&c| tree.cube(c).center);
    let nc = children.len();
    let masses: Vec<f64> = children.iter().map(|&c| tree.cube(c).mass).collect();
    let betas: Vec<C64> = children.iter().map(|&c| tree.mean(b, c)).collect();
    let mu: f64 = masses.iter().sum();
    let b_mean: C64 = {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..nc {
            acc += betas[k] * masses[k];
        }
        acc / mu
    };
    if b_mean.norm() < threshold {
        return Err(Error::DegenerateCube(q, format!("|[b]_Q| = {}", b_mean.norm())));
    }
    for (k, beta) in betas.iter().enumerate() {
        if beta.norm() < threshold {
            return Err(Error::DegenerateCube(
                q,
                format!("child {} has |[b]| = {}", children[k], beta.norm()),
            ));
        }
    }

    // orthonormal basis of the mean-zero child-constant space (real
    // vectors; Hermitian and bilinear pairings coincide on them)
    let inner = |u: &[C64], v: &[C64]| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..nc {
            acc += u[k] * v[k].conj() * masses[k];
        }
        acc
    };
    let phi0: Vec<C64> = vec![C64::new(1.0 / mu.sqrt(), 0.0); nc];
    let mut on_basis: Vec<Vec<C64>> = Vec::with_capacity(nc - 1);
    for k in 0..nc - 1 {
        let mut v = vec![C64::new(0.0, 0.0); nc];
        v[k] = C64::new(1.0, 0.0);
        let c0 = inner(&v, &phi0);
        for t in 0..nc {
            v[t] -= c0 * phi0[t];
        }
        for prev in &on_basis {
            let c = inner(&v, prev);
            for t in 0..nc {
                v[t] -= c * prev[t];
            }
        }
        let nrm = inner(&v, &v).re.sqrt();
        for t in 0..nc {
            v[t] /= nrm;
        }
        on_basis.push(v);
    }

    // project onto X_Q = {g : B(1, g) = 0}
    let bform_with_one = |v: &[C64]| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..nc {
            acc += v[k] * betas[k] * masses[k];
        }
        acc
    };
    let phi_tilde: Vec<Vec<C64>> = on_basis
        .iter()
        .map(|v| {
            let corr = bform_with_one(v) / (b_mean * mu);
            v.iter().map(|x| x - corr).collect()
        })
        .collect();

    // dual basis under B inside X_Q: solve the bilinear Gram system
    let bform = |u: &[C64], v: &[C64]| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..nc {
            acc += u[k] * betas[k] * v[k] * masses[k];
        }
        acc
    };
    let m = nc - 1;
    let mut gram = CMat::zeros(m, m);
    for s in 0..m {
        for t in 0..m {
            gram.set(s, t, bform(&phi_tilde[s], &phi_tilde[t]));
        }
    }
    let mut dual_coeff = CMat::zeros(m, m); // column s: coefficients of phi^{b,s}
    let mut cond: f64 = 1.0;
    for s in 0..m {
        let mut rhs = vec![C64::new(0.0, 0.0); m];
        rhs[s] = C64::new(1.0, 0.0);
        let (col, c) = solve_guarded(q, &gram, &rhs)?;
        cond = cond.max(c);
        for t in 0..m {
            dual_coeff.set(t, s, col[t]);
        }
    }
    let phi: Vec<Vec<C64>> = (0..m)
        .map(|s| {
            let mut v = vec![C64::new(0.0, 0.0); nc];
            for t in 0..m {
                let c = dual_coeff.get(t, s);
                for k in 0..nc {
                    v[k] += c * phi_tilde[t][k];
                }
            }
            v
        })
        .collect();

    // accretivity constant C(b, Q)
    let abs_mean = tree.mean_abs_pow(b, q, 1.0);
    let mut accretivity = abs_mean.max(1.0 / b_mean.norm());
    for beta in &betas {
        accretivity = accretivity.max(1.0 / beta.norm());
    }

    // frame bounds: eigenvalue range of the Hermitian Gram of phi_tilde
    let mut herm = CMat::zeros(m, m);
    for s in 0..m {
        for t in 0..m {
            herm.set(s, t, inner(&phi_tilde[s], &phi_tilde[t]));
        }
    }
    let upper = linalg::spectral_norm_c(&herm);
    let mut shifted = CMat::zeros(m, m);
    for s in 0..m {
        for t in 0..m {
            let v = if s == t { C64::new(upper, 0.0) - herm.get(s, t) } else { -herm.get(s, t) };
            shifted.set(s, t, v);
        }
    }
    let lower = (upper - linalg::spectral_norm_c(&shifted)).max(0.0);

    let c_q = C64::new(1.0, 0.0) / b_mean.sqrt();

    Ok(Some(CubeWavelets {
        cube: q,
        children,
        phi,
        phi_tilde,
        c_q,
        accretivity,
        cond,
        frame_bounds: (lower, upper),
    }))
}

fn solve_guarded(q: CubeId, a: &CMat, rhs: &[C64]) -> Result<(Vec<C64>, f64)> {
    match linalg::solve_with_cond(a, rhs) {
        Some((x, cond)) if cond <= CONDITION_GUARD => Ok((x, cond)),
        Some((_, cond)) => Err(Error::DegenerateAccretivity(q, cond)),
        None => Err(Error::DegenerateAccretivity(q, f64::INFINITY)),
    }
}

/// Adapted wavelet systems for a set of cubes, indexed by cube id.
#[derive(Debug)]
pub struct AdaptedHaarSystem {
    pub b: Vec<C64>,
    pub threshold: f64,
    entries: Vec<Option<CubeWavelets>>,
}

impl AdaptedHaarSystem {
    /// Builds wavelets on every listed cube (skipping single-child cubes).
    pub fn build(tree: &DyadicTree, b: &[C64], cubes: &[CubeId], threshold: f64) -> Result<Self> {
        let mut entries: Vec<Option<CubeWavelets>> = vec![None; tree.cubes().len()];
        for &q in cubes {
            entries[q] = build_cube_wavelets(tree, b, q, threshold)?;
        }
        Ok(AdaptedHaarSystem { b: b.to_vec(), threshold, entries })
    }

    pub fn entry(&self, q: CubeId) -> Option<&CubeWavelets> {
        self.entries.get(q).and_then(|e| e.as_ref())
    }

    pub fn entries(&self) -> impl Iterator<Item = &CubeWavelets> {
        self.entries.iter().filter_map(|e| e.as_ref())
    }
}

/// Verification record for one cube's wavelet family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveletCheck {
    pub cube: CubeId,
    pub mean_zero_residual: f64,
    pub biorthogonality_residual: f64,
    pub reconstruction_residual: f64,
    pub norm_bound: f64,
    pub l1_constant: f64,
    pub linf_constant: f64,
    pub frame_bounds: (f64, f64),
    pub accretivity: f64,
}

/// Checks the defining wavelet properties on one cube against a probe
/// function: support and child-constancy hold by construction; measured
/// here are mean-zero against b, biorthogonality, the difference-operator
/// reconstruction, and the L^2/L^1/L^inf norm constants.
pub fn verify_cube_wavelets(
    tree: &DyadicTree,
    sys: &AdaptedHaarSystem,
    q: CubeId,
    probe: &[C64],
) -> Result<WaveletCheck> {
    let wv = sys
        .entry(q)
        .ok_or_else(|| Error::Precondition(format!("no wavelets on cube {q}")))?;
    let m = wv.wavelet_count();
    let w = tree.space().weights();
    let b = &sys.b;

    let pair_with_b = |table: &[C64]| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (k, &c) in wv.children.iter().enumerate() {
            for &x in &tree.cube(c).members {
                acc += b[x] * table[k] * w[x];
            }
        }
        acc
    };
    let b_l1: f64 = tree.cube(q).members.iter().map(|&x| b[x].norm() * w[x]).sum();

    let mut mean_zero: f64 = 0.0;
    for s in 0..m {
        let sup_phi = wv.phi[s].iter().map(|v| v.norm()).fold(0.0, f64::max);
        let sup_pt = wv.phi_tilde[s].iter().map(|v| v.norm()).fold(0.0, f64::max);
        mean_zero = mean_zero.max(pair_with_b(&wv.phi[s]).norm() / (b_l1 * sup_phi).max(1e-300));
        mean_zero =
            mean_zero.max(pair_with_b(&wv.phi_tilde[s]).norm() / (b_l1 * sup_pt).max(1e-300));
    }

    let mut biorth: f64 = 0.0;
    for s in 0..m {
        for t in 0..m {
            let mut acc = C64::new(0.0, 0.0);
            for (k, &c) in wv.children.iter().enumerate() {
                for &x in &tree.cube(c).members {
                    acc += wv.phi_tilde[s][k] * b[x] * wv.phi[t][k] * w[x];
                }
            }
            let target = if s == t { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            biorth = biorth.max((acc - target).norm());
        }
    }

    // reconstruction: D_Q^b probe == sum_s <probe, phi^s> phitilde^s
    let direct = adapted_difference(tree, b, q, probe, sys.threshold)?;
    let mut synth = vec![C64::new(0.0, 0.0); tree.space().len()];
    for s in 0..m {
        let coef = wv.coefficient(tree, probe, s);
        for (k, &c) in wv.children.iter().enumerate() {
            for &x in &tree.cube(c).members {
                synth[x] += coef * wv.phi_tilde[s][k];
            }
        }
    }
    let direct_norm = linalg::l2_norm(&direct, w);
    let mut diff = vec![C64::new(0.0, 0.0); tree.space().len()];
    for i in 0..diff.len() {
        diff[i] = synth[i] - direct[i];
    }
    let recon = linalg::l2_norm(&diff, w) / direct_norm.max(1e-300);

    // norm constants
    let mu_q = tree.cube(q).mass;
    let mut norm_bound: f64 = 0.0;
    let mut l1c: f64 = 0.0;
    let mut linfc: f64 = 0.0;
    let c_x = tree.constants.c_x;
    for s in 0..m {
        let (pts_p, vals_p) = wv.expand(tree, &wv.phi[s]);
        let (pts_t, vals_t) = wv.expand(tree, &wv.phi_tilde[s]);
        let wliftp: Vec<f64> = pts_p.iter().map(|&x| w[x]).collect();
        let wliftt: Vec<f64> = pts_t.iter().map(|&x| w[x]).collect();
        let l2p = linalg::l2_norm(&vals_p, &wliftp);
        let l2t = linalg::l2_norm(&vals_t, &wliftt);
        norm_bound = norm_bound.max(l2p + l2t);
        let l1p: f64 = vals_p.iter().zip(&wliftp).map(|(v, wt)| v.norm() * wt).sum();
        let l1t: f64 = vals_t.iter().zip(&wliftt).map(|(v, wt)| v.norm() * wt).sum();
        l1c = l1c.max((l1p + l1t) / mu_q.sqrt());
        let supp = vals_p.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let supt = vals_t.iter().map(|v| v.norm()).fold(0.0, f64::max);
        linfc = linfc.max((supp + supt) * mu_q.sqrt() / c_x.sqrt());
    }

    Ok(WaveletCheck {
        cube: q,
        mean_zero_residual: mean_zero,
        biorthogonality_residual: biorth,
        reconstruction_residual: recon,
        norm_bound,
        l1_constant: l1c,
        linf_constant: linfc,
        frame_bounds: wv.frame_bounds,
        accretivity: wv.accretivity,
    })
}

// ---------------------------------------------------------------------------
// Carleson embedding and the projection-type model operator
// ---------------------------------------------------------------------------

/// `sum_{Q in omega} sum_s |<f, phi_Q^{b,s}>|^2 / |f|_{L^2}^2`.
pub fn carleson_embedding_ratio(
    tree: &DyadicTree,
    sys: &AdaptedHaarSystem,
    omega: &[CubeId],
    f: &[C64],
) -> f64 {
    let mut acc = 0.0;
    for &q in omega {
        if let Some(wv) = sys.entry(q) {
            for s in 0..wv.wavelet_count() {
                acc += wv.coefficient(tree, f, s).norm_sqr();
            }
        }
    }
    let nf = linalg::l2_norm(f, tree.space().weights());
    if nf == 0.0 {
        0.0
    } else {
        acc / (nf * nf)
    }
}

/// The model operator `L f = sum_{Q in omega} c_Q <f, phi_Q^b> phi_Q^b`
/// (all wavelet indices summed). Its pairings vanish exactly for mean-zero
/// inputs paired against disjointly supported tests, the hallmark of an
/// operator whose singularity is adapted to the grid.
pub struct ProjectionModel<'a> {
    pub tree: &'a DyadicTree,
    pub sys: &'a AdaptedHaarSystem,
    pub omega: Vec<CubeId>,
    pub coeffs: Vec<C64>,
}

impl<'a> ProjectionModel<'a> {
    pub fn new(
        tree: &'a DyadicTree,
        sys: &'a AdaptedHaarSystem,
        omega: Vec<CubeId>,
        coeffs: Vec<C64>,
    ) -> Self {
        assert_eq!(omega.len(), coeffs.len());
        ProjectionModel { tree, sys, omega, coeffs }
    }

    pub fn apply(&self, f: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.tree.space().len()];
        for (idx, &q) in self.omega.iter().enumerate() {
            if let Some(wv) = self.sys.entry(q) {
                for s in 0..wv.wavelet_count() {
                    let coef = self.coeffs[idx] * wv.coefficient(self.tree, f, s);
                    if coef.norm() == 0.0 {
                        continue;
                    }
                    for (k, &c) in wv.children.iter().enumerate() {
                        for &x in &self.tree.cube(c).members {
                            out[x] += coef * wv.phi[s][k];
                        }
                    }
                }
            }
        }
        out
    }

    /// `L f` with the extra multiplier b on the output side.
    pub fn apply_b_weighted(&self, f: &[C64]) -> Vec<C64> {
        let mut out = self.apply(f);
        for (i, v) in out.iter_mut().enumerate() {
            *v *= self.sys.b[i];
        }
        out
    }

    /// Empirical `L^nu -> L^nu` norm over random probes plus a duality-map
    /// iteration; a certified lower bound on the true norm.
    pub fn empirical_norm(&self, nu: f64, trials: usize, seed: u64) -> f64 {
        use rand::Rng;
        let mut rng = crate::deterministic_rng(seed);
        let n = self.tree.space().len();
        let w = self.tree.space().weights();
        let mut best: f64 = 0.0;
        {
            let mut probe = |f: &Vec<C64>| {
                let nf = linalg::lp_norm(f, w, nu);
                if nf > 0.0 {
                    let lf = self.apply(f);
                    let v = linalg::lp_norm(&lf, w, nu) / nf;
                    if v > best {
                        best = v;
                    }
                }
            };
            for _ in 0..trials {
                let f: Vec<C64> =
                    (0..n).map(|_| C64::new(rng.random::<f64>() * 2.0 - 1.0, 0.0)).collect();
                probe(&f);
            }
            let mut f: Vec<C64> = vec![C64::new(1.0, 0.0); n];
            for _ in 0..30 {
                probe(&f);
                let lf = self.apply(&f);
                let nlf = linalg::lp_norm(&lf, w, nu);
                if nlf == 0.0 {
                    break;
                }
                let nu_dual = nu / (nu - 1.0);
                // duality map, then a transposed application (the model is
                // symmetric under the bilinear pairing)
                let g: Vec<C64> = lf
                    .iter()
                    .map(|v| {
                        let r = v.norm();
                        if r == 0.0 { C64::new(0.0, 0.0) } else { v / r * r.powf(nu - 1.0) }
                    })
                    .collect();
                let lg = self.apply(&g);
                let mut fnew: Vec<C64> = lg
                    .iter()
                    .map(|v| {
                        let r = v.norm();
                        if r == 0.0 { C64::new(0.0, 0.0) } else { v / r * r.powf(nu_dual - 1.0) }
                    })
                    .collect();
                let nf = linalg::lp_norm(&fnew, w, nu);
                if nf == 0.0 {
                    break;
                }
                for v in fnew.iter_mut() {
                    *v /= nf;
                }
                f = fnew;
            }
            probe(&f);
        }
        best
    }

    /// Checks the b-weighted synthesis bound: for `nu <= q` the norm of
    /// `sum c_Q <f, phi_Q^b> b phi_Q^b` is controlled by the plain norm of
    /// `L` times `(sup_i [|b|^q]_{P_i}^{1/q} + |b 1_F|_inf)`. Returns the
    /// worst measured quotient against that ceiling over random probes.
    pub fn b_weighted_bound_quotient(
        &self,
        nu: f64,
        tops_constant: f64,
        b_off_tops_sup: f64,
        trials: usize,
        seed: u64,
    ) -> f64 {
        use rand::Rng;
        let norm_l = self.empirical_norm(nu, trials, seed ^ 0x77);
        let ceiling = norm_l * (tops_constant + b_off_tops_sup);
        let mut rng = crate::deterministic_rng(seed);
        let n = self.tree.space().len();
        let w = self.tree.space().weights();
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            let f: Vec<C64> =
                (0..n).map(|_| C64::new(rng.random::<f64>() * 2.0 - 1.0, 0.0)).collect();
            let nf = linalg::lp_norm(&f, w, nu);
            if nf == 0.0 {
                continue;
            }
            let lf = self.apply_b_weighted(&f);
            worst = worst.max(linalg::lp_norm(&lf, w, nu) / (nf * ceiling.max(1e-300)));
        }
        worst
    }

    /// Measured grid-adapted pairing bound for neighbor cubes Q != R with
    /// split supports: `|<Lf, g>| / (mu(Q)^(1 - 1/p - 1/q) |f|_p |g|_q)`,
    /// maximized over random f on Q and g on R. Finite for every exponent
    /// pair, including 1/p + 1/q > 1.
    pub fn split_support_quotient(
        &self,
        q_cube: crate::dyadic::CubeId,
        r_cube: crate::dyadic::CubeId,
        p: f64,
        q_exp: f64,
        trials: usize,
        seed: u64,
    ) -> f64 {
        use rand::Rng;
        let tree = self.tree;
        let w = tree.space().weights();
        let mu_q = tree.cube(q_cube).mass;
        let power = mu_q.powf(1.0 - 1.0 / p - 1.0 / q_exp);
        let mut rng = crate::deterministic_rng(seed);
        let n = tree.space().len();
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            let mut f = vec![C64::new(0.0, 0.0); n];
            for &x in &tree.cube(q_cube).members {
                f[x] = C64::new(rng.random::<f64>() * 2.0 - 1.0, 0.0);
            }
            let mut g = vec![C64::new(0.0, 0.0); n];
            for &x in &tree.cube(r_cube).members {
                g[x] = C64::new(rng.random::<f64>() * 2.0 - 1.0, 0.0);
            }
            let lf = self.apply(&f);
            let pairing = linalg::bilinear(&lf, &g, w).norm();
            let denom = power * linalg::lp_norm(&f, w, p) * linalg::lp_norm(&g, w, q_exp);
            if denom > 0.0 {
                worst = worst.max(pairing / denom);
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::build_tree;
    use crate::space;
    use std::sync::Arc;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn two_point_tree(masses: [f64; 2]) -> DyadicTree {
        let s = Arc::new(
            space::PointSpace::from_points(vec![vec![0.0], vec![1.0]], masses.to_vec()).unwrap(),
        );
        build_tree(s, 0.5, 8).unwrap()
    }

    #[test]
    fn classical_difference_two_points() {
        let tree = two_point_tree([1.0, 1.0]);
        let f = vec![c(1.0), c(0.0)];
        let d = classical_difference(&tree, &f, 0);
        assert!((d[0] - c(0.5)).norm() < 1e-15);
        assert!((d[1] - c(-0.5)).norm() < 1e-15);
    }

    #[test]
    fn constant_function_has_zero_differences() {
        let s = Arc::new(space::uniform_line(16, 1.0).unwrap());
        let tree = build_tree(s, 0.5, 32).unwrap();
        let f = vec![c(3.25); 16];
        for q in 0..tree.cubes().len() {
            let d = classical_difference(&tree, &f, q);
            assert!(d.iter().all(|v| v.norm() < 1e-14));
        }
    }

    #[test]
    fn classical_parseval_on_random_function() {
        let s = Arc::new(space::uniform_line(64, 1.0).unwrap());
        let tree = build_tree(s, 0.5, 32).unwrap();
        use rand::Rng;
        let mut rng = crate::deterministic_rng(7);
        let f: Vec<C64> = (0..64).map(|_| c(rng.random::<f64>() * 2.0 - 1.0)).collect();
        let (recon, parseval) = classical_decomposition_residuals(&tree, &f);
        assert!(recon < 1e-12, "reconstruction {recon}");
        assert!(parseval < 1e-10, "parseval {parseval}");
    }

    #[test]
    fn adapted_difference_reduces_to_classical_for_unit_b() {
        let s = Arc::new(space::uniform_line(16, 1.0).unwrap());
        let tree = build_tree(s, 0.5, 32).unwrap();
        let b = vec![c(1.0); 16];
        use rand::Rng;
        let mut rng = crate::deterministic_rng(3);
        let f: Vec<C64> = (0..16).map(|_| c(rng.random::<f64>())).collect();
        for q in 0..tree.cubes().len() {
            let a = adapted_difference(&tree, &b, q, &f, DEFAULT_SPA_THRESHOLD).unwrap();
            let d = classical_difference(&tree, &f, q);
            for i in 0..16 {
                assert!((a[i] - d[i]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn adapted_difference_two_point_example() {
        let tree = two_point_tree([1.0, 1.0]);
        let b = vec![c(2.0), c(2.0 / 3.0)];
        let f = vec![c(1.0), c(0.0)];
        let d = adapted_difference(&tree, &b, 0, &f, DEFAULT_SPA_THRESHOLD).unwrap();
        assert!((d[0] - c(1.0 / 8.0)).norm() < 1e-14);
        assert!((d[1] - c(-3.0 / 8.0)).norm() < 1e-14);
        // int b D^b f = 0
        let v = linalg::bilinear(&b, &d, tree.space().weights());
        assert!(v.norm() < 1e-14);
        // degenerate child mean errors out
        let bz = vec![c(1.0), c(0.0)];
        assert!(adapted_difference(&tree, &bz, 0, &f, DEFAULT_SPA_THRESHOLD).is_err());
    }

    #[test]
    fn standard_haar_for_unit_b_two_equal_children() {
        let tree = two_point_tree([1.0, 1.0]);
        let b = vec![c(1.0); 2];
        let wv = build_cube_wavelets(&tree, &b, 0, DEFAULT_SPA_THRESHOLD).unwrap().unwrap();
        assert_eq!(wv.wavelet_count(), 1);
        let a = 1.0 / (2.0f64).sqrt();
        assert!((wv.phi[0][0].re - a).abs() < 1e-12 && (wv.phi[0][1].re + a).abs() < 1e-12);
        for k in 0..2 {
            assert!((wv.phi[0][k] - wv.phi_tilde[0][k]).norm() < 1e-12);
        }
        assert!((a - 0.70711).abs() < 5e-6);
    }

    #[test]
    fn adapted_pair_on_two_point_cube() {
        let tree = two_point_tree([1.0, 1.0]);
        let b = vec![c(2.0), c(2.0 / 3.0)];
        let sys = AdaptedHaarSystem::build(&tree, &b, &[0], DEFAULT_SPA_THRESHOLD).unwrap();
        let probe = vec![c(1.0), c(0.0)];
        let check = verify_cube_wavelets(&tree, &sys, 0, &probe).unwrap();
        assert!(check.mean_zero_residual < 1e-12);
        assert!(check.biorthogonality_residual < 1e-12);
        assert!(check.reconstruction_residual < 1e-12);
    }

    #[test]
    fn complex_b_wavelets_verify() {
        let s = Arc::new(space::uniform_line(8, 1.0).unwrap());
        let tree = build_tree(Arc::clone(&s), 0.5, 32).unwrap();
        let b: Vec<C64> = (0..8)
            .map(|i| C64::new(1.0, if i % 2 == 0 { 0.4 } else { -0.4 }))
            .collect();
        let cubes: Vec<CubeId> = (0..tree.cubes().len())
            .filter(|&q| is_spa(&tree, &b, q, DEFAULT_SPA_THRESHOLD) && tree.cube(q).children.len() >= 2)
            .collect();
        let sys = AdaptedHaarSystem::build(&tree, &b, &cubes, DEFAULT_SPA_THRESHOLD).unwrap();
        use rand::Rng;
        let mut rng = crate::deterministic_rng(11);
        let probe: Vec<C64> = (0..8).map(|_| C64::new(rng.random(), rng.random())).collect();
        for &q in &cubes {
            let check = verify_cube_wavelets(&tree, &sys, q, &probe).unwrap();
            assert!(check.mean_zero_residual < 1e-11, "cube {q}: {check:?}");
            assert!(check.biorthogonality_residual < 1e-10);
            assert!(check.reconstruction_residual < 1e-10);
            let (lo, hi) = check.frame_bounds;
            assert!(lo > 0.0 && hi >= lo);
        }
    }

    #[test]
    fn single_child_cube_has_no_wavelets() {
        let tree = two_point_tree([1.0, 1.0]);
        let singleton = tree.generation(1)[0];
        let b = vec![c(1.0); 2];
        assert!(build_cube_wavelets(&tree, &b, singleton, DEFAULT_SPA_THRESHOLD)
            .unwrap()
            .is_none());
    }

    #[test]
    fn bessel_bound_for_unit_b() {
        let s = Arc::new(space::uniform_line(64, 1.0).unwrap());
        let tree = build_tree(Arc::clone(&s), 0.5, 32).unwrap();
        let b = vec![c(1.0); 64];
        let all: Vec<CubeId> = (0..tree.cubes().len()).collect();
        let sys = AdaptedHaarSystem::build(&tree, &b, &all, DEFAULT_SPA_THRESHOLD).unwrap();
        use rand::Rng;
        let mut rng = crate::deterministic_rng(5);
        for _ in 0..5 {
            let f: Vec<C64> = (0..64).map(|_| c(rng.random::<f64>() * 2.0 - 1.0)).collect();
            let ratio = carleson_embedding_ratio(&tree, &sys, &all, &f);
            assert!(ratio <= 1.0 + 1e-10, "ratio {ratio}");
        }
        // f = b has every coefficient vanish
        let ratio = carleson_embedding_ratio(&tree, &sys, &all, &b);
        assert!(ratio < 1e-24);
    }

    #[test]
    fn projection_model_is_orthogonal_projection_for_unit_b() {
        let s = Arc::new(space::uniform_line(32, 1.0).unwrap());
        let tree = build_tree(Arc::clone(&s), 0.5, 32).unwrap();
        let b = vec![c(1.0); 32];
        let all: Vec<CubeId> = (0..tree.cubes().len()).collect();
        let sys = AdaptedHaarSystem::build(&tree, &b, &all, DEFAULT_SPA_THRESHOLD).unwrap();
        let coeffs = vec![c(1.0); all.len()];
        let model = ProjectionModel::new(&tree, &sys, all, coeffs);
        let norm = model.empirical_norm(2.0, 40, 17);
        assert!(norm <= 1.0 + 1e-10, "norm {norm}");
        // zero coefficients give the zero operator
        let zero = ProjectionModel::new(
            &tree,
            &sys,
            (0..tree.cubes().len()).collect(),
            vec![c(0.0); tree.cubes().len()],
        );
        let f: Vec<C64> = (0..32).map(|i| c(i as f64)).collect();
        assert!(zero.apply(&f).iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn model_operator_b_weighted_bound() {
        // perturbed b, nu below the size exponent: the quotient against the
        // predicted ceiling stays at most ~1
        let s = Arc::new(space::uniform_line(32, 1.0).unwrap());
        let tree = build_tree(Arc::clone(&s), 0.5, 32).unwrap();
        let b: Vec<C64> = (0..32).map(|i| c(1.0 + 0.4 * if i % 3 == 0 { 1.0 } else { -0.5 })).collect();
        let cubes: Vec<CubeId> = (0..tree.cubes().len())
            .filter(|&q| is_spa(&tree, &b, q, DEFAULT_SPA_THRESHOLD))
            .collect();
        let sys = AdaptedHaarSystem::build(&tree, &b, &cubes, DEFAULT_SPA_THRESHOLD).unwrap();
        let coeffs = vec![c(1.0); cubes.len()];
        let model = ProjectionModel::new(&tree, &sys, cubes, coeffs);
        // no stopped cubes here: the tops constant is 0 and b is globally bounded
        let b_sup = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for nu in [1.5, 2.0] {
            let quotient = model.b_weighted_bound_quotient(nu, 0.0, b_sup, 25, 91);
            assert!(quotient.is_finite() && quotient <= 1.0 + 1e-9, "nu={nu}: {quotient}");
        }
    }

    #[test]
    fn split_support_pairing_bound_finite_for_small_exponents() {
        let s = Arc::new(space::uniform_line(32, 1.0).unwrap());
        let tree = build_tree(Arc::clone(&s), 0.5, 32).unwrap();
        let b = vec![c(1.0); 32];
        let all: Vec<CubeId> = (0..tree.cubes().len()).collect();
        let sys = AdaptedHaarSystem::build(&tree, &b, &all, DEFAULT_SPA_THRESHOLD).unwrap();
        let model = ProjectionModel::new(&tree, &sys, all.clone(), vec![c(1.0); all.len()]);
        // a neighbor pair at generation 2
        let gen2 = tree.generation(2);
        let q = gen2[0];
        let r = *tree.neighbors(q).iter().find(|&&r| tree.cube(r).generation == 2).unwrap();
        for (p, qe) in [(2.0, 2.0), (1.5, 1.5), (3.0, 1.2)] {
            let v = model.split_support_quotient(q, r, p, qe, 40, 7);
            assert!(v.is_finite(), "p={p}, q={qe}");
        }
    }

    #[test]
    fn projection_model_vanishes_off_mean_zero_supports() {
        // mean-zero f on Q, g supported off Q: <g, Lf> = 0 exactly
        let s = Arc::new(space::uniform_line(16, 1.0).unwrap());
        let tree = build_tree(Arc::clone(&s), 0.5, 32).unwrap();
        let b = vec![c(1.0); 16];
        let all: Vec<CubeId> = (0..tree.cubes().len()).collect();
        let sys = AdaptedHaarSystem::build(&tree, &b, &all, DEFAULT_SPA_THRESHOLD).unwrap();
        let model = ProjectionModel::new(&tree, &sys, all.clone(), vec![c(1.0); all.len()]);
        let q = tree.generation(1)[0];
        let members = tree.cube(q).members.clone();
        let mut f = vec![c(0.0); 16];
        f[members[0]] = c(1.0);
        let mass: f64 = members.iter().map(|&i| tree.space().weight(i)).sum();
        let mean: C64 = linalg::integral(&f, tree.space().weights()) / mass;
        for &i in &members {
            f[i] -= mean;
        }
        let lf = model.apply(&f);
        for i in 0..16 {
            if members.binary_search(&i).is_err() {
                assert!(lf[i].norm() < 1e-15, "leak at {i}: {}", lf[i].norm());
            }
        }
    }
}
