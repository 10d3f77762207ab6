//! Four-term expansion of projected pairings over wavelet scales, with
//! decay-weighted compression.
//!
//! With stopping decompositions for both sides of a pairing on the same
//! reference cube, writing `E_j` for the per-generation survivor
//! expectations and `D_j = E_{j+1} - E_j`, the telescoping identity
//!
//! `<Pi2 f, T Pi1 g> = <E0 f, T E0 g> + sum_j (<D_j f, T D_j g> +
//!  <D_j f, T E_j g> + <E_j f, T D_j g>)`
//!
//! splits the pairing into a same-scale block (U), a paraproduct-like
//! block (V) and its transposed twin (W). Every pair contribution carries
//! the geometric decay weight `alpha_{Q,R}` when the pair is in one of the
//! two weighted configurations (far pairs, or same-length close pairs);
//! thresholding that weight gives a compressed evaluation whose error is
//! measured against the uncompressed sum.

use serde::{Deserialize, Serialize};

use crate::dyadic::{CubeId, DyadicTree};
use crate::error::Result;
use crate::haar::AdaptedHaarSystem;
use crate::linalg::C64;
use crate::operator::KernelOperator;
use crate::stopping::{CubeStatus, StoppingDecomposition};

// ---------------------------------------------------------------------------
// coefficient weights
// ---------------------------------------------------------------------------

/// `mu(Q, R) = inf over x in Q, y in R of min(mu B(x, rho(x,y)), mu B(y, rho(x,y)))`.
pub fn mu_pair(tree: &DyadicTree, a: CubeId, b: CubeId) -> f64 {
    let space = tree.space();
    let n = space.len();
    let lam = space.lambda_matrix();
    let mut best = f64::INFINITY;
    for &x in &tree.cube(a).members {
        for &y in &tree.cube(b).members {
            if x == y {
                continue;
            }
            let v = lam[x * n + y].min(lam[y * n + x]);
            if v < best {
                best = v;
            }
        }
    }
    best
}

/// The two-case decay weight: for far pairs
/// `sqrt(mu(Q) mu(R)) (min(l)/rho)^alpha / mu(Q,R)`; for same-length close
/// pairs the weight is 1; other configurations carry no weight (`None`).
pub fn alpha_weight(tree: &DyadicTree, kernel_alpha: f64, a: CubeId, b: CubeId) -> Option<f64> {
    let la = tree.length(a);
    let lb = tree.length(b);
    let rho = tree.cube_dist(a, b);
    if rho >= la.max(lb) {
        let w = (tree.cube(a).mass * tree.cube(b).mass).sqrt()
            * (la.min(lb) / rho).powf(kernel_alpha)
            / mu_pair(tree, a, b);
        Some(w)
    } else if tree.cube(a).generation == tree.cube(b).generation && rho < la {
        Some(1.0)
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// term ledger
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TermLabel {
    U1,
    U2,
    U3,
    U4,
    V1,
    V2,
    V3,
    V4,
    W1,
    W2,
    W3,
    W4,
}

impl TermLabel {
    pub fn name(self) -> &'static str {
        match self {
            TermLabel::U1 => "u1",
            TermLabel::U2 => "u2",
            TermLabel::U3 => "u3",
            TermLabel::U4 => "u4",
            TermLabel::V1 => "v1",
            TermLabel::V2 => "v2",
            TermLabel::V3 => "v3",
            TermLabel::V4 => "v4",
            TermLabel::W1 => "w1",
            TermLabel::W2 => "w2",
            TermLabel::W3 => "w3",
            TermLabel::W4 => "w4",
        }
    }
}

/// One cube-pair contribution to the expansion.
#[derive(Debug, Clone)]
pub struct Contribution {
    pub term: TermLabel,
    pub left: CubeId,
    pub right: CubeId,
    pub value: C64,
    /// decay weight when the pair is in a weighted configuration
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressedValue {
    pub tau: f64,
    pub value_re: f64,
    pub value_im: f64,
    pub kept_fraction: f64,
    /// achieved |compressed - exact| / |exact|
    pub relative_error: f64,
    /// certified bound: sum of dropped magnitudes over |exact| (monotone
    /// in tau by construction, unlike the achieved error, which signed
    /// cancellations can make non-monotone)
    pub relative_error_bound: f64,
}

/// The assembled expansion of one pairing.
#[derive(Debug)]
pub struct BcrDecomposition {
    pub e0: C64,
    pub contributions: Vec<Contribution>,
    /// direct dense evaluation of `<Pi2 f, T Pi1 g>`
    pub direct: C64,
    /// V1 split into the non-pa block, the paraproduct block and the
    /// compensated block
    pub v1_parts: [C64; 3],
    /// max over cubes of |sum_R beta_{Q,R}| / sum_R |beta_{Q,R}|
    pub v13_cancellation_residual: f64,
    /// brute-force `sum_j <E_j f, T D_j g>` for the duality cross-check
    pub w_direct: C64,
}

impl BcrDecomposition {
    pub fn term_sum(&self, label: TermLabel) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for c in &self.contributions {
            if c.term == label {
                acc += c.value;
            }
        }
        acc
    }

    pub fn u_total(&self) -> C64 {
        [TermLabel::U1, TermLabel::U2, TermLabel::U3, TermLabel::U4]
            .iter()
            .map(|&l| self.term_sum(l))
            .sum()
    }

    pub fn v_total(&self) -> C64 {
        [TermLabel::V1, TermLabel::V2, TermLabel::V3, TermLabel::V4]
            .iter()
            .map(|&l| self.term_sum(l))
            .sum()
    }

    pub fn w_total(&self) -> C64 {
        [TermLabel::W1, TermLabel::W2, TermLabel::W3, TermLabel::W4]
            .iter()
            .map(|&l| self.term_sum(l))
            .sum()
    }

    /// `e0 + U + V + W`.
    pub fn total(&self) -> C64 {
        let mut acc = self.e0;
        for c in &self.contributions {
            acc += c.value;
        }
        acc
    }

    pub fn telescoping_residual(&self) -> f64 {
        (self.total() - self.direct).norm()
    }

    /// Recomputes the total keeping only weighted pairs with weight >= tau
    /// (unweighted pairs are always kept). `kept_fraction` counts weighted
    /// pairs only.
    pub fn compressed(&self, tau: f64) -> CompressedValue {
        let mut acc = self.e0;
        let mut dropped_mass = 0.0;
        let mut weighted = 0usize;
        let mut kept = 0usize;
        for c in &self.contributions {
            match c.weight {
                None => acc += c.value,
                Some(w) => {
                    weighted += 1;
                    if w >= tau {
                        kept += 1;
                        acc += c.value;
                    } else {
                        dropped_mass += c.value.norm();
                    }
                }
            }
        }
        let exact = self.total();
        let scale = exact.norm().max(1e-300);
        CompressedValue {
            tau,
            value_re: acc.re,
            value_im: acc.im,
            kept_fraction: if weighted == 0 { 1.0 } else { kept as f64 / weighted as f64 },
            relative_error: (acc - exact).norm() / scale,
            relative_error_bound: dropped_mass / scale,
        }
    }

    pub fn compression_sweep(&self, taus: &[f64]) -> Vec<CompressedValue> {
        taus.iter().map(|&t| self.compressed(t)).collect()
    }

    /// Smallest tau from the contribution weights that drops at least the
    /// given fraction of weighted pairs.
    pub fn tau_dropping(&self, fraction: f64) -> f64 {
        let mut weights: Vec<f64> = self.contributions.iter().filter_map(|c| c.weight).collect();
        if weights.is_empty() {
            return 0.0;
        }
        weights.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let k = ((weights.len() as f64) * fraction).ceil() as usize;
        let idx = k.min(weights.len() - 1);
        weights[idx] * (1.0 + 1e-12)
    }
}

// ---------------------------------------------------------------------------
// the run context
// ---------------------------------------------------------------------------

/// Everything needed to expand pairings: the tree, the operator, the two
/// stopping decompositions (side 1 feeds the g argument of T, side 2 the
/// f argument) and their wavelet systems.
pub struct BcrRun<'a> {
    pub tree: &'a DyadicTree,
    pub op: &'a KernelOperator,
    pub d1: &'a StoppingDecomposition,
    pub d2: &'a StoppingDecomposition,
    pub h1: AdaptedHaarSystem,
    pub h2: AdaptedHaarSystem,
    pub kernel_alpha: f64,
}

impl<'a> BcrRun<'a> {
    pub fn new(
        tree: &'a DyadicTree,
        op: &'a KernelOperator,
        d1: &'a StoppingDecomposition,
        d2: &'a StoppingDecomposition,
    ) -> Result<Self> {
        assert_eq!(d1.q0, d2.q0, "both decompositions must share the reference cube");
        let h1 = AdaptedHaarSystem::build(tree, &d1.b, &d1.spa, d1.config.delta_stop)?;
        let h2 = AdaptedHaarSystem::build(tree, &d2.b, &d2.spa, d2.config.delta_stop)?;
        let kernel_alpha = op.spec.alpha();
        Ok(BcrRun { tree, op, d1, d2, h1, h2, kernel_alpha })
    }

    /// Dense evaluation of `<Pi2 f, T Pi1 g>`.
    pub fn pairing_direct(&self, f: &[C64], g: &[C64]) -> C64 {
        let pf = self.d2.project(self.tree, f);
        let pg = self.d1.project(self.tree, g);
        self.op.pairing(&pf, &pg)
    }

    /// Full expansion of the pairing into the term ledger.
    pub fn terms(&self, f: &[C64], g: &[C64]) -> BcrDecomposition {
        let tree = self.tree;
        let w = tree.space().weights();
        let apply_t = |support: &[usize], vals: &[C64]| self.op.apply_sparse(support, vals);
        let apply_t_star = |support: &[usize], vals: &[C64]| {
            let mut full = vec![C64::new(0.0, 0.0); tree.space().len()];
            for (k, &x) in support.iter().enumerate() {
                full[x] = vals[k];
            }
            self.op.apply_adjoint(&full)
        };

        let mut contributions: Vec<Contribution> = Vec::new();

        // --- U block: equal-generation difference pairs ---------------------
        for j in 0..=tree.max_generation() {
            let left: Vec<CubeId> = self.d2.survivors_of_gen(j).to_vec();
            let right: Vec<CubeId> = self.d1.survivors_of_gen(j).to_vec();
            if left.is_empty() || right.is_empty() {
                continue;
            }
            let mut right_imgs: Vec<(CubeId, RightPiece)> = Vec::new();
            for &r in &right {
                match self.d1.status(r) {
                    CubeStatus::Spa => {
                        let Some(wv) = self.h1.entry(r) else { continue };
                        let mut per_s = Vec::new();
                        for t in 0..wv.wavelet_count() {
                            let (pts, vals) = wv.expand(tree, &wv.phi_tilde[t]);
                            let weighted: Vec<C64> =
                                pts.iter().zip(&vals).map(|(&x, v)| self.d1.b[x] * v).collect();
                            let img = apply_t(&pts, &weighted);
                            let coef = wv.coefficient(tree, g, t);
                            per_s.push((coef, img));
                        }
                        right_imgs.push((r, RightPiece::Wavelets(per_s)));
                    }
                    CubeStatus::Buffer => {
                        let xi = self.d1.local_step(tree, g, r);
                        let members = tree.cube(r).members.clone();
                        let vals: Vec<C64> = members.iter().map(|&x| xi[x]).collect();
                        let img = apply_t(&members, &vals);
                        right_imgs.push((r, RightPiece::Whole(img)));
                    }
                    _ => {}
                }
            }
            for &q in &left {
                let lpiece = match self.d2.status(q) {
                    CubeStatus::Spa => {
                        let Some(wv) = self.h2.entry(q) else { continue };
                        let mut per_s = Vec::new();
                        for s in 0..wv.wavelet_count() {
                            let (pts, vals) = wv.expand(tree, &wv.phi_tilde[s]);
                            let weighted: Vec<C64> = pts
                                .iter()
                                .zip(&vals)
                                .map(|(&x, v)| self.d2.b[x] * v * w[x])
                                .collect();
                            let coef = wv.coefficient(tree, f, s);
                            per_s.push((coef, pts, weighted));
                        }
                        LeftPiece::Wavelets(per_s)
                    }
                    CubeStatus::Buffer => {
                        let xi = self.d2.local_step(tree, f, q);
                        let members = tree.cube(q).members.clone();
                        let vals: Vec<C64> = members.iter().map(|&x| xi[x] * w[x]).collect();
                        LeftPiece::Whole(members, vals)
                    }
                    _ => continue,
                };
                for (r, rp) in &right_imgs {
                    let label = match (&lpiece, rp) {
                        (LeftPiece::Wavelets(_), RightPiece::Wavelets(_)) => TermLabel::U1,
                        (LeftPiece::Wavelets(_), RightPiece::Whole(_)) => TermLabel::U2,
                        (LeftPiece::Whole(..), RightPiece::Wavelets(_)) => TermLabel::U3,
                        (LeftPiece::Whole(..), RightPiece::Whole(_)) => TermLabel::U4,
                    };
                    let value = pair_value(&lpiece, rp);
                    contributions.push(Contribution {
                        term: label,
                        left: q,
                        right: *r,
                        value,
                        weight: alpha_weight(tree, self.kernel_alpha, q, *r),
                    });
                }
            }
        }

        // --- V block (differences on side 2 against expectations on side 1)
        let (mut v_contribs, v1_parts, v13_resid) = self.v_like(
            &apply_t,
            self.d2,
            &self.h2,
            f,
            self.d1,
            g,
            [TermLabel::V1, TermLabel::V2, TermLabel::V3, TermLabel::V4],
            true,
        );
        contributions.append(&mut v_contribs);

        // --- W block: the duality-swapped V ---------------------------------
        let (mut w_contribs, _, _) = self.v_like(
            &apply_t_star,
            self.d1,
            &self.h1,
            g,
            self.d2,
            f,
            [TermLabel::W1, TermLabel::W2, TermLabel::W3, TermLabel::W4],
            false,
        );
        contributions.append(&mut w_contribs);

        // deterministic ledger order
        contributions.sort_by_key(|c| (c.term.name(), c.left, c.right));

        // head term and the direct pairing
        let head_f = tree.mean(f, self.d2.q0);
        let head_g = tree.mean(g, self.d1.q0);
        let root_members = &tree.cube(self.d1.q0).members;
        let b1_vals: Vec<C64> = root_members.iter().map(|&x| self.d1.b[x]).collect();
        let tb1 = apply_t(root_members, &b1_vals);
        let mut e0 = C64::new(0.0, 0.0);
        for &x in &tree.cube(self.d2.q0).members {
            e0 += self.d2.b[x] * tb1[x] * w[x];
        }
        e0 *= head_f * head_g;

        let direct = self.pairing_direct(f, g);

        // brute-force W for the duality cross-check
        let mut w_direct = C64::new(0.0, 0.0);
        for j in 0..=tree.max_generation() {
            let dg = self.d1.difference_at(tree, g, j);
            if dg.iter().all(|v| v.norm() == 0.0) {
                continue;
            }
            let ef = self.d2.expectation_at(tree, f, j);
            w_direct += self.op.pairing(&ef, &dg);
        }

        BcrDecomposition {
            e0,
            contributions,
            direct,
            v1_parts,
            v13_cancellation_residual: v13_resid,
            w_direct,
        }
    }

    /// Shared V/W machinery: pairs the difference pieces of `d_side`
    /// (applied to `f_d`) against the expectation pieces of `e_side`
    /// (applied to `g_e`) through the given operator application.
    #[allow(clippy::too_many_arguments)]
    fn v_like(
        &self,
        apply: &dyn Fn(&[usize], &[C64]) -> Vec<C64>,
        d_side: &StoppingDecomposition,
        d_haar: &AdaptedHaarSystem,
        f_d: &[C64],
        e_side: &StoppingDecomposition,
        g_e: &[C64],
        labels: [TermLabel; 4],
        track_v1_split: bool,
    ) -> (Vec<Contribution>, [C64; 3], f64) {
        let tree = self.tree;
        let w = tree.space().weights();
        let mut contributions = Vec::new();
        let mut v1_parts = [C64::new(0.0, 0.0); 3];
        let mut v13_resid: f64 = 0.0;

        // top images, computed once (the top's own renormalized function)
        let mut top_imgs: Vec<(CubeId, Vec<C64>, C64)> = Vec::new();
        for &t in &e_side.tops {
            let members = tree.cube(t).members.clone();
            let tb = e_side.top_function(t);
            let vals: Vec<C64> = members.iter().map(|&x| tb[x]).collect();
            let img = apply(&members, &vals);
            top_imgs.push((t, img, tree.mean(g_e, t)));
        }

        for j in 0..=tree.max_generation() {
            let d_cubes: Vec<CubeId> = d_side.survivors_of_gen(j).to_vec();
            if d_cubes.is_empty() {
                continue;
            }
            let e_cubes: Vec<CubeId> = e_side.survivors_of_gen(j).to_vec();
            let mut e_imgs: Vec<(CubeId, Vec<C64>, C64)> = Vec::new();
            for &r in &e_cubes {
                let members = tree.cube(r).members.clone();
                let vals: Vec<C64> = members.iter().map(|&x| e_side.b[x]).collect();
                let img = apply(&members, &vals);
                let factor = tree.mean(g_e, r) / tree.mean(&e_side.b, r);
                e_imgs.push((r, img, factor));
            }
            for &q in &d_cubes {
                match d_side.status(q) {
                    CubeStatus::Spa => {
                        let Some(wv) = d_haar.entry(q) else { continue };
                        let mut coefs = Vec::new();
                        let mut tables: Vec<(Vec<usize>, Vec<C64>)> = Vec::new();
                        for s in 0..wv.wavelet_count() {
                            coefs.push(wv.coefficient(tree, f_d, s));
                            let (pts, vals) = wv.expand(tree, &wv.phi_tilde[s]);
                            let weighted: Vec<C64> = pts
                                .iter()
                                .zip(&vals)
                                .map(|(&x, v)| d_side.b[x] * v * w[x])
                                .collect();
                            tables.push((pts, weighted));
                        }
                        let mut pair_cache: Vec<(CubeId, C64, C64)> = Vec::new();
                        for (r, img, factor) in &e_imgs {
                            let mut pair = C64::new(0.0, 0.0);
                            for (s, (pts, weighted)) in tables.iter().enumerate() {
                                let mut dot = C64::new(0.0, 0.0);
                                for (k, &x) in pts.iter().enumerate() {
                                    dot += weighted[k] * img[x];
                                }
                                pair += coefs[s] * dot;
                            }
                            contributions.push(Contribution {
                                term: labels[0],
                                left: q,
                                right: *r,
                                value: pair * factor,
                                weight: alpha_weight(tree, self.kernel_alpha, q, *r),
                            });
                            pair_cache.push((*r, pair, *factor));
                        }
                        if track_v1_split {
                            let q_is_pa1 = e_side.is_survivor(q);
                            if !q_is_pa1 {
                                for (_, pair, factor) in &pair_cache {
                                    v1_parts[0] += pair * factor;
                                }
                            } else {
                                // beta ledger with the compensated diagonal
                                let all_sum: C64 =
                                    pair_cache.iter().map(|(_, pair, _)| *pair).sum();
                                let mut sum_beta = C64::new(0.0, 0.0);
                                let mut sum_abs = 0.0;
                                let q_factor = pair_cache
                                    .iter()
                                    .find(|(r, _, _)| *r == q)
                                    .map(|(_, _, fa)| *fa)
                                    .unwrap_or(C64::new(0.0, 0.0));
                                for (r, pair, factor) in &pair_cache {
                                    let beta = if *r == q { *pair - all_sum } else { *pair };
                                    sum_beta += beta;
                                    sum_abs += beta.norm();
                                    v1_parts[2] +=
                                        beta * if *r == q { q_factor } else { *factor };
                                }
                                v1_parts[1] += all_sum * q_factor;
                                if sum_abs > 0.0 {
                                    v13_resid = v13_resid.max(sum_beta.norm() / sum_abs);
                                }
                            }
                        }
                        for (t, img, mean) in &top_imgs {
                            if tree.cube(*t).generation > j {
                                continue;
                            }
                            let mut pair = C64::new(0.0, 0.0);
                            for (s, (pts, weighted)) in tables.iter().enumerate() {
                                let mut dot = C64::new(0.0, 0.0);
                                for (k, &x) in pts.iter().enumerate() {
                                    dot += weighted[k] * img[x];
                                }
                                pair += coefs[s] * dot;
                            }
                            contributions.push(Contribution {
                                term: labels[1],
                                left: q,
                                right: *t,
                                value: pair * mean,
                                weight: alpha_weight(tree, self.kernel_alpha, q, *t),
                            });
                        }
                    }
                    CubeStatus::Buffer => {
                        let xi = d_side.local_step(tree, f_d, q);
                        let members = &tree.cube(q).members;
                        let vals: Vec<C64> = members.iter().map(|&x| xi[x] * w[x]).collect();
                        for (r, img, factor) in &e_imgs {
                            let mut dot = C64::new(0.0, 0.0);
                            for (k, &x) in members.iter().enumerate() {
                                dot += vals[k] * img[x];
                            }
                            contributions.push(Contribution {
                                term: labels[2],
                                left: q,
                                right: *r,
                                value: dot * factor,
                                weight: alpha_weight(tree, self.kernel_alpha, q, *r),
                            });
                        }
                        for (t, img, mean) in &top_imgs {
                            if tree.cube(*t).generation > j {
                                continue;
                            }
                            let mut dot = C64::new(0.0, 0.0);
                            for (k, &x) in members.iter().enumerate() {
                                dot += vals[k] * img[x];
                            }
                            contributions.push(Contribution {
                                term: labels[3],
                                left: q,
                                right: *t,
                                value: dot * mean,
                                weight: alpha_weight(tree, self.kernel_alpha, q, *t),
                            });
                        }
                    }
                    _ => {}
                }
            }
        }
        (contributions, v1_parts, v13_resid)
    }
}

enum LeftPiece {
    /// per wavelet: (coefficient, support, b- and mass-weighted values)
    Wavelets(Vec<(C64, Vec<usize>, Vec<C64>)>),
    /// whole buffer piece: (support, mass-weighted values)
    Whole(Vec<usize>, Vec<C64>),
}

enum RightPiece {
    /// per wavelet: (coefficient, dense operator image)
    Wavelets(Vec<(C64, Vec<C64>)>),
    /// dense image of the whole buffer piece
    Whole(Vec<C64>),
}

fn pair_value(left: &LeftPiece, right: &RightPiece) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    let dot = |pts: &[usize], vals: &[C64], img: &[C64]| -> C64 {
        let mut d = C64::new(0.0, 0.0);
        for (k, &x) in pts.iter().enumerate() {
            d += vals[k] * img[x];
        }
        d
    };
    match (left, right) {
        (LeftPiece::Wavelets(ls), RightPiece::Wavelets(rs)) => {
            for (cl, pts, vals) in ls {
                for (cr, img) in rs {
                    acc += *cl * *cr * dot(pts, vals, img);
                }
            }
        }
        (LeftPiece::Wavelets(ls), RightPiece::Whole(img)) => {
            for (cl, pts, vals) in ls {
                acc += *cl * dot(pts, vals, img);
            }
        }
        (LeftPiece::Whole(pts, vals), RightPiece::Wavelets(rs)) => {
            for (cr, img) in rs {
                acc += *cr * dot(pts, vals, img);
            }
        }
        (LeftPiece::Whole(pts, vals), RightPiece::Whole(img)) => {
            acc = dot(pts, vals, img);
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// coefficient decay ratios
// ---------------------------------------------------------------------------

/// Measured worst ratios |pairing| / (alpha weight x mass powers) for the
/// eight coefficient classes; `None` when no admissible configuration
/// exists (e.g. no stopped or buffer cubes).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayRatios {
    /// classes b1..b8: (max ratio, configurations)
    pub ratios: [Option<(f64, usize)>; 8],
}

pub const DECAY_CLASS_TAGS: [&str; 8] =
    ["B.1", "B.2", "B.3", "B.4", "B.5", "B.6", "B.7", "B.8"];

/// Sweeps the coefficient classes with bounded probe functions f, g.
/// Classes 1-5 run over same-generation weighted pairs; classes 6-8 over
/// cubes paired with coarser far tops.
pub fn decay_ratios(run: &BcrRun, f: &[C64], g: &[C64]) -> DecayRatios {
    let tree = run.tree;
    let w = tree.space().weights();
    let mut out: [Option<(f64, usize)>; 8] = Default::default();
    let mut record = |slot: usize, ratio: f64| {
        let entry = out[slot].get_or_insert((0.0, 0));
        entry.0 = entry.0.max(ratio);
        entry.1 += 1;
    };

    let apply_t = |support: &[usize], vals: &[C64]| run.op.apply_sparse(support, vals);

    // same-generation classes (B.1 - B.5)
    for j in 0..=tree.max_generation() {
        let left: Vec<CubeId> = run.d2.survivors_of_gen(j).to_vec();
        let right: Vec<CubeId> = run.d1.survivors_of_gen(j).to_vec();
        for &r in &right {
            let members = tree.cube(r).members.clone();
            let b1_vals: Vec<C64> = members.iter().map(|&x| run.d1.b[x]).collect();
            let ind_img = apply_t(&members, &b1_vals);
            let wavelet_imgs: Option<Vec<Vec<C64>>> = run.h1.entry(r).map(|wv| {
                (0..wv.wavelet_count())
                    .map(|t| {
                        let (pts, vals) = wv.expand(tree, &wv.phi_tilde[t]);
                        let weighted: Vec<C64> =
                            pts.iter().zip(&vals).map(|(&x, v)| run.d1.b[x] * v).collect();
                        apply_t(&pts, &weighted)
                    })
                    .collect()
            });
            let xi_img: Option<Vec<C64>> = if run.d1.status(r) == CubeStatus::Buffer {
                let xi = run.d1.local_step(tree, g, r);
                let vals: Vec<C64> = members.iter().map(|&x| xi[x]).collect();
                Some(apply_t(&members, &vals))
            } else {
                None
            };
            for &q in &left {
                let Some(alpha) = alpha_weight(tree, run.kernel_alpha, q, r) else {
                    continue;
                };
                let mu_q = tree.cube(q).mass;
                let mu_r = tree.cube(r).mass;
                match run.d2.status(q) {
                    CubeStatus::Spa => {
                        if let Some(wv) = run.h2.entry(q) {
                            for s in 0..wv.wavelet_count() {
                                let (pts, vals) = wv.expand(tree, &wv.phi_tilde[s]);
                                let weighted: Vec<C64> = pts
                                    .iter()
                                    .zip(&vals)
                                    .map(|(&x, v)| run.d2.b[x] * v * w[x])
                                    .collect();
                                let dot = |img: &Vec<C64>| -> f64 {
                                    let mut d = C64::new(0.0, 0.0);
                                    for (k, &x) in pts.iter().enumerate() {
                                        d += weighted[k] * img[x];
                                    }
                                    d.norm()
                                };
                                if run.d1.status(r) == CubeStatus::Spa {
                                    if let Some(imgs) = &wavelet_imgs {
                                        for img in imgs {
                                            record(0, dot(img) / alpha);
                                        }
                                    }
                                }
                                if let Some(img) = &xi_img {
                                    record(1, dot(img) / (alpha * mu_r.sqrt()));
                                }
                                record(4, dot(&ind_img) / (alpha * mu_r.sqrt()));
                            }
                        }
                    }
                    CubeStatus::Buffer => {
                        let xi = run.d2.local_step(tree, f, q);
                        let qmembers = &tree.cube(q).members;
                        let vals: Vec<C64> = qmembers.iter().map(|&x| xi[x] * w[x]).collect();
                        let dot = |img: &Vec<C64>| -> f64 {
                            let mut d = C64::new(0.0, 0.0);
                            for (k, &x) in qmembers.iter().enumerate() {
                                d += vals[k] * img[x];
                            }
                            d.norm()
                        };
                        if let Some(img) = &xi_img {
                            record(2, dot(img) / (alpha * (mu_q * mu_r).sqrt()));
                        }
                        record(3, dot(&ind_img) / (alpha * (mu_q * mu_r).sqrt()));
                    }
                    _ => {}
                }
            }
        }
    }

    // far-top classes (B.6 - B.8): rho(Q, P) >= l(P) >= l(Q)
    for &t in &run.d1.tops {
        let members = tree.cube(t).members.clone();
        let tb = run.d1.top_function(t);
        let top_vals: Vec<C64> = members.iter().map(|&x| tb[x]).collect();
        let top_img = apply_t(&members, &top_vals);
        let b1_vals: Vec<C64> = members.iter().map(|&x| run.d1.b[x]).collect();
        let cut_img = apply_t(&members, &b1_vals);
        let mu_t = tree.cube(t).mass;
        let lt = tree.length(t);
        for q in run.d2.spa.iter().chain(run.d2.buffer.iter()) {
            let q = *q;
            if tree.length(q) > lt || tree.cube_dist(q, t) < lt {
                continue;
            }
            let Some(alpha) = alpha_weight(tree, run.kernel_alpha, q, t) else {
                continue;
            };
            let mu_q = tree.cube(q).mass;
            match run.d2.status(q) {
                CubeStatus::Spa => {
                    if let Some(wv) = run.h2.entry(q) {
                        for s in 0..wv.wavelet_count() {
                            let (pts, vals) = wv.expand(tree, &wv.phi_tilde[s]);
                            let mut d = C64::new(0.0, 0.0);
                            let mut dc = C64::new(0.0, 0.0);
                            for (k, &x) in pts.iter().enumerate() {
                                let lhs = run.d2.b[x] * vals[k] * w[x];
                                d += lhs * top_img[x];
                                dc += lhs * cut_img[x];
                            }
                            record(6, d.norm() / (alpha * mu_t.sqrt()));
                            if run.d1.is_survivor(q) {
                                record(7, dc.norm() / (alpha * mu_t.sqrt()));
                            }
                        }
                    }
                }
                CubeStatus::Buffer => {
                    let xi = run.d2.local_step(tree, f, q);
                    let qmembers = &tree.cube(q).members;
                    let mut d = C64::new(0.0, 0.0);
                    for &x in qmembers {
                        d += xi[x] * w[x] * top_img[x];
                    }
                    record(5, d.norm() / (alpha * (mu_q * mu_t).sqrt()));
                }
                _ => {}
            }
        }
    }

    DecayRatios { ratios: out }
}

// ---------------------------------------------------------------------------
// summing lemmas
// ---------------------------------------------------------------------------

/// Same-or-finer-scale summing property: for a reference cube R and scale
/// offset `p >= 0`, sums `mu(Q) (l(Q)/rho(Q,R))^alpha / mu(Q,R)` over the
/// cubes Q with `l(Q) = delta^p l(R)` and `rho(Q, R) >= l(R)`.
pub fn fine_scale_sum(tree: &DyadicTree, r: CubeId, p: u32, alpha: f64) -> f64 {
    let target_gen = tree.cube(r).generation + p;
    if target_gen > tree.max_generation() {
        return 0.0;
    }
    let lr = tree.length(r);
    let mut acc = 0.0;
    for &q in tree.generation(target_gen) {
        let rho = tree.cube_dist(q, r);
        if rho < lr {
            continue;
        }
        acc += tree.cube(q).mass * (tree.length(q) / rho).powf(alpha) / mu_pair(tree, q, r);
    }
    acc
}

/// Coarser-scale summing property: for a reference cube Q and offset
/// `p >= 0`, sums `mu(R) (l(Q)/rho(Q,R))^alpha / mu(Q,R)` over cubes R with
/// `l(R) = delta^-p l(Q)` and `rho(R, Q) >= l(R)`.
pub fn coarse_scale_sum(tree: &DyadicTree, q: CubeId, p: u32, alpha: f64) -> f64 {
    let gen = tree.cube(q).generation;
    if p > gen {
        return 0.0;
    }
    let target_gen = gen - p;
    let lq = tree.length(q);
    let mut acc = 0.0;
    for &r in tree.generation(target_gen) {
        let rho = tree.cube_dist(q, r);
        if rho < tree.length(r) {
            continue;
        }
        acc += tree.cube(r).mass * (lq / rho).powf(alpha) / mu_pair(tree, q, r);
    }
    acc
}
