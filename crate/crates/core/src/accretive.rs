//! Per-cube accretive function systems and the numerical verifiers for
//! their size, image, dual-norm and weak-boundedness hypotheses.
//!
//! A system assigns to every dyadic cube Q a pair of functions
//! `(b_Q^1, b_Q^2)` supported on Q with `int_Q b_Q^i = mu(Q)` exactly
//! (generators renormalize). The verifiers measure, over all cubes (or all
//! admissible cube configurations up to a depth bound), the constants in:
//!
//! - the size bound `int_Q (|b^1|^p + |b^2|^q) <= C mu(Q)`,
//! - the image bounds `int_{Qhat} (|T b^1|^{q'} + |T* b^2|^{p'}) <= C mu(Q)`
//!   and the weaker over-Q-only form,
//! - the dual-norm pairing bound against disjoint families `R_n` near a
//!   cube `R'` (the constant is an exact closed-form dual norm, compared
//!   against random search),
//! - the diagonal and neighbor weak boundedness bounds.

use serde::{Deserialize, Serialize};

use crate::dyadic::{CubeId, DyadicTree};
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::operator::{self, KernelOperator};

/// Which of the pair a verifier should draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    One,
    Two,
}

/// Built-in generator families.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// `b == 1` on every cube
    ConstantOne,
    /// `1 + amplitude * exp(-(rho(x, x0) / (0.3 diam))^2)`, renormalized
    RadialBump { amplitude: f64 },
    /// `1 + amplitude * (+-1)` with a seeded sign pattern, renormalized
    Oscillatory { amplitude: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SystemConfig {
    pub generator: GeneratorKind,
    pub p: f64,
    pub q: f64,
    pub seed: u64,
    /// concentrate each b_Q on an interior subcube far from the boundary
    /// of Q before renormalizing (the ball-based reduction mode)
    #[serde(default)]
    pub interior_subcube: bool,
}

impl SystemConfig {
    pub fn constant_one(p: f64, q: f64) -> Self {
        SystemConfig { generator: GeneratorKind::ConstantOne, p, q, seed: 0, interior_subcube: false }
    }

    pub fn oscillatory(amplitude: f64, p: f64, q: f64, seed: u64) -> Self {
        SystemConfig {
            generator: GeneratorKind::Oscillatory { amplitude },
            p,
            q,
            seed,
            interior_subcube: false,
        }
    }
}

/// A realized `(p, q)` system: per-cube function pairs stored as values on
/// the cube's member points (in member order).
#[derive(Debug)]
pub struct AccretiveSystem {
    pub p: f64,
    pub q: f64,
    pub seed: u64,
    b1: Vec<Vec<C64>>,
    b2: Vec<Vec<C64>>,
}

impl AccretiveSystem {
    pub fn p_dual(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    pub fn q_dual(&self) -> f64 {
        self.q / (self.q - 1.0)
    }

    /// Values of `b_Q^i` on the members of Q (member order).
    pub fn values(&self, side: Side, q: CubeId) -> &[C64] {
        match side {
            Side::One => &self.b1[q],
            Side::Two => &self.b2[q],
        }
    }

    /// `b_Q^i` expanded to a full-length vector.
    pub fn full(&self, tree: &DyadicTree, side: Side, q: CubeId) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); tree.space().len()];
        for (k, &x) in tree.cube(q).members.iter().enumerate() {
            out[x] = self.values(side, q)[k];
        }
        out
    }

    /// Value of `b_Q^i` at a single point of Q.
    pub fn value_at(&self, tree: &DyadicTree, side: Side, q: CubeId, point: usize) -> C64 {
        let pos = tree
            .cube(q)
            .members
            .binary_search(&point)
            .expect("point must belong to the owning cube");
        self.values(side, q)[pos]
    }

    /// `[|b_Q^i|^r]_R` for a subcube R of Q.
    pub fn mean_abs_pow_on(
        &self,
        tree: &DyadicTree,
        side: Side,
        owner: CubeId,
        sub: CubeId,
        r: f64,
    ) -> f64 {
        let vals = self.values(side, owner);
        let owner_members = &tree.cube(owner).members;
        let mut acc = 0.0;
        for &x in &tree.cube(sub).members {
            let pos = owner_members.binary_search(&x).expect("subcube not nested in owner");
            acc += vals[pos].norm().powf(r) * tree.space().weight(x);
        }
        acc / tree.cube(sub).mass
    }

    /// Normalization defect `max_Q |int_Q b_Q^i - mu(Q)| / mu(Q)`.
    pub fn normalization_defect(&self, tree: &DyadicTree) -> f64 {
        let mut worst: f64 = 0.0;
        for cube in tree.cubes() {
            for side in [Side::One, Side::Two] {
                let mut acc = C64::new(0.0, 0.0);
                for (k, &x) in cube.members.iter().enumerate() {
                    acc += self.values(side, cube.id)[k] * tree.space().weight(x);
                }
                worst = worst.max((acc - C64::new(cube.mass, 0.0)).norm() / cube.mass);
            }
        }
        worst
    }
}

/// Builds the per-cube pairs from a config. The two sides draw independent
/// seed streams, so oscillatory systems have genuinely different b^1, b^2.
pub fn build_system(tree: &DyadicTree, config: &SystemConfig) -> Result<AccretiveSystem> {
    if !(config.p > 1.0 && config.p.is_finite() && config.q > 1.0 && config.q.is_finite()) {
        return Err(Error::Precondition("exponents must lie in (1, infinity)".into()));
    }
    let profile1 = base_profile(tree, &config.generator, config.seed ^ 0x517c_c1b7_2722_0a95);
    let profile2 = base_profile(tree, &config.generator, config.seed ^ 0x6a09_e667_f3bc_c909);
    let b1 = restrict_all(tree, &profile1, config.interior_subcube)?;
    let b2 = restrict_all(tree, &profile2, config.interior_subcube)?;
    Ok(AccretiveSystem { p: config.p, q: config.q, seed: config.seed, b1, b2 })
}

/// The global profile a generator restricts per cube; exposed so that the
/// stopping machinery can reuse the side-1/side-2 streams.
pub fn base_profile(tree: &DyadicTree, kind: &GeneratorKind, seed: u64) -> Vec<C64> {
    use rand::Rng;
    let n = tree.space().len();
    match kind {
        GeneratorKind::ConstantOne => vec![C64::new(1.0, 0.0); n],
        GeneratorKind::RadialBump { amplitude } => {
            let center = n / 2;
            let scale = 0.3 * tree.space().diameter().max(1e-300);
            (0..n)
                .map(|i| {
                    let d = tree.space().dist(i, center) / scale;
                    C64::new(1.0 + amplitude * (-d * d).exp(), 0.0)
                })
                .collect()
        }
        GeneratorKind::Oscillatory { amplitude } => {
            let mut rng = crate::deterministic_rng(seed);
            (0..n)
                .map(|_| {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    C64::new(1.0 + amplitude * sign, 0.0)
                })
                .collect()
        }
    }
}

fn restrict_all(tree: &DyadicTree, profile: &[C64], interior: bool) -> Result<Vec<Vec<C64>>> {
    let mut out = Vec::with_capacity(tree.cubes().len());
    for cube in tree.cubes() {
        let support = if interior { interior_subcube(tree, cube.id) } else { cube.id };
        let support_members = &tree.cube(support).members;
        let mut integral = C64::new(0.0, 0.0);
        for &x in support_members {
            integral += profile[x] * tree.space().weight(x);
        }
        if integral.norm() < 1e-8 * tree.cube(support).mass {
            return Err(Error::DegenerateCube(
                cube.id,
                "profile integrates to nearly zero; cannot renormalize".into(),
            ));
        }
        let factor = C64::new(cube.mass, 0.0) / integral;
        let vals: Vec<C64> = cube
            .members
            .iter()
            .map(|&x| {
                if support_members.binary_search(&x).is_ok() {
                    profile[x] * factor
                } else {
                    C64::new(0.0, 0.0)
                }
            })
            .collect();
        out.push(vals);
    }
    Ok(out)
}

/// Shallowest (then lowest-id) subcube of Q whose distance to the
/// complement of Q is at least `(1 + C_1) l(subcube)`; Q itself qualifies
/// when it has no exterior. On a finite space such a subcube always exists
/// at some depth because point-to-complement distances are positive.
fn interior_subcube(tree: &DyadicTree, q: CubeId) -> CubeId {
    let cube = tree.cube(q);
    let n = tree.space().len();
    if cube.members.len() == n {
        return q;
    }
    let c1 = tree.constants.c1;
    let exterior: Vec<usize> = (0..n).filter(|y| cube.members.binary_search(y).is_err()).collect();
    let mut frontier = vec![q];
    while !frontier.is_empty() {
        let mut found: Option<CubeId> = None;
        for &s in &frontier {
            let sub = tree.cube(s);
            let mut d = f64::INFINITY;
            for &x in &sub.members {
                for &y in &exterior {
                    d = d.min(tree.space().dist(x, y));
                }
            }
            if d / tree.scale >= (1.0 + c1) * tree.length(s) {
                found = match found {
                    None => Some(s),
                    Some(b) if s < b => Some(s),
                    other => other,
                };
            }
        }
        if let Some(s) = found {
            return s;
        }
        frontier = frontier.iter().flat_map(|&s| tree.cube(s).children.clone()).collect();
    }
    q
}

// ---------------------------------------------------------------------------
// size and image verifiers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizeReport {
    /// max over cubes of the normalized size integral (tag 3.2)
    pub c_size: f64,
    pub c_size_cube: CubeId,
    /// max normalized image integral over Q_hat (tag 3.3)
    pub c_image_hat: f64,
    pub c_image_hat_cube: CubeId,
    /// max normalized image integral over Q only (tag 3.7)
    pub c_image: f64,
    pub c_image_cube: CubeId,
}

/// Worst normalized size/image integrals over every cube of the tree.
pub fn verify_size(tree: &DyadicTree, sys: &AccretiveSystem, op: &KernelOperator) -> SizeReport {
    let space = tree.space();
    let (p, q) = (sys.p, sys.q);
    let (pd, qd) = (sys.p_dual(), sys.q_dual());
    let mut report = SizeReport {
        c_size: 0.0,
        c_size_cube: 0,
        c_image_hat: 0.0,
        c_image_hat_cube: 0,
        c_image: 0.0,
        c_image_cube: 0,
    };
    for cube in tree.cubes() {
        let b1 = sys.values(Side::One, cube.id);
        let b2 = sys.values(Side::Two, cube.id);
        let mut size = 0.0;
        for (k, &x) in cube.members.iter().enumerate() {
            size += (b1[k].norm().powf(p) + b2[k].norm().powf(q)) * space.weight(x);
        }
        let size = size / cube.mass;
        if size > report.c_size {
            report.c_size = size;
            report.c_size_cube = cube.id;
        }

        let tb1 = op.apply_sparse(&cube.members, b1);
        let tsb2 = op.apply_adjoint(&sys.full(tree, Side::Two, cube.id));
        let hat = tree.q_hat(cube.id);
        let mut over_hat = 0.0;
        let mut over_q = 0.0;
        for &x in &hat {
            let v = (tb1[x].norm().powf(qd) + tsb2[x].norm().powf(pd)) * space.weight(x);
            over_hat += v;
            if cube.members.binary_search(&x).is_ok() {
                over_q += v;
            }
        }
        let over_hat = over_hat / cube.mass;
        let over_q = over_q / cube.mass;
        if over_hat > report.c_image_hat {
            report.c_image_hat = over_hat;
            report.c_image_hat_cube = cube.id;
        }
        if over_q > report.c_image {
            report.c_image = over_q;
            report.c_image_cube = cube.id;
        }
    }
    report
}

// ---------------------------------------------------------------------------
// dual-norm pairing verifier
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualNormConfigResult {
    pub owner2: CubeId,
    pub owner1: CubeId,
    pub r_prime: CubeId,
    pub family_generation: u32,
    pub family: Vec<CubeId>,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualNormReport {
    pub c_h: f64,
    pub worst: Option<DualNormConfigResult>,
    pub configurations: usize,
    pub skipped: usize,
}

/// Exact closed-form dual norm of the functional `alpha -> sum alpha_n v_n`
/// on the unit ball of `|sum alpha_n 1_{R_n}|_nu`, divided by
/// `mu(R')^{1/nu'}`.
pub fn dual_norm_ratio(v: &[C64], masses: &[f64], mu_r_prime: f64, nu: f64) -> f64 {
    let nu_dual = nu / (nu - 1.0);
    let mut acc = 0.0;
    for (vn, mn) in v.iter().zip(masses) {
        acc += vn.norm().powf(nu_dual) * mn.powf(-nu_dual / nu);
    }
    acc.powf(1.0 / nu_dual) / mu_r_prime.powf(1.0 / nu_dual)
}

/// Random-search lower bound for the same supremum (complex Gaussian-like
/// directions); returns the best achieved ratio.
pub fn dual_norm_random_search(
    v: &[C64],
    masses: &[f64],
    mu_r_prime: f64,
    nu: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    use rand::Rng;
    let mut rng = crate::deterministic_rng(seed);
    let nu_dual = nu / (nu - 1.0);
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let alpha: Vec<C64> = (0..v.len())
            .map(|_| {
                let a: f64 = rng.random::<f64>() * 2.0 - 1.0;
                let b: f64 = rng.random::<f64>() * 2.0 - 1.0;
                C64::new(a, b)
            })
            .collect();
        let mut num = C64::new(0.0, 0.0);
        let mut den = 0.0;
        for k in 0..v.len() {
            num += alpha[k] * v[k];
            den += alpha[k].norm().powf(nu) * masses[k];
        }
        if den > 0.0 {
            best = best.max(num.norm() / den.powf(1.0 / nu) / mu_r_prime.powf(1.0 / nu_dual));
        }
    }
    best
}

/// Enumerates admissible configurations with owner cubes up to `depth`
/// and returns the worst exact dual-norm ratio: for every owner pair, every
/// subcube R' of the side-1 owner, and every generation, the family is all
/// same-generation cubes inside `(Rhat' \ R') & owner2` at set distance
/// below their own length from R', subject to the mean side conditions.
pub fn verify_dual_norm(
    tree: &DyadicTree,
    sys: &AccretiveSystem,
    op: &KernelOperator,
    depth: u32,
    nu: f64,
    side_bound: f64,
) -> DualNormReport {
    let mut report = DualNormReport { c_h: 0.0, worst: None, configurations: 0, skipped: 0 };
    let max_gen = tree.max_generation();
    let owners: Vec<CubeId> = tree
        .cubes()
        .iter()
        .filter(|c| c.generation <= depth.min(max_gen))
        .map(|c| c.id)
        .collect();
    for &q1 in &owners {
        for r_prime in tree.subtree(q1) {
            let rp_cube = tree.cube(r_prime);
            // atom chains repeat the same geometry; visit the first link only
            if let Some(p) = rp_cube.parent {
                if tree.cube(p).children.len() == 1 {
                    continue;
                }
            }
            if sys.mean_abs_pow_on(tree, Side::One, q1, r_prime, sys.p) > side_bound {
                report.skipped += 1;
                continue;
            }
            let b1_vals: Vec<C64> =
                rp_cube.members.iter().map(|&x| sys.value_at(tree, Side::One, q1, x)).collect();
            let t_b1 = op.apply_sparse(&rp_cube.members, &b1_vals);
            let hat = tree.q_hat(r_prime);
            for &q2 in &owners {
                for g in rp_cube.generation..=max_gen {
                    let mut family = Vec::new();
                    let mut v = Vec::new();
                    let mut masses = Vec::new();
                    for &s in tree.generation(g) {
                        let sc = tree.cube(s);
                        if !tree.is_descendant_of(s, q2) {
                            continue;
                        }
                        if sc.members.iter().any(|m| rp_cube.members.binary_search(m).is_ok()) {
                            continue;
                        }
                        if sc.members.iter().any(|m| hat.binary_search(m).is_err()) {
                            continue;
                        }
                        if tree.cube_dist(r_prime, s) >= tree.length(s) {
                            continue;
                        }
                        if sys.mean_abs_pow_on(tree, Side::Two, q2, s, sys.q) > side_bound {
                            report.skipped += 1;
                            continue;
                        }
                        let mut vn = C64::new(0.0, 0.0);
                        for &x in &sc.members {
                            vn += sys.value_at(tree, Side::Two, q2, x)
                                * t_b1[x]
                                * tree.space().weight(x);
                        }
                        family.push(s);
                        v.push(vn);
                        masses.push(sc.mass);
                    }
                    if family.is_empty() {
                        continue;
                    }
                    report.configurations += 1;
                    let ratio = dual_norm_ratio(&v, &masses, rp_cube.mass, nu);
                    if ratio > report.c_h {
                        report.c_h = ratio;
                        report.worst = Some(DualNormConfigResult {
                            owner2: q2,
                            owner1: q1,
                            r_prime,
                            family_generation: g,
                            family,
                            ratio,
                        });
                    }
                }
            }
        }
    }
    report
}

// ---------------------------------------------------------------------------
// weak boundedness verifiers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WbpReport {
    /// diagonal bound max |<b^2 1_R, T(b^1 1_R)>| / mu(R) (tag 3.5)
    pub c_wbp: f64,
    pub c_wbp_cube: CubeId,
    /// neighbor bound max |<b^2 1_R, T(b^1 1_{R'})>| / mu(R') (tag 3.6)
    pub c_neighbor: f64,
    pub c_neighbor_pair: (CubeId, CubeId),
    pub diagonal_configs: usize,
    pub neighbor_configs: usize,
}

/// Diagonal and neighbor weak-boundedness sweeps over owner pairs up to
/// `depth`, with `side_bound` as the admissibility constant.
pub fn verify_wbp(
    tree: &DyadicTree,
    sys: &AccretiveSystem,
    op: &KernelOperator,
    depth: u32,
    side_bound: f64,
) -> WbpReport {
    let mut report = WbpReport {
        c_wbp: 0.0,
        c_wbp_cube: 0,
        c_neighbor: 0.0,
        c_neighbor_pair: (0, 0),
        diagonal_configs: 0,
        neighbor_configs: 0,
    };
    let max_gen = tree.max_generation();
    let owners: Vec<CubeId> = tree
        .cubes()
        .iter()
        .filter(|c| c.generation <= depth.min(max_gen))
        .map(|c| c.id)
        .collect();
    for &q2 in &owners {
        for &q1 in &owners {
            // diagonal: R inside both owners (dyadic cubes meet only nested)
            let inner = if tree.is_descendant_of(q1, q2) {
                Some(q1)
            } else if tree.is_descendant_of(q2, q1) {
                Some(q2)
            } else {
                None
            };
            if let Some(base) = inner {
                for r in tree.subtree(base) {
                    let rc = tree.cube(r);
                    if let Some(p) = rc.parent {
                        if tree.cube(p).children.len() == 1 {
                            continue;
                        }
                    }
                    if sys.mean_abs_pow_on(tree, Side::One, q1, r, sys.p) > side_bound
                        || sys.mean_abs_pow_on(tree, Side::Two, q2, r, sys.q) > side_bound
                    {
                        continue;
                    }
                    let b1: Vec<C64> =
                        rc.members.iter().map(|&x| sys.value_at(tree, Side::One, q1, x)).collect();
                    let b2: Vec<C64> =
                        rc.members.iter().map(|&x| sys.value_at(tree, Side::Two, q2, x)).collect();
                    let val =
                        op.pairing_sparse(&rc.members, &b2, &rc.members, &b1).norm() / rc.mass;
                    report.diagonal_configs += 1;
                    if val > report.c_wbp {
                        report.c_wbp = val;
                        report.c_wbp_cube = r;
                    }
                }
            }
            // neighbors: R inside owner2, R' inside owner1, same generation
            for r in tree.subtree(q2) {
                let rc = tree.cube(r);
                if let Some(p) = rc.parent {
                    if tree.cube(p).children.len() == 1 {
                        continue;
                    }
                }
                for &rp in tree.neighbors(r) {
                    if !tree.is_descendant_of(rp, q1) {
                        continue;
                    }
                    if sys.mean_abs_pow_on(tree, Side::Two, q2, r, sys.q) > side_bound
                        || sys.mean_abs_pow_on(tree, Side::One, q1, rp, sys.p) > side_bound
                    {
                        continue;
                    }
                    let rpc = tree.cube(rp);
                    let b1: Vec<C64> =
                        rpc.members.iter().map(|&x| sys.value_at(tree, Side::One, q1, x)).collect();
                    let b2: Vec<C64> =
                        rc.members.iter().map(|&x| sys.value_at(tree, Side::Two, q2, x)).collect();
                    let val =
                        op.pairing_sparse(&rc.members, &b2, &rpc.members, &b1).norm() / rpc.mass;
                    report.neighbor_configs += 1;
                    if val > report.c_neighbor {
                        report.c_neighbor = val;
                        report.c_neighbor_pair = (r, rp);
                    }
                }
            }
        }
    }
    report
}

// ---------------------------------------------------------------------------
// exponent-compatibility consistency check
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompatibilityReport {
    /// measured over-Qhat image constant and its predicted ceiling from
    /// the over-Q constant plus cube-to-halo operator norms
    pub image_measured: f64,
    pub image_predicted: f64,
    /// measured dual-norm constant and its predicted ceiling
    pub dual_measured: f64,
    pub dual_predicted: f64,
    pub holds: bool,
}

/// When `1/p + 1/q <= 1`, the over-Qhat image bound and the dual-norm
/// bound follow from the size bound, the over-Q image bound and the
/// cube-to-halo (Hardy-route) operator norms; this evaluates both sides of
/// that chain numerically (Hölder with q'/p, p'/q >= 1).
pub fn compatibility_check(
    tree: &DyadicTree,
    sys: &AccretiveSystem,
    op: &KernelOperator,
    depth: u32,
) -> Result<CompatibilityReport> {
    if 1.0 / sys.p + 1.0 / sys.q > 1.0 + 1e-12 {
        return Err(Error::Precondition(format!(
            "1/p + 1/q = {} exceeds 1",
            1.0 / sys.p + 1.0 / sys.q
        )));
    }
    let (p, q) = (sys.p, sys.q);
    let (pd, qd) = (sys.p_dual(), sys.q_dual());
    let space = tree.space();

    let mut image_measured: f64 = 0.0;
    let mut image_predicted: f64 = 0.0;
    for cube in tree.cubes() {
        let b1 = sys.values(Side::One, cube.id);
        let b2 = sys.values(Side::Two, cube.id);
        let tb1 = op.apply_sparse(&cube.members, b1);
        let tsb2 = op.apply_adjoint(&sys.full(tree, Side::Two, cube.id));
        let hat = tree.q_hat(cube.id);
        let mut over_hat = 0.0;
        let mut over_q = 0.0;
        for &x in &hat {
            let v = (tb1[x].norm().powf(qd) + tsb2[x].norm().powf(pd)) * space.weight(x);
            over_hat += v;
            if cube.members.binary_search(&x).is_ok() {
                over_q += v;
            }
        }
        image_measured = image_measured.max(over_hat / cube.mass);
        let int_b1_p: f64 = cube
            .members
            .iter()
            .enumerate()
            .map(|(k, &x)| b1[k].norm().powf(p) * space.weight(x))
            .sum();
        let int_b2_q: f64 = cube
            .members
            .iter()
            .enumerate()
            .map(|(k, &x)| b2[k].norm().powf(q) * space.weight(x))
            .sum();
        let c_halo_qd = operator::cube_to_halo_constant(op, tree, cube.id, qd).value;
        let c_halo_pd = operator::cube_to_halo_constant(op, tree, cube.id, pd).value;
        let halo_bound = c_halo_qd.powf(qd) * int_b1_p.powf(qd / p) * cube.mass.powf(1.0 - qd / p)
            + c_halo_pd.powf(pd) * int_b2_q.powf(pd / q) * cube.mass.powf(1.0 - pd / q);
        image_predicted = image_predicted.max((over_q + halo_bound) / cube.mass);
    }

    // dual-norm chain at nu = q with the measured side constant
    let size = verify_size(tree, sys, op);
    let side_bound = size.c_size.max(1.0);
    let dual = verify_dual_norm(tree, sys, op, depth, q, side_bound);
    let mut c_halo_max: f64 = 0.0;
    for cube in tree.cubes() {
        c_halo_max = c_halo_max.max(operator::cube_to_halo_constant(op, tree, cube.id, qd).value);
    }
    let dual_predicted = side_bound.powf(1.0 / q) * side_bound.powf(1.0 / p) * c_halo_max;

    let holds = image_measured <= image_predicted * (1.0 + 1e-9)
        && dual.c_h <= dual_predicted * (1.0 + 1e-9);
    Ok(CompatibilityReport {
        image_measured,
        image_predicted,
        dual_measured: dual.c_h,
        dual_predicted,
        holds,
    })
}
