//! Geometric diagnostics on finite metric measure spaces: boundary-layer
//! and annular decay profiles (plain and relative to an external ball),
//! the monotone geodesic constant, Hardy constants on ball pairs, and the
//! implication chain connecting them.
//!
//! All quantifiers are finite loops; decay exponents are fitted by log-log
//! regression above the resolution floor (twice the minimum point spacing)
//! and reported with residuals, never asserted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, RMat};
use crate::operator::{positive_norm_estimate, NormEstimate};
use crate::space::PointSpace;

/// Fit acceptance policy for decay exponents.
pub const ETA_PASS_THRESHOLD: f64 = 0.2;
pub const RESIDUAL_PASS_THRESHOLD: f64 = 0.15;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFit {
    pub c: f64,
    pub eta: f64,
    pub rms_residual: f64,
    pub passes: bool,
}

fn fit(profile: &[(f64, f64)]) -> Option<DecayFit> {
    // only the unsaturated part of a profile carries decay information
    let usable: Vec<(f64, f64)> =
        profile.iter().cloned().filter(|(_, r)| *r > 0.0 && *r < 1.0).collect();
    let (c, eta, resid) = linalg::loglog_fit(&usable)?;
    Some(DecayFit {
        c,
        eta,
        rms_residual: resid,
        passes: eta >= ETA_PASS_THRESHOLD && resid <= RESIDUAL_PASS_THRESHOLD,
    })
}

/// Minimum positive realized distance (the resolution floor driver).
pub fn min_spacing(space: &PointSpace) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..space.len() {
        for j in i + 1..space.len() {
            let d = space.dist(i, j);
            if d > 0.0 && d < best {
                best = d;
            }
        }
    }
    best
}

/// Log-spaced grid from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 2);
    let ratio = (hi / lo).powf(1.0 / (count - 1) as f64);
    (0..count).map(|k| lo * ratio.powi(k as i32)).collect()
}

// ---------------------------------------------------------------------------
// layer profiles
// ---------------------------------------------------------------------------

/// `B_eps`: inner layer `{x in B : rho(x, B^c) <= eps}` united with the
/// outer layer `{y not in B : rho(y, B) <= eps}`, as a sorted index set.
fn boundary_layer(space: &PointSpace, members: &[usize], eps: f64) -> Vec<usize> {
    let n = space.len();
    let inside = |i: usize| members.binary_search(&i).is_ok();
    let mut layer = Vec::new();
    for i in 0..n {
        let mut nearest_other = f64::INFINITY;
        if inside(i) {
            for j in 0..n {
                if !inside(j) {
                    nearest_other = nearest_other.min(space.dist(i, j));
                }
            }
        } else {
            for &j in members {
                nearest_other = nearest_other.min(space.dist(i, j));
            }
        }
        if nearest_other <= eps {
            layer.push(i);
        }
    }
    layer
}

/// Mass fractions `mu(B_eps) / mu(B)` over the grid, with a fitted decay
/// exponent in `eps / r`.
pub fn layer_profile(
    space: &PointSpace,
    center: usize,
    radius: f64,
    eps_grid: &[f64],
) -> Result<(Vec<(f64, f64)>, Option<DecayFit>)> {
    let ball = space.ball(center, radius)?;
    if ball.members.len() == space.len() {
        return Err(Error::Precondition("ball must have a nonempty exterior".into()));
    }
    let mu_b = space.mass_of(&ball.members);
    let mut profile = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let layer = boundary_layer(space, &ball.members, eps);
        profile.push((eps / radius, space.mass_of(&layer) / mu_b));
    }
    let fit = fit(&profile);
    Ok((profile, fit))
}

/// Relative variant: `mu(B_eps & B(w, R)) / mu(B(w, R))` with the center
/// of the inner ball outside `B(w, R)`.
pub fn relative_layer_profile(
    space: &PointSpace,
    center: usize,
    radius: f64,
    w: usize,
    big_r: f64,
    eps_grid: &[f64],
) -> Result<(Vec<(f64, f64)>, Option<DecayFit>)> {
    let outer = space.ball(w, big_r)?;
    if outer.members.binary_search(&center).is_ok() {
        return Err(Error::Precondition("inner center must lie outside the external ball".into()));
    }
    let ball = space.ball(center, radius)?;
    if ball.members.len() == space.len() {
        return Err(Error::Precondition("ball must have a nonempty exterior".into()));
    }
    let mu_outer = space.mass_of(&outer.members);
    let mut profile = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let layer = boundary_layer(space, &ball.members, eps);
        let mass: f64 = layer
            .iter()
            .filter(|i| outer.members.binary_search(i).is_ok())
            .map(|&i| space.weight(i))
            .sum();
        profile.push((eps / big_r, mass / mu_outer));
    }
    let fit = fit(&profile);
    Ok((profile, fit))
}

// ---------------------------------------------------------------------------
// annular profiles
// ---------------------------------------------------------------------------

/// `mu(B(z,r) \ B(z,r-s)) / mu(B(z,r))` over the `s` grid (fit in s/r).
pub fn annular_profile(
    space: &PointSpace,
    center: usize,
    radius: f64,
    s_grid: &[f64],
) -> Result<(Vec<(f64, f64)>, Option<DecayFit>)> {
    let ball = space.ball(center, radius)?;
    let mu_b = space.mass_of(&ball.members);
    let mut profile = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        if !(s > 0.0 && s <= radius) {
            return Err(Error::Precondition(format!("annulus width {s} out of (0, r]")));
        }
        let inner = space.mu_ball(center, radius - s);
        profile.push((s / radius, (mu_b - inner) / mu_b));
    }
    let fit = fit(&profile);
    Ok((profile, fit))
}

/// Relative annular decay: `mu(C_{r,r-s}(z) & B(w,R)) / mu(B(w,R))` with
/// `z` outside `B(w,R)` (fit in s/R).
pub fn relative_annular_profile(
    space: &PointSpace,
    center: usize,
    radius: f64,
    w: usize,
    big_r: f64,
    s_grid: &[f64],
) -> Result<(Vec<(f64, f64)>, Option<DecayFit>)> {
    let outer = space.ball(w, big_r)?;
    if outer.members.binary_search(&center).is_ok() {
        return Err(Error::Precondition("annulus center must lie outside the external ball".into()));
    }
    let mu_outer = space.mass_of(&outer.members);
    let mut profile = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        if !(s > 0.0 && s <= radius) {
            return Err(Error::Precondition(format!("annulus width {s} out of (0, r]")));
        }
        let mut mass = 0.0;
        for &x in &outer.members {
            let d = space.dist(center, x);
            if d < radius && d >= radius - s {
                mass += space.weight(x);
            }
        }
        profile.push((s / big_r, mass / mu_outer));
    }
    let fit = fit(&profile);
    Ok((profile, fit))
}

// ---------------------------------------------------------------------------
// monotone geodesic constant
// ---------------------------------------------------------------------------

/// Exact computation of
/// `C(u) = max over pairs rho(x,y) >= u of min over z with
/// rho(z,x) <= rho(y,x) - u of rho(z,y) / u`, infinity when some pair has
/// no admissible z.
pub fn monotone_geodesic_constant(space: &PointSpace, u: f64) -> f64 {
    let n = space.len();
    // a 1-ulp slack on the step budget: distances are products, and
    // d - u can land one ulp below an exactly representable step
    let slack = 1e-12 * space.diameter();
    let mut worst: f64 = 0.0;
    for y in 0..n {
        for x in 0..n {
            let d = space.dist(y, x);
            if d < u {
                continue;
            }
            let budget = d - u + slack;
            let mut best = f64::INFINITY;
            for z in 0..n {
                if space.dist(z, x) <= budget {
                    let v = space.dist(z, y);
                    if v < best {
                        best = v;
                    }
                }
            }
            worst = worst.max(best / u);
            if worst.is_infinite() {
                return f64::INFINITY;
            }
        }
    }
    worst
}

/// `C(u)` over a grid plus the overall maximum.
pub fn monotone_geodesic_profile(space: &PointSpace, u_grid: &[f64]) -> (Vec<(f64, f64)>, f64) {
    let profile: Vec<(f64, f64)> =
        u_grid.iter().map(|&u| (u, monotone_geodesic_constant(space, u))).collect();
    let max = profile.iter().map(|p| p.1).fold(0.0, f64::max);
    (profile, max)
}

// ---------------------------------------------------------------------------
// Hardy constants on balls
// ---------------------------------------------------------------------------

/// Best constant of the positive bilinear form with kernel `1/lambda` over
/// `L^nu(B) x L^nu'(2B \ B)` for one ball; errors when `2B \ B` is empty.
pub fn ball_hardy_constant(
    space: &PointSpace,
    center: usize,
    radius: f64,
    nu: f64,
) -> Result<NormEstimate> {
    let inner = space.ball(center, radius)?;
    let outer = space.ball(center, 2.0 * radius)?;
    let shell: Vec<usize> = outer
        .members
        .iter()
        .filter(|m| inner.members.binary_search(m).is_err())
        .cloned()
        .collect();
    if shell.is_empty() {
        return Err(Error::Precondition("2B \\ B is empty".into()));
    }
    let nu_dual = nu / (nu - 1.0);
    let lam = space.lambda_matrix();
    let n = space.len();
    let mut m = RMat::zeros(shell.len(), inner.members.len());
    for (a, &x) in shell.iter().enumerate() {
        for (b, &y) in inner.members.iter().enumerate() {
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

/// Normalized two-region Hardy check for exponents with
/// `1/nu1 + 1/nu2 < 1`: the best constant of
/// `I / mu(B) <= C |f|_{L^nu1(outer, dmu/mu(B))} |g|_{L^nu2(inner, dmu/mu(B))}`,
/// valid for ball/shell pairs and for cube/halo pairs alike.
pub fn normalized_hardy_constant(
    space: &PointSpace,
    inner: &[usize],
    outer: &[usize],
    nu1: f64,
    nu2: f64,
) -> Result<NormEstimate> {
    if 1.0 / nu1 + 1.0 / nu2 >= 1.0 {
        return Err(Error::Precondition("need 1/nu1 + 1/nu2 < 1".into()));
    }
    if inner.iter().any(|i| outer.binary_search(i).is_ok()) {
        return Err(Error::Precondition("regions must be disjoint".into()));
    }
    let mu_b = space.mass_of(inner);
    let lam = space.lambda_matrix();
    let n = space.len();
    let nu2_dual = nu2 / (nu2 - 1.0);
    let scale = mu_b.powf(1.0 / nu1 + 1.0 / nu2 - 1.0);
    let mut m = RMat::zeros(outer.len(), inner.len());
    for (a, &x) in outer.iter().enumerate() {
        for (b, &y) in inner.iter().enumerate() {
            m.set(
                a,
                b,
                space.weight(x).powf(1.0 - 1.0 / nu2)
                    * space.weight(y).powf(1.0 - 1.0 / nu1)
                    * scale
                    / lam[x * n + y],
            );
        }
    }
    Ok(positive_norm_estimate(&m, nu1, nu2_dual))
}

// ---------------------------------------------------------------------------
// implication chain
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImplicationReport {
    /// probe scale and measured constants
    pub geodesic_profile: Vec<(f64, f64)>,
    pub geodesic_max: f64,
    pub geodesic_passes: bool,
    pub relative_annular: Option<DecayFit>,
    pub relative_layer: Option<DecayFit>,
    pub hardy_constants: Vec<f64>,
    pub hardy_max: f64,
    /// which links of the chain are consistent with the measurements
    pub chain_consistent: bool,
    pub violated_link: Option<String>,
}

/// Runs the full chain on one space: monotone geodesic at scales
/// `>= 2 min-spacing`, relative annular decay, relative layer decay, and
/// ball Hardy constants. A finite geodesic constant should come with
/// positive fitted decay exponents and bounded Hardy constants; the
/// converse can fail, and the report says which link broke.
pub fn implication_study(space: &PointSpace, geodesic_pass_bound: f64) -> ImplicationReport {
    let h = min_spacing(space);
    let diam = space.diameter();
    let u_grid = log_grid(2.0 * h, (diam / 4.0).max(2.5 * h), 4);
    let (geodesic_profile, geodesic_max) = monotone_geodesic_profile(space, &u_grid);
    let geodesic_passes = geodesic_max <= geodesic_pass_bound;

    // probe configurations: an inner ball in the middle, an external ball
    // centered at the far end
    let n = space.len();
    let center = n / 2;
    let far = {
        let mut best = 0usize;
        let mut best_d = -1.0;
        for i in 0..n {
            let d = space.dist(center, i);
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        best
    };
    let radius = diam / 4.0;
    let big_r = space.dist(center, far) * 0.9;
    let s_grid = log_grid(2.0 * h, radius * 0.9, 8);
    let relative_annular =
        relative_annular_profile(space, center, radius, far, big_r, &s_grid)
            .ok()
            .and_then(|(_, f)| f);
    let eps_grid = log_grid(2.0 * h, radius * 0.9, 8);
    let relative_layer = relative_layer_profile(space, center, radius, far, big_r, &eps_grid)
        .ok()
        .and_then(|(_, f)| f);

    let mut hardy_constants = Vec::new();
    for scale in [diam / 16.0, diam / 8.0, diam / 4.0] {
        if scale > 2.0 * h {
            if let Ok(est) = ball_hardy_constant(space, center, scale, 2.0) {
                hardy_constants.push(est.value);
            }
        }
    }
    let hardy_max = hardy_constants.iter().cloned().fold(0.0, f64::max);

    // one-way implications: a geodesic pass must cascade downstream
    let mut violated = None;
    if geodesic_passes {
        match &relative_annular {
            Some(f) if f.passes => {}
            _ => violated = Some("geodesic holds but relative annular decay fit fails".to_string()),
        }
        if violated.is_none() {
            match &relative_layer {
                Some(f) if f.passes => {}
                _ => violated = Some("annular decay holds but relative layer fit fails".to_string()),
            }
        }
        if violated.is_none() && !(hardy_max.is_finite() && hardy_max > 0.0) {
            violated = Some("layer decay holds but Hardy constants degenerate".to_string());
        }
    }

    ImplicationReport {
        geodesic_profile,
        geodesic_max,
        geodesic_passes,
        relative_annular,
        relative_layer,
        hardy_constants,
        hardy_max,
        chain_consistent: violated.is_none(),
        violated_link: violated,
    }
}

/// Restriction stability: a subspace X of a parent space X0, measured by
/// the compatibility ratio `kappa = max mu(B_X0) / mu(B_X0 & X)`, has its
/// Hardy constants controlled by `kappa` times the parent's for the same
/// ball family. `embedding[i]` is the parent index of subspace point i.
pub fn restriction_stability(
    sub: &PointSpace,
    parent: &PointSpace,
    embedding: &[usize],
    radii: &[f64],
    nu: f64,
) -> Result<Vec<RestrictionCase>> {
    if embedding.len() != sub.len() {
        return Err(Error::InvalidParameter("embedding length mismatch".into()));
    }
    let mut kappa: f64 = 1.0;
    // compatibility ratio over balls centered at subspace points with
    // realized parent radii
    for (i_sub, &i_par) in embedding.iter().enumerate() {
        let _ = i_sub;
        for &r in radii {
            let full = parent.mu_ball(i_par, r);
            let mut restricted = 0.0;
            for (j_sub, &j_par) in embedding.iter().enumerate() {
                if parent.dist(i_par, j_par) < r {
                    restricted += sub.weight(j_sub);
                }
            }
            if restricted > 0.0 {
                kappa = kappa.max(full / restricted);
            }
        }
    }
    let mut out = Vec::new();
    for (i_sub, &i_par) in embedding.iter().enumerate() {
        if i_sub % (sub.len() / 4).max(1) != 0 {
            continue;
        }
        for &r in radii {
            let c_sub = match ball_hardy_constant(sub, i_sub, r, nu) {
                Ok(e) => e.value,
                Err(_) => continue,
            };
            let c_par = match ball_hardy_constant(parent, i_par, r, nu) {
                Ok(e) => e.value,
                Err(_) => continue,
            };
            out.push(RestrictionCase { center: i_sub, radius: r, c_sub, c_parent: c_par, kappa });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RestrictionCase {
    pub center: usize,
    pub radius: f64,
    pub c_sub: f64,
    pub c_parent: f64,
    pub kappa: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space;

    #[test]
    fn layer_profile_on_uniform_line() {
        let s = space::uniform_line(129, 1.0 / 64.0).unwrap();
        // ball around the midpoint of radius 0.5
        let (profile, fitres) = layer_profile(&s, 64, 0.5, &log_grid(2.0 / 64.0, 0.4, 8)).unwrap();
        assert!(profile.windows(2).all(|w| w[1].1 >= w[0].1), "monotone in eps");
        let f = fitres.unwrap();
        // two eps-segments inside + two outside over a 1-long ball: slope ~ 1
        assert!((f.eta - 1.0).abs() < 0.15, "eta = {}", f.eta);
        // saturation: eps >= r covers everything near the ball
        let (sat, _) = layer_profile(&s, 64, 0.5, &[0.5]).unwrap();
        assert!(sat[0].1 >= 0.9);
    }

    #[test]
    fn annular_profile_on_uniform_line() {
        let s = space::uniform_line(257, 1.0 / 128.0).unwrap();
        let (profile, fitres) =
            annular_profile(&s, 128, 0.5, &log_grid(2.0 / 128.0, 0.45, 8)).unwrap();
        assert!(profile.iter().all(|p| p.1 <= 1.0));
        let f = fitres.unwrap();
        assert!((f.eta - 1.0).abs() < 0.15, "eta = {}", f.eta);
        // s = r: the annulus saturates to the whole ball
        let (sat, _) = annular_profile(&s, 128, 0.5, &[0.5]).unwrap();
        assert!(sat[0].1 <= 1.0 + 1e-15 && sat[0].1 > 0.99);
        // s beyond r is degenerate
        assert!(annular_profile(&s, 128, 0.5, &[0.6]).is_err());
    }

    #[test]
    fn geodesic_constant_on_line_and_gap() {
        let line = space::uniform_line(101, 0.01).unwrap();
        let c = monotone_geodesic_constant(&line, 0.02);
        assert!((c - 1.0).abs() < 1e-12, "C = {c}");
        // removing an interval breaks the walking property
        let gap = space::line_with_gap(&[(0.0, 1.0), (2.0, 3.0)], 0.05).unwrap();
        let cg = monotone_geodesic_constant(&gap, 0.1);
        assert!(cg >= 10.0, "C = {cg}");
    }

    #[test]
    fn geodesic_fails_on_chordal_triangle() {
        let t = space::triangle_edges([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], 0.02, true).unwrap();
        let h = min_spacing(&t);
        // shrinking u blows the constant up at a sharp vertex
        let c_small = monotone_geodesic_constant(&t, 2.5 * h);
        assert!(c_small > 1.5, "C = {c_small}");
        // while the arc-length metric is circle-like and passes
        let ta = space::triangle_edges([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], 0.02, false).unwrap();
        let ca = monotone_geodesic_constant(&ta, 2.5 * min_spacing(&ta));
        assert!(ca <= 1.5, "C = {ca}");
    }

    #[test]
    fn ball_hardy_singleton_shell_closed_form() {
        // 3 points: B = {0,1}, 2B \ B = {2}
        let s = space::uniform_line(3, 1.0).unwrap();
        let est = ball_hardy_constant(&s, 0, 1.5, 2.0).unwrap();
        // single row: value = sqrt(sum_y (w_x^(1/2) w_y^(1/2) / lambda(2,y))^2)
        let lam20 = s.lambda(2, 0).unwrap();
        let lam21 = s.lambda(2, 1).unwrap();
        let expect = ((1.0 / lam20).powi(2) + (1.0 / lam21).powi(2)).sqrt();
        assert!((est.value - expect).abs() < 1e-10, "{} vs {expect}", est.value);
    }

    #[test]
    fn ball_hardy_scale_stability_on_line() {
        // scales small enough that 2B stays interior
        let s = space::uniform_line(513, 1.0 / 128.0).unwrap();
        let mut values = Vec::new();
        for r in [0.125, 0.25, 0.5] {
            values.push(ball_hardy_constant(&s, 256, r, 2.0).unwrap().value);
        }
        for w in values.windows(2) {
            let rel = (w[0] - w[1]).abs() / w[1];
            assert!(rel < 0.10, "{values:?}");
        }
    }

    #[test]
    fn normalized_hardy_constant_cases() {
        let s = space::uniform_line(64, 1.0).unwrap();
        let inner: Vec<usize> = (16..32).collect();
        let outer: Vec<usize> = (32..48).collect();
        let est = normalized_hardy_constant(&s, &inner, &outer, 3.0, 3.0).unwrap();
        assert!(est.value.is_finite() && est.value > 0.0);
        assert!(est.random_lower_bound <= est.value * (1.0 + 1e-9));
        // dual-critical exponents rejected
        assert!(normalized_hardy_constant(&s, &inner, &outer, 2.0, 2.0).is_err());
    }

    #[test]
    fn implication_chain_on_line_and_gap() {
        let line = space::uniform_line(129, 1.0 / 64.0).unwrap();
        let report = implication_study(&line, 1.5);
        assert!(report.geodesic_passes, "{report:?}");
        assert!(report.chain_consistent, "{:?}", report.violated_link);
        let gap = space::line_with_gap(&[(0.0, 1.0), (2.0, 3.0)], 0.05).unwrap();
        let report_gap = implication_study(&gap, 1.5);
        assert!(!report_gap.geodesic_passes);
        // the chain is one-way: a geodesic failure with finite Hardy
        // constants is consistent
        assert!(report_gap.chain_consistent);
        assert!(report_gap.hardy_max.is_finite() && report_gap.hardy_max > 0.0);
    }

    #[test]
    fn restriction_stability_line_with_gap_in_line() {
        // X = [0,1] u [2,3] sampled at 0.05 inside X0 = [0,3]
        let h = 0.05;
        let parent = space::uniform_line(61, h).unwrap();
        let sub = space::line_with_gap(&[(0.0, 1.0), (2.0, 3.0)], h).unwrap();
        let embedding: Vec<usize> = (0..sub.len())
            .map(|i| {
                let x = sub.coords().unwrap()[i][0];
                (x / h).round() as usize
            })
            .collect();
        let cases = restriction_stability(&sub, &parent, &embedding, &[0.3, 0.6], 2.0).unwrap();
        assert!(!cases.is_empty());
        for case in &cases {
            assert!(
                case.c_sub <= case.kappa * case.c_parent * (1.0 + 1e-9),
                "{case:?}"
            );
        }
    }
}
