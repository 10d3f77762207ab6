//! Dyadic cube hierarchies on a finite weighted metric space.
//!
//! The construction is a deterministic top-down greedy net: at generation
//! `j`, candidate centers are picked in ascending point-index order from
//! each parent cube's members, subject to pairwise (normalized) separation
//! `>= delta^j`; every member then joins the nearest chosen center, ties
//! going to the lowest center index. Children only ever inherit their
//! parent's points, so nesting holds by construction, and all the classical
//! cube properties (partition per generation, diameter bound, inner ball,
//! bounded child/neighbor counts, small boundary layers) are measured and
//! recorded rather than assumed.
//!
//! Distances are normalized so that the space has diameter 1 at build time;
//! the normalization scale is recorded and cube lengths are `l(Q) = delta^j`
//! in normalized units.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::space::PointSpace;

pub type CubeId = usize;

#[derive(Debug, Clone)]
pub struct DyadicCube {
    pub id: CubeId,
    pub generation: u32,
    /// center point index z_Q
    pub center: usize,
    /// member point indices, sorted
    pub members: Vec<usize>,
    pub parent: Option<CubeId>,
    pub children: Vec<CubeId>,
    pub mass: f64,
    /// diameter of the member set in raw distance units
    pub diam_raw: f64,
}

impl DyadicCube {
    pub fn is_singleton(&self) -> bool {
        self.members.len() == 1
    }
}

/// Constants measured on the built tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeConstants {
    /// max of diam(Q) / l(Q) over all cubes (normalized units)
    pub c1: f64,
    /// largest a with B(z_Q, a * l(Q)) inside Q for every cube
    pub a0: f64,
    pub max_children: usize,
    pub max_neighbors: usize,
    /// sup over parent/child pairs of mu(parent) / mu(child)
    pub c_x: f64,
    /// max over cubes of mu(Q_hat) / mu(Q)
    pub hat_mass_ratio: f64,
}

#[derive(Debug)]
pub struct DyadicTree {
    space: Arc<PointSpace>,
    pub delta: f64,
    /// raw diameter; normalized distance = raw / scale
    pub scale: f64,
    cubes: Vec<DyadicCube>,
    generations: Vec<Vec<CubeId>>,
    neighbors: Vec<Vec<CubeId>>,
    /// per generation: point index -> cube id of that generation
    point_cube: Vec<Vec<CubeId>>,
    pub constants: TreeConstants,
}

/// Builds the cube hierarchy. Generation 0 is the whole space; refinement
/// continues until every cube is a single point or `max_depth` is reached.
pub fn build_tree(space: Arc<PointSpace>, delta: f64, max_depth: u32) -> Result<DyadicTree> {
    if space.is_empty() {
        return Err(Error::EmptySpace);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must be in (0,1), got {delta}")));
    }
    let n = space.len();
    let scale = if space.diameter() > 0.0 { space.diameter() } else { 1.0 };
    let ndist = |i: usize, j: usize| space.dist(i, j) / scale;

    let mut cubes: Vec<DyadicCube> = Vec::new();
    let mut generations: Vec<Vec<CubeId>> = Vec::new();
    let mut point_cube: Vec<Vec<CubeId>> = Vec::new();

    let root_members: Vec<usize> = (0..n).collect();
    let root_diam = space.diameter();
    cubes.push(DyadicCube {
        id: 0,
        generation: 0,
        center: 0,
        members: root_members,
        parent: None,
        children: Vec::new(),
        mass: space.total_mass(),
        diam_raw: root_diam,
    });
    generations.push(vec![0]);
    point_cube.push(vec![0; n]);

    let mut gen = 0u32;
    while gen < max_depth {
        let parents = generations[gen as usize].clone();
        if parents.iter().all(|&p| cubes[p].is_singleton()) {
            break;
        }
        gen += 1;
        let sep = delta.powi(gen as i32);
        let mut level: Vec<CubeId> = Vec::new();
        let mut pc = vec![usize::MAX; n];
        for &pid in &parents {
            let members = cubes[pid].members.clone();
            if members.len() == 1 {
                // atom chain: a singleton has exactly one child, itself
                let id = cubes.len();
                cubes.push(DyadicCube {
                    id,
                    generation: gen,
                    center: members[0],
                    members: members.clone(),
                    parent: Some(pid),
                    children: Vec::new(),
                    mass: cubes[pid].mass,
                    diam_raw: 0.0,
                });
                cubes[pid].children.push(id);
                pc[members[0]] = id;
                level.push(id);
                continue;
            }
            let mut centers: Vec<usize> = Vec::new();
            for &m in &members {
                if centers.iter().all(|&c| ndist(m, c) >= sep) {
                    centers.push(m);
                }
            }
            // assign members to the nearest center, ties to the lowest index
            let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); centers.len()];
            for &m in &members {
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for (k, &c) in centers.iter().enumerate() {
                    let d = space.dist(m, c);
                    if d < best_d {
                        best_d = d;
                        best = k;
                    }
                }
                buckets[best].push(m);
            }
            for (k, bucket) in buckets.into_iter().enumerate() {
                debug_assert!(!bucket.is_empty(), "every center keeps at least itself");
                let id = cubes.len();
                let mass = space.mass_of(&bucket);
                let mut diam: f64 = 0.0;
                for a in 0..bucket.len() {
                    for b in a + 1..bucket.len() {
                        diam = diam.max(space.dist(bucket[a], bucket[b]));
                    }
                }
                for &m in &bucket {
                    pc[m] = id;
                }
                cubes.push(DyadicCube {
                    id,
                    generation: gen,
                    center: centers[k],
                    members: bucket,
                    parent: Some(pid),
                    children: Vec::new(),
                    mass,
                    diam_raw: diam,
                });
                cubes[pid].children.push(id);
                level.push(id);
            }
        }
        generations.push(level);
        point_cube.push(pc);
    }

    // neighbor lists per generation: same-generation cubes at set distance < l(Q)
    let mut neighbors: Vec<Vec<CubeId>> = vec![Vec::new(); cubes.len()];
    for (j, level) in generations.iter().enumerate() {
        let threshold = delta.powi(j as i32) * scale;
        for a in 0..level.len() {
            for b in a + 1..level.len() {
                let (qa, qb) = (level[a], level[b]);
                let mut mind = f64::INFINITY;
                'outer: for &x in &cubes[qa].members {
                    for &y in &cubes[qb].members {
                        let d = space.dist(x, y);
                        if d < mind {
                            mind = d;
                            if mind == 0.0 {
                                break 'outer;
                            }
                        }
                    }
                }
                if mind < threshold {
                    neighbors[qa].push(qb);
                    neighbors[qb].push(qa);
                }
            }
        }
    }
    for list in neighbors.iter_mut() {
        list.sort_unstable();
    }

    // measured constants
    let mut c1: f64 = 0.0;
    let mut a0: f64 = f64::INFINITY;
    let mut max_children = 0usize;
    let mut max_neighbors = 0usize;
    let mut c_x: f64 = 1.0;
    let mut hat_ratio: f64 = 1.0;
    for q in &cubes {
        let l = delta.powi(q.generation as i32);
        c1 = c1.max(q.diam_raw / scale / l);
        if q.members.len() < n {
            let mut nearest_out = f64::INFINITY;
            let member = |y: usize| q.members.binary_search(&y).is_ok();
            for y in 0..n {
                if !member(y) {
                    nearest_out = nearest_out.min(space.dist(q.center, y));
                }
            }
            a0 = a0.min(nearest_out / scale / l);
        }
        max_children = max_children.max(q.children.len());
        max_neighbors = max_neighbors.max(neighbors[q.id].len());
        for &c in &q.children {
            c_x = c_x.max(q.mass / cubes[c].mass);
        }
        let mut hat_mass = q.mass;
        for &nb in &neighbors[q.id] {
            hat_mass += cubes[nb].mass;
        }
        hat_ratio = hat_ratio.max(hat_mass / q.mass);
    }
    if !a0.is_finite() {
        a0 = 1.0;
    }

    Ok(DyadicTree {
        space,
        delta,
        scale,
        cubes,
        generations,
        neighbors,
        point_cube,
        constants: TreeConstants { c1, a0, max_children, max_neighbors, c_x, hat_mass_ratio: hat_ratio },
    })
}

impl DyadicTree {
    pub fn space(&self) -> &PointSpace {
        &self.space
    }

    pub fn space_arc(&self) -> Arc<PointSpace> {
        Arc::clone(&self.space)
    }

    pub fn cube(&self, id: CubeId) -> &DyadicCube {
        &self.cubes[id]
    }

    pub fn cubes(&self) -> &[DyadicCube] {
        &self.cubes
    }

    pub fn root(&self) -> &DyadicCube {
        &self.cubes[0]
    }

    pub fn max_generation(&self) -> u32 {
        (self.generations.len() - 1) as u32
    }

    pub fn generation(&self, j: u32) -> &[CubeId] {
        &self.generations[j as usize]
    }

    /// normalized cube length l(Q) = delta^generation
    pub fn length(&self, id: CubeId) -> f64 {
        self.delta.powi(self.cubes[id].generation as i32)
    }

    pub fn neighbors(&self, id: CubeId) -> &[CubeId] {
        &self.neighbors[id]
    }

    /// Q together with all its neighbors, as a sorted point set.
    pub fn q_hat(&self, id: CubeId) -> Vec<usize> {
        let mut pts = self.cubes[id].members.clone();
        for &nb in &self.neighbors[id] {
            pts.extend_from_slice(&self.cubes[nb].members);
        }
        pts.sort_unstable();
        pts.dedup();
        pts
    }

    /// cube of generation `j` containing point `p`
    pub fn cube_of_point(&self, j: u32, p: usize) -> CubeId {
        self.point_cube[j as usize][p]
    }

    /// all cubes of the subtree rooted at `id` (including `id`), by id order
    pub fn subtree(&self, id: CubeId) -> Vec<CubeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(q) = stack.pop() {
            out.push(q);
            stack.extend_from_slice(&self.cubes[q].children);
        }
        out.sort_unstable();
        out
    }

    pub fn is_descendant_of(&self, q: CubeId, anc: CubeId) -> bool {
        let mut cur = q;
        loop {
            if cur == anc {
                return true;
            }
            match self.cubes[cur].parent {
                Some(p) => cur = p,
                None => return false,
            }
        }
    }

    /// whether the deepest generation consists of singleton cubes only
    pub fn fully_resolved(&self) -> bool {
        self.generations
            .last()
            .map(|level| level.iter().all(|&q| self.cubes[q].is_singleton()))
            .unwrap_or(false)
    }

    /// normalized set distance between two cubes (min over member pairs)
    pub fn cube_dist(&self, a: CubeId, b: CubeId) -> f64 {
        let mut mind = f64::INFINITY;
        for &x in &self.cubes[a].members {
            for &y in &self.cubes[b].members {
                mind = mind.min(self.space.dist(x, y));
            }
        }
        mind / self.scale
    }

    /// weighted mean of `f` over the cube
    pub fn mean(&self, f: &[C64], id: CubeId) -> C64 {
        let q = &self.cubes[id];
        let mut acc = C64::new(0.0, 0.0);
        for &i in &q.members {
            acc += f[i] * self.space.weight(i);
        }
        acc / q.mass
    }

    /// weighted mean of |f|^p over the cube
    pub fn mean_abs_pow(&self, f: &[C64], id: CubeId, p: f64) -> f64 {
        let q = &self.cubes[id];
        let mut acc = 0.0;
        for &i in &q.members {
            acc += f[i].norm().powf(p) * self.space.weight(i);
        }
        acc / q.mass
    }

    /// raw distance from a point to the complement of the cube
    fn dist_to_complement(&self, id: CubeId, x: usize) -> f64 {
        let q = &self.cubes[id];
        let mut mind = f64::INFINITY;
        for y in 0..self.space.len() {
            if q.members.binary_search(&y).is_err() {
                mind = mind.min(self.space.dist(x, y));
            }
        }
        mind
    }

    /// Boundary-layer profile of a cube: for each `t` in the grid, the mass
    /// fraction of `{x in Q : rho(x, X \ Q) <= t * l(Q)}`. Fails when Q = X.
    pub fn small_boundary_profile(&self, id: CubeId, t_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
        let q = &self.cubes[id];
        if q.members.len() == self.space.len() {
            return Err(Error::Precondition("small boundary profile needs a nonempty exterior".into()));
        }
        let l_raw = self.length(id) * self.scale;
        let dists: Vec<f64> = q.members.iter().map(|&x| self.dist_to_complement(id, x)).collect();
        let mut out = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            let mut layer = 0.0;
            for (k, &x) in q.members.iter().enumerate() {
                if dists[k] <= t * l_raw {
                    layer += self.space.weight(x);
                }
            }
            out.push((t, layer / q.mass));
        }
        Ok(out)
    }

    /// Pooled boundary-layer fit over cubes of the given generations;
    /// returns fitted `(c2, eta, rms_residual)`. Only cubes with at least
    /// eight points contribute (smaller ones have step-like profiles), and
    /// per profile only the rising part is kept: unsaturated values with
    /// plateau repetitions collapsed to their first grid point.
    pub fn small_boundary_eta(&self, gens: &[u32], t_grid: &[f64]) -> Option<(f64, f64, f64)> {
        let mut pool: Vec<(f64, f64)> = Vec::new();
        for &j in gens {
            if j as usize >= self.generations.len() {
                continue;
            }
            for &q in &self.generations[j as usize] {
                if self.cubes[q].members.len() == self.space.len()
                    || self.cubes[q].members.len() < 8
                {
                    continue;
                }
                if let Ok(profile) = self.small_boundary_profile(q, t_grid) {
                    let mut last = f64::NAN;
                    for (t, r) in profile {
                        if r > 0.0 && r < 1.0 && r != last {
                            pool.push((t, r));
                            last = r;
                        }
                    }
                }
            }
        }
        crate::linalg::loglog_fit(&pool)
    }

    pub fn to_file(&self) -> TreeFile {
        TreeFile {
            delta: self.delta,
            scale: self.scale,
            constants: self.constants.clone(),
            cubes: self
                .cubes
                .iter()
                .map(|q| CubeExport {
                    id: q.id,
                    generation: q.generation,
                    center: q.center,
                    members: q.members.clone(),
                    parent: q.parent,
                    children: q.children.clone(),
                    neighbors: self.neighbors[q.id].clone(),
                    length: self.length(q.id),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CubeExport {
    pub id: CubeId,
    pub generation: u32,
    pub center: usize,
    pub members: Vec<usize>,
    pub parent: Option<CubeId>,
    pub children: Vec<CubeId>,
    pub neighbors: Vec<CubeId>,
    pub length: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeFile {
    pub delta: f64,
    pub scale: f64,
    pub constants: TreeConstants,
    pub cubes: Vec<CubeExport>,
}

/// Exhaustive validity sweep of the cube axioms on a built tree; returns a
/// human-readable defect description on failure.
pub fn check_tree_invariants(tree: &DyadicTree) -> std::result::Result<(), String> {
    let space = tree.space();
    let n = space.len();
    let total = space.total_mass();
    for j in 0..=tree.max_generation() {
        let mut seen = vec![false; n];
        let mut mass = 0.0;
        for &q in tree.generation(j) {
            let cube = tree.cube(q);
            if cube.generation != j {
                return Err(format!("cube {q} listed at wrong generation"));
            }
            for &m in &cube.members {
                if seen[m] {
                    return Err(format!("point {m} covered twice at generation {j}"));
                }
                seen[m] = true;
            }
            mass += cube.mass;
            if cube.members.binary_search(&cube.center).is_err() {
                return Err(format!("cube {q}: center not a member"));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(format!("generation {j} does not cover the space"));
        }
        if (mass - total).abs() > 1e-12 * total.max(1.0) {
            return Err(format!("generation {j} mass mismatch"));
        }
    }
    for cube in tree.cubes() {
        if let Some(p) = cube.parent {
            let parent = tree.cube(p);
            for &m in &cube.members {
                if parent.members.binary_search(&m).is_err() {
                    return Err(format!("cube {} not nested in its parent", cube.id));
                }
            }
        }
        if cube.generation < tree.max_generation() {
            let child_count: usize = cube.children.iter().map(|&c| tree.cube(c).members.len()).sum();
            if child_count != cube.members.len() {
                return Err(format!("children of cube {} do not partition it", cube.id));
            }
            if cube.is_singleton() && cube.children.len() != 1 {
                return Err(format!("singleton cube {} must have exactly one child", cube.id));
            }
        }
        // diameter bound and inner ball with the recorded constants
        let l = tree.length(cube.id);
        if cube.diam_raw / tree.scale > tree.constants.c1 * l + 1e-12 {
            return Err(format!("cube {} violates the recorded diameter bound", cube.id));
        }
    }
    if !(tree.constants.a0 > 0.0) {
        return Err("recorded inner-ball constant is not positive".into());
    }
    // inner ball: B(z_Q, a0 * l(Q)) inside Q for every cube
    for cube in tree.cubes() {
        if cube.members.len() == n {
            continue;
        }
        let r = tree.constants.a0 * tree.length(cube.id) * tree.scale;
        for y in 0..n {
            if space.dist(cube.center, y) < r - 1e-12 * tree.scale
                && cube.members.binary_search(&y).is_err()
            {
                return Err(format!("inner ball of cube {} leaks outside", cube.id));
            }
        }
    }
    // neighbor symmetry
    for cube in tree.cubes() {
        for &nb in tree.neighbors(cube.id) {
            if !tree.neighbors(nb).contains(&cube.id) {
                return Err(format!("neighbor relation not symmetric at {} / {nb}", cube.id));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space;

    fn line8() -> DyadicTree {
        build_tree(Arc::new(space::uniform_line(8, 1.0).unwrap()), 0.5, 32).unwrap()
    }

    #[test]
    fn greedy_net_generation_one_on_line8() {
        let tree = line8();
        let gen1: Vec<Vec<usize>> =
            tree.generation(1).iter().map(|&q| tree.cube(q).members.clone()).collect();
        assert_eq!(gen1, vec![vec![0, 1, 2], vec![3, 4, 5, 6, 7]]);
    }

    #[test]
    fn single_point_atom_chain() {
        let s = Arc::new(space::PointSpace::from_points(vec![vec![0.0]], vec![2.0]).unwrap());
        let tree = build_tree(s, 0.5, 5).unwrap();
        assert_eq!(tree.max_generation(), 0);
        assert!(tree.fully_resolved());
    }

    #[test]
    fn invariants_on_grid() {
        let s = Arc::new(space::uniform_grid_2d(8, 8, 1.0).unwrap());
        let tree = build_tree(s, 0.5, 32).unwrap();
        check_tree_invariants(&tree).unwrap();
        assert!(tree.fully_resolved());
    }

    #[test]
    fn gen1_cubes_of_line8_are_neighbors() {
        let tree = line8();
        let gen1 = tree.generation(1);
        assert_eq!(gen1.len(), 2);
        // raw set distance 1 < l = 0.5 * 7 = 3.5 raw
        assert!(tree.neighbors(gen1[0]).contains(&gen1[1]));
        // root's hat is the whole space
        assert_eq!(tree.q_hat(0).len(), 8);
    }

    #[test]
    fn distant_cubes_are_not_neighbors() {
        let s = Arc::new(space::uniform_line(64, 1.0).unwrap());
        let tree = build_tree(s, 0.5, 32).unwrap();
        let deep = tree.max_generation();
        let a = tree.cube_of_point(deep, 0);
        let b = tree.cube_of_point(deep, 63);
        assert!(!tree.neighbors(a).contains(&b));
        assert!(tree.cube_dist(a, b) >= tree.length(a));
    }

    #[test]
    fn small_boundary_profile_example() {
        let tree = line8();
        let q = tree.generation(1)[0]; // {0,1,2}, l(Q) raw = 3.5
        // t such that t * l(Q)_raw = 1.0 -> only the point 2 is that close to the complement
        let t = 1.0 / 3.5;
        let profile = tree.small_boundary_profile(q, &[t, 10.0]).unwrap();
        assert!((profile[0].1 - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(profile[1].1, 1.0); // saturated once t l(Q) >= diam(Q)
        // whole space has no exterior
        assert!(tree.small_boundary_profile(0, &[0.5]).is_err());
    }

    #[test]
    fn cx_bounded_on_uniform_lines() {
        // The greedy-net construction leaves the occasional singleton child
        // of a 5-point cube, so C_X lands between 5 and 6 on uniform lines;
        // what matters downstream is that the recorded value is finite and
        // stable under refinement.
        let tree = line8();
        assert!((tree.constants.c_x - 5.0).abs() < 1e-12, "C_X = {}", tree.constants.c_x);
        let s = Arc::new(space::uniform_line(64, 1.0).unwrap());
        let t64 = build_tree(s, 0.5, 32).unwrap();
        assert!(t64.constants.c_x <= 6.0, "C_X = {}", t64.constants.c_x);
    }

    #[test]
    fn child_and_neighbor_counts_stable_under_refinement() {
        let t1 = build_tree(Arc::new(space::uniform_line(32, 1.0).unwrap()), 0.5, 32).unwrap();
        let t2 = build_tree(Arc::new(space::uniform_line(64, 0.5).unwrap()), 0.5, 32).unwrap();
        assert!(t2.constants.max_children <= t1.constants.max_children + 1);
        assert!(t2.constants.max_neighbors <= t1.constants.max_neighbors + 1);
    }

    #[test]
    fn fitted_boundary_exponent_positive_on_grid() {
        let s = Arc::new(space::uniform_grid_2d(16, 16, 1.0).unwrap());
        let tree = build_tree(s, 0.5, 32).unwrap();
        let grid: Vec<f64> = (0..10).map(|k| 0.05 * 1.6f64.powi(k)).collect();
        let (_, eta, _) = tree.small_boundary_eta(&[2, 3], &grid).unwrap();
        assert!(eta > 0.0, "eta = {eta}");
    }
}
