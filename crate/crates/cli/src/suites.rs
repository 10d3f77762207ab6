//! Per-module verification suites. Each suite measures its constants,
//! records them with their defining-relation tags, writes any artifact
//! files, and reports pass/fail on the hard (exact-identity) invariants.

use std::path::Path;

use serde_json::json;

use czkit_core::accretive;
use czkit_core::bcr::{self, BcrRun, TermLabel, DECAY_CLASS_TAGS};
use czkit_core::dyadic::check_tree_invariants;
use czkit_core::geometry;
use czkit_core::haar::{self, AdaptedHaarSystem};
use czkit_core::linalg;
use czkit_core::operator::{self, KernelSpec};
use czkit_core::stopping;
use czkit_core::C64;

use crate::pipeline::Context;
use crate::report::{fmt_f64, write_csv, Report, SuiteOutcome};

pub fn space_suite(ctx: &Context, report: &mut Report, out: &Path) -> anyhow::Result<SuiteOutcome> {
    let space = &ctx.space;
    let mut failures = Vec::new();
    if space.len() <= 512 {
        if let Err(e) = space.check_metric_axioms() {
            failures.push(format!("metric axioms: {e}"));
        }
    }
    let c_d = space.doubling_constant();
    report.constant("2.0", "doubling_constant", c_d);
    // lambda sanity: positivity and quasi-symmetry within C_D^2
    let mut lambda_sym: f64 = 0.0;
    let lam = space.lambda_matrix();
    let n = space.len();
    for x in 0..n {
        for y in 0..n {
            if x != y {
                lambda_sym = lambda_sym.max(lam[x * n + y] / lam[y * n + x]);
            }
        }
    }
    if lambda_sym > c_d * c_d * (1.0 + 1e-9) {
        failures.push(format!("lambda quasi-symmetry {lambda_sym} exceeds C_D^2"));
    }
    report.constant("2.0", "lambda_symmetry_ratio", lambda_sym);
    let text = serde_json::to_string_pretty(&space.to_file())?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("space.json"), text + "\n")?;
    let detail = json!({
        "points": space.len(),
        "diameter": space.diameter(),
        "total_mass": space.total_mass(),
        "doubling_constant": c_d,
    });
    Ok(if failures.is_empty() { SuiteOutcome::pass(detail) } else { SuiteOutcome::fail(detail, failures) })
}

pub fn tree_suite(ctx: &Context, report: &mut Report, out: &Path) -> anyhow::Result<SuiteOutcome> {
    let tree = &ctx.tree;
    let mut failures = Vec::new();
    if let Err(e) = check_tree_invariants(tree) {
        failures.push(e);
    }
    let c = &tree.constants;
    report.constant("2.1(4)", "diameter_bound_c1", c.c1);
    report.constant("2.1(5)", "inner_ball_a0", c.a0);
    report.constant("5.1", "child_mass_ratio_cx", c.c_x);
    report.constant("2.1", "max_children", c.max_children as f64);
    report.constant("2.1", "max_neighbors", c.max_neighbors as f64);
    report.constant("2.1", "hat_mass_ratio", c.hat_mass_ratio);
    if !(c.a0 > 0.0) {
        failures.push("inner-ball constant not positive".into());
    }

    // pooled small-boundary fit over mid generations
    let grid: Vec<f64> = (0..ctx.config.geometry.grid_points)
        .map(|k| 0.05 * 1.8f64.powi(k as i32))
        .collect();
    let gens: Vec<u32> = (2..=tree.max_generation().min(4)).collect();
    let fit = tree.small_boundary_eta(&gens, &grid);
    if let Some((c2, eta, resid)) = fit {
        report.constant("2.1(6)", "boundary_layer_c2", c2);
        report.constant("2.1(6)", "boundary_layer_eta", eta);
        report.constant("2.1(6)", "boundary_layer_fit_residual", resid);
        // per-cube profiles for one representative cube
        if let Some(&q) = gens.first().and_then(|&g| tree.generation(g).first()) {
            if let Ok(profile) = tree.small_boundary_profile(q, &grid) {
                let rows: Vec<Vec<String>> =
                    profile.iter().map(|(t, r)| vec![fmt_f64(*t), fmt_f64(*r)]).collect();
                write_csv(&out.join("small_boundary.csv"), &["t", "mass_fraction"], &rows)?;
            }
        }
    }
    let text = serde_json::to_string_pretty(&tree.to_file())?;
    std::fs::write(out.join("tree.json"), text + "\n")?;
    let detail = json!({
        "generations": tree.max_generation() + 1,
        "cubes": tree.cubes().len(),
        "fully_resolved": tree.fully_resolved(),
        "constants": c,
    });
    Ok(if failures.is_empty() { SuiteOutcome::pass(detail) } else { SuiteOutcome::fail(detail, failures) })
}

pub fn operator_suite(ctx: &Context, report: &mut Report, out: &Path) -> anyhow::Result<SuiteOutcome> {
    let (tree, op) = (&ctx.tree, &ctx.op);
    let mut failures = Vec::new();
    let estimates = operator::check_standard_estimates(op, tree, 10_000);
    report.constant("2.1k", "kernel_size_ratio", estimates.size_ratio_max);
    report.constant("2.2", "kernel_holder_ratio", estimates.holder_ratio_max);
    report.constant("2.5", "cube_decay_ratio", estimates.cube_decay_ratio_max);
    let l2 = op.l2_norm();
    report.constant("2.3", "operator_l2_norm", l2);

    if matches!(ctx.config.kernel, KernelSpec::Cauchy1d | KernelSpec::RieszLike2d) {
        // antisymmetry: <f, Tf> = 0 for real f
        let (f, _) = ctx.probe_pair(1);
        let v = op.pairing(&f, &f).norm();
        let scale = linalg::l2_norm(&f, ctx.space.weights()).powi(2) * l2.max(1.0);
        report.constant("2.3", "antisymmetry_residual", v / scale.max(1e-300));
        if v > 1e-12 * scale {
            failures.push(format!("antisymmetric kernel quadratic form residual {v}"));
        }
    }

    // dyadic Hardy constant on the two top-level cubes
    let gen1 = tree.generation(1.min(tree.max_generation()));
    if gen1.len() >= 2 {
        let a = &tree.cube(gen1[0]).members;
        let b = &tree.cube(gen1[1]).members;
        if let Ok(est) = operator::hardy_constant(&ctx.space, a, b, 2.0) {
            report.constant("2.6", "dyadic_hardy_constant_nu2", est.value);
        }
    }
    // cube-to-halo constant for a mid-tree cube
    let mid_gen = 2.min(tree.max_generation());
    if let Some(&q) = tree.generation(mid_gen).first() {
        let est = operator::cube_to_halo_constant(op, tree, q, 2.0);
        report.constant("2.8", "cube_to_halo_constant_nu2", est.value);
    }
    // tail decay on a central ball
    let center = ctx.space.len() / 2;
    let radius = ctx.space.diameter() / 8.0;
    if radius > 0.0 {
        if let Ok(ball) = ctx.space.ball(center, radius) {
            let mut f = vec![C64::new(0.0, 0.0); ctx.space.len()];
            for &m in &ball.members {
                f[m] = C64::new(1.0, 0.0);
            }
            if let Ok(ratio) = operator::tail_decay_check(op, center, radius, &f, 2.0, 2.0, 1.0) {
                report.constant("4.1", "tail_decay_ratio", ratio);
            }
        }
    }

    // dense matrix export
    let m = op.weighted_matrix();
    let rows: Vec<Vec<String>> = (0..m.rows)
        .map(|i| {
            (0..m.cols)
                .flat_map(|j| {
                    let v = m.get(i, j);
                    [fmt_f64(v.re), fmt_f64(v.im)]
                })
                .collect()
        })
        .collect();
    let header: Vec<String> = (0..m.cols).flat_map(|j| [format!("re{j}"), format!("im{j}")]).collect();
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    write_csv(&out.join("operator.csv"), &header_refs, &rows)?;

    let detail = json!({
        "kernel": ctx.config.kernel.name(),
        "size_ratio": estimates.size_ratio_max,
        "holder_ratio": estimates.holder_ratio_max,
        "holder_samples": estimates.holder_samples,
        "cube_decay_pairs": estimates.cube_decay_pairs,
        "l2_norm": l2,
    });
    Ok(if failures.is_empty() { SuiteOutcome::pass(detail) } else { SuiteOutcome::fail(detail, failures) })
}

pub fn wavelets_suite(ctx: &Context, report: &mut Report, out: &Path) -> anyhow::Result<SuiteOutcome> {
    let tree = &ctx.tree;
    let mut failures = Vec::new();
    let (probe, _) = ctx.probe_pair(2);
    let mut worst_meanzero: f64 = 0.0;
    let mut worst_biorth: f64 = 0.0;
    let mut worst_recon: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    let mut frame_lo = f64::INFINITY;
    let mut frame_hi: f64 = 0.0;
    let mut dump = Vec::new();
    for (decomp, label) in [(&ctx.d1, "side1"), (&ctx.d2, "side2")] {
        let sys = AdaptedHaarSystem::build(tree, &decomp.b, &decomp.spa, decomp.config.delta_stop)?;
        for wv in sys.entries() {
            let check = haar::verify_cube_wavelets(tree, &sys, wv.cube, &probe)?;
            worst_meanzero = worst_meanzero.max(check.mean_zero_residual);
            worst_biorth = worst_biorth.max(check.biorthogonality_residual);
            worst_recon = worst_recon.max(check.reconstruction_residual);
            worst_norm = worst_norm.max(check.norm_bound);
            frame_lo = frame_lo.min(check.frame_bounds.0);
            frame_hi = frame_hi.max(check.frame_bounds.1);
            dump.push(json!({
                "side": label,
                "cube": wv.cube,
                "children": wv.children,
                "phi": complex_tables(&wv.phi),
                "phi_tilde": complex_tables(&wv.phi_tilde),
                "c_q": [wv.c_q.re, wv.c_q.im],
                "accretivity": wv.accretivity,
            }));
        }
    }
    report.constant("5.1p2", "wavelet_mean_zero_residual", worst_meanzero);
    report.constant("5.1p4", "wavelet_biorthogonality_residual", worst_biorth);
    report.constant("5.1p5", "wavelet_reconstruction_residual", worst_recon);
    report.constant("5.1p3", "wavelet_norm_bound", worst_norm);
    report.constant("5.1p6", "frame_lower", if frame_lo.is_finite() { frame_lo } else { 0.0 });
    report.constant("5.1p6", "frame_upper", frame_hi);
    if worst_meanzero > 1e-9 {
        failures.push(format!("mean-zero residual {worst_meanzero}"));
    }
    if worst_biorth > 1e-9 {
        failures.push(format!("biorthogonality residual {worst_biorth}"));
    }
    if worst_recon > 1e-9 {
        failures.push(format!("reconstruction residual {worst_recon}"));
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(
        out.join("wavelets.json"),
        serde_json::to_string_pretty(&serde_json::Value::Array(dump))? + "\n",
    )?;
    let detail = json!({
        "mean_zero": worst_meanzero,
        "biorthogonality": worst_biorth,
        "reconstruction": worst_recon,
        "frame": [frame_lo, frame_hi],
    });
    Ok(if failures.is_empty() { SuiteOutcome::pass(detail) } else { SuiteOutcome::fail(detail, failures) })
}

fn complex_tables(tables: &[Vec<C64>]) -> serde_json::Value {
    serde_json::Value::Array(
        tables
            .iter()
            .map(|t| {
                serde_json::Value::Array(
                    t.iter().map(|v| json!([v.re, v.im])).collect(),
                )
            })
            .collect(),
    )
}

pub fn accretive_suite(ctx: &Context, report: &mut Report) -> anyhow::Result<SuiteOutcome> {
    let (tree, op, sys) = (&ctx.tree, &ctx.op, &ctx.sys);
    let mut failures = Vec::new();
    let defect = sys.normalization_defect(tree);
    report.constant("3.1", "normalization_defect", defect);
    if defect > 1e-12 {
        failures.push(format!("normalization defect {defect}"));
    }
    let size = accretive::verify_size(tree, sys, op);
    report.constant("3.2", "size_constant", size.c_size);
    report.constant("3.3", "image_constant_hat", size.c_image_hat);
    report.constant("3.7", "image_constant", size.c_image);
    let side_bound = size.c_size.max(ctx.c_stop);
    let depth = ctx.config.bcr.depth;
    let dual = accretive::verify_dual_norm(tree, sys, op, depth, sys.q, side_bound);
    report.constant("3.4", "dual_norm_constant", dual.c_h);
    let wbp = accretive::verify_wbp(tree, sys, op, depth, side_bound);
    report.constant("3.5", "weak_boundedness_constant", wbp.c_wbp);
    report.constant("3.6", "neighbor_boundedness_constant", wbp.c_neighbor);
    let compat = if 1.0 / sys.p + 1.0 / sys.q <= 1.0 + 1e-12 {
        let r = accretive::compatibility_check(tree, sys, op, depth)?;
        if !r.holds {
            failures.push("exponent-compatibility chain violated".into());
        }
        Some(r)
    } else {
        None
    };
    let detail = json!({
        "p": sys.p,
        "q": sys.q,
        "size": size,
        "dual_norm": { "c_h": dual.c_h, "configurations": dual.configurations, "skipped": dual.skipped },
        "wbp": wbp,
        "compatibility": compat,
    });
    Ok(if failures.is_empty() { SuiteOutcome::pass(detail) } else { SuiteOutcome::fail(detail, failures) })
}

pub fn stopping_suite(ctx: &Context, report: &mut Report, out: &Path) -> anyhow::Result<SuiteOutcome> {
    let tree = &ctx.tree;
    let mut failures = Vec::new();
    let size = accretive::verify_size(tree, &ctx.sys, &ctx.op);
    let c_a = size.c_size;
    let mut side_details = Vec::new();
    for (decomp, p_i, label) in [(&ctx.d1, ctx.sys.p, "side1"), (&ctx.d2, ctx.sys.q, "side2")] {
        if let Err(e) = decomp.check_partition(tree) {
            failures.push(format!("{label}: {e}"));
        }
        report.constant("5.2", &format!("{label}_packing_slack"), decomp.eps);
        let buffer_ratio = decomp.buffer_packing_ratio(tree);
        report.constant("5.4", &format!("{label}_buffer_packing"), buffer_ratio);
        if buffer_ratio > tree.constants.c_x * (1.0 + 1e-12) {
            failures.push(format!("{label}: buffer packing {buffer_ratio} exceeds C_X"));
        }
        let (surv, tops) = decomp.mean_bound_extremes(tree);
        report.constant("5.3", &format!("{label}_mean_bound_survivors"), surv);
        report.constant("5.3", &format!("{label}_mean_bound_tops"), tops);
        // the reference cube is never a stopping candidate; when it fails
        // the size test itself (degenerate flag) the mean-bound gates are
        // vacuous for it and for the tops that inherit from it
        if !decomp.degenerate {
            if surv > decomp.config.c_stop * (1.0 + 1e-12) {
                failures.push(format!("{label}: survivor mean bound {surv} exceeds c_stop"));
            }
            if tops > tree.constants.c_x * decomp.config.c_stop * (1.0 + 1e-12) {
                failures.push(format!("{label}: top mean bound {tops} exceeds C_X c_stop"));
            }
        }

        let (f, _) = ctx.probe_pair(3);
        let dec_report = stopping::check_decomposition(decomp, tree, &f);
        report.constant("5.5", &format!("{label}_reconstruction_residual"), dec_report.reconstruction_residual);
        report.constant("5.5", &format!("{label}_buffer_coefficient_constant"), dec_report.coefficient_constant);
        // the four-part identity telescopes to the deepest generation and
        // is exact only once every leaf is a single point
        if tree.fully_resolved() && dec_report.reconstruction_residual > 1e-10 {
            failures.push(format!(
                "{label}: decomposition residual {}",
                dec_report.reconstruction_residual
            ));
        }
        let proj = stopping::check_projection(decomp, tree, &f, p_i, c_a);
        report.constant("5.8", &format!("{label}_mean_preservation"), proj.mean_preservation_residual);
        report.constant("5.9", &format!("{label}_idempotence"), proj.idempotence_residual);
        report.constant("5.10", &format!("{label}_cutoff_commutation"), proj.cutoff_commutation_residual);
        report.constant("5.7", &format!("{label}_global_bound_ratio"), proj.global_bound_ratio);
        report.constant("5.11", &format!("{label}_local_bound_ratio"), proj.local_bound_ratio);
        for (tag, v) in [
            ("5.8", proj.mean_preservation_residual),
            ("5.9", proj.idempotence_residual),
            ("5.10", proj.cutoff_commutation_residual),
        ] {
            if v > 1e-12 {
                failures.push(format!("{label}: projection identity {tag} residual {v}"));
            }
        }
        if proj.global_bound_ratio > 1.0 + 1e-12 || proj.local_bound_ratio > 1.0 + 1e-12 {
            failures.push(format!("{label}: projection norm bound exceeded"));
        }
        // empirical embedding constant: max ratio over several probes,
        // reported next to the tops mean constant that drives its bound
        let hsys = AdaptedHaarSystem::build(tree, &decomp.b, &decomp.spa, decomp.config.delta_stop)?;
        let mut embed: f64 = 0.0;
        for probe in 0..4u64 {
            let (fp, _) = ctx.probe_pair(30 + probe);
            embed = embed.max(stopping::embedding_ratio(decomp, tree, &hsys, &fp));
        }
        report.constant("5.2L", &format!("{label}_embedding_constant"), embed);
        let q_exp = if label == "side1" { ctx.sys.q } else { ctx.sys.p };
        report.constant("5.2L", &format!("{label}_tops_mean_constant"), decomp.tops_mean_constant(tree, q_exp));

        side_details.push(json!({
            "side": label,
            "degenerate": decomp.degenerate,
            "tops": decomp.tops,
            "spa_count": decomp.spa.len(),
            "buffer": decomp.buffer,
            "packing_slack": decomp.eps,
            "decomposition": dec_report,
            "projection": proj,
        }));
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(
        out.join("stopping.json"),
        serde_json::to_string_pretty(&serde_json::Value::Array(side_details.clone()))? + "\n",
    )?;
    let detail = json!({ "sides": side_details, "c_stop": ctx.c_stop });
    Ok(if failures.is_empty() { SuiteOutcome::pass(detail) } else { SuiteOutcome::fail(detail, failures) })
}

pub fn bcr_suite(ctx: &Context, report: &mut Report, out: &Path) -> anyhow::Result<SuiteOutcome> {
    let tree = &ctx.tree;
    let mut failures = Vec::new();
    if !tree.fully_resolved() {
        return Ok(SuiteOutcome::skipped("tree not refined to single points; the telescoping identity needs full depth"));
    }
    let run = BcrRun::new(tree, &ctx.op, &ctx.d1, &ctx.d2)?;
    let l2 = ctx.op.l2_norm();
    let mut worst_rel: f64 = 0.0;
    let mut worst_w: f64 = 0.0;
    let mut worst_cancel: f64 = 0.0;
    let mut term_table = serde_json::Map::new();
    for k in 0..ctx.config.bcr.probes {
        let (f, g) = ctx.probe_pair(10 + k as u64);
        let dec = run.terms(&f, &g);
        let scale = linalg::l2_norm(&f, ctx.space.weights())
            * linalg::l2_norm(&g, ctx.space.weights())
            * l2;
        let rel = dec.telescoping_residual() / scale.max(1e-300);
        worst_rel = worst_rel.max(rel);
        let wd = (dec.w_total() - dec.w_direct).norm() / dec.w_direct.norm().max(1e-12);
        worst_w = worst_w.max(wd);
        worst_cancel = worst_cancel.max(dec.v13_cancellation_residual);
        if k == 0 {
            term_table.insert("e0".into(), json!([dec.e0.re, dec.e0.im]));
            for label in [
                TermLabel::U1, TermLabel::U2, TermLabel::U3, TermLabel::U4,
                TermLabel::V1, TermLabel::V2, TermLabel::V3, TermLabel::V4,
                TermLabel::W1, TermLabel::W2, TermLabel::W3, TermLabel::W4,
            ] {
                let v = dec.term_sum(label);
                term_table.insert(label.name().into(), json!([v.re, v.im]));
            }
            term_table.insert("direct".into(), json!([dec.direct.re, dec.direct.im]));
            let ratios = bcr::decay_ratios(&run, &f, &g);
            for (slot, tag) in DECAY_CLASS_TAGS.iter().enumerate() {
                if let Some((v, count)) = ratios.ratios[slot] {
                    report.constant(tag, &format!("decay_ratio_{}", slot + 1), v);
                    term_table.insert(format!("decay_{}_count", slot + 1), json!(count));
                }
            }
        }
        // per-generation expectation identity (survivor formula vs telescoping)
        let mut acc = ctx.d1.expectation_at(tree, &g, 0);
        for j in 0..tree.max_generation() {
            let d = ctx.d1.difference_at(tree, &g, j);
            for i in 0..acc.len() {
                acc[i] += d[i];
            }
            let direct = ctx.d1.expectation_at(tree, &g, j + 1);
            let mut resid: f64 = 0.0;
            for i in 0..acc.len() {
                resid = resid.max((acc[i] - direct[i]).norm());
            }
            if resid > 1e-11 {
                failures.push(format!("probe {k}: expectation identity residual {resid} at level {j}"));
                break;
            }
        }
    }
    report.constant("7.0", "telescoping_relative_residual", worst_rel);
    report.constant("7.0", "w_duality_residual", worst_w);
    report.constant("7.3c", "compensated_cancellation_residual", worst_cancel);
    if worst_rel > 1e-8 {
        failures.push(format!("telescoping residual {worst_rel}"));
    }
    if worst_w > 1e-10 {
        failures.push(format!("duality cross-check residual {worst_w}"));
    }
    if worst_cancel > 1e-10 {
        failures.push(format!("compensated cancellation residual {worst_cancel}"));
    }

    // summing-lemma sweeps
    let mut rows72 = Vec::new();
    let mut max72: f64 = 0.0;
    for j in 2..=tree.max_generation().min(6) {
        for &r in tree.generation(j) {
            let v = bcr::fine_scale_sum(tree, r, 0, run.kernel_alpha);
            max72 = max72.max(v);
            rows72.push(vec![j.to_string(), r.to_string(), fmt_f64(v)]);
        }
    }
    report.constant("7.2", "fine_scale_sum_max", max72);
    write_csv(&out.join("summing_fine.csv"), &["generation", "cube", "sum"], &rows72)?;
    let mut max73: f64 = 0.0;
    for j in 2..=tree.max_generation().min(6) {
        for &q in tree.generation(j) {
            let mut total = 0.0;
            for p in 0..=j.min(4) {
                total += bcr::coarse_scale_sum(tree, q, p, run.kernel_alpha);
            }
            max73 = max73.max(total);
        }
    }
    report.constant("7.3", "coarse_scale_sum_max", max73);

    std::fs::create_dir_all(out)?;
    std::fs::write(
        out.join("bcr_terms.json"),
        serde_json::to_string_pretty(&serde_json::Value::Object(term_table.clone()))? + "\n",
    )?;
    let detail = json!({
        "telescoping_relative_residual": worst_rel,
        "w_duality_residual": worst_w,
        "cancellation_residual": worst_cancel,
        "fine_scale_sum_max": max72,
        "coarse_scale_sum_max": max73,
        "terms": term_table,
    });
    Ok(if failures.is_empty() { SuiteOutcome::pass(detail) } else { SuiteOutcome::fail(detail, failures) })
}

pub fn compress_suite(ctx: &Context, report: &mut Report, out: &Path) -> anyhow::Result<SuiteOutcome> {
    let tree = &ctx.tree;
    if !tree.fully_resolved() {
        return Ok(SuiteOutcome::skipped("tree not refined to single points"));
    }
    let mut failures = Vec::new();
    let run = BcrRun::new(tree, &ctx.op, &ctx.d1, &ctx.d2)?;
    let (f, g) = ctx.probe_pair(20);
    let dec = run.terms(&f, &g);
    let t50 = dec.tau_dropping(0.5);
    let lo = (t50 * 1e-3).max(1e-12);
    let hi = t50 * 1e2;
    // tau = 0 plus a log grid: tau_points rows in total
    let points = ctx.config.bcr.tau_points.max(3) - 1;
    let ratio = (hi / lo).powf(1.0 / (points - 1) as f64);
    let mut taus: Vec<f64> = vec![0.0];
    taus.extend((0..points).map(|k| lo * ratio.powi(k as i32)));
    let sweep = dec.compression_sweep(&taus);
    let rows: Vec<Vec<String>> = sweep
        .iter()
        .map(|c| {
            vec![
                fmt_f64(c.tau),
                fmt_f64(c.kept_fraction),
                fmt_f64(c.relative_error),
                fmt_f64(c.relative_error_bound),
            ]
        })
        .collect();
    write_csv(
        &out.join("compress_sweep.csv"),
        &["tau", "kept_fraction", "relative_error", "relative_error_bound"],
        &rows,
    )?;
    // certified bound is monotone in tau
    for w in sweep.windows(2) {
        if w[1].relative_error_bound < w[0].relative_error_bound - 1e-13 {
            failures.push("certified error bound not monotone".into());
            break;
        }
    }
    let at_half = dec.compressed(t50);
    report.constant("B.c", "tau_half", t50);
    report.constant("B.c", "kept_fraction_at_half", at_half.kept_fraction);
    report.constant("B.c", "achieved_error_at_half", at_half.relative_error);
    report.constant("B.c", "error_bound_at_half", at_half.relative_error_bound);
    let detail = json!({
        "tau_half": t50,
        "at_half": at_half,
        "sweep_points": sweep.len(),
    });
    Ok(if failures.is_empty() { SuiteOutcome::pass(detail) } else { SuiteOutcome::fail(detail, failures) })
}

pub fn geometry_suite(ctx: &Context, report: &mut Report, out: &Path) -> anyhow::Result<SuiteOutcome> {
    let space = &ctx.space;
    let mut failures = Vec::new();
    let study = geometry::implication_study(space, ctx.config.geometry.geodesic_bound);
    report.constant("9.6", "monotone_geodesic_constant", study.geodesic_max);
    if let Some(fitted) = &study.relative_annular {
        report.constant("9.5", "relative_annular_eta", fitted.eta);
        report.constant("9.5", "relative_annular_residual", fitted.rms_residual);
    }
    if let Some(fitted) = &study.relative_layer {
        report.constant("9.2", "relative_layer_eta", fitted.eta);
    }
    report.constant("3.8", "ball_hardy_max", study.hardy_max);
    if !study.chain_consistent {
        failures.push(study.violated_link.clone().unwrap_or_else(|| "chain violated".into()));
    }

    let rows: Vec<Vec<String>> =
        study.geodesic_profile.iter().map(|(u, c)| vec![fmt_f64(*u), fmt_f64(*c)]).collect();
    write_csv(&out.join("geodesic_profile.csv"), &["u", "constant"], &rows)?;

    // plain layer and annular profiles around the central ball
    let h = geometry::min_spacing(space);
    let center = space.len() / 2;
    let radius = space.diameter() / 4.0;
    if radius > 2.0 * h {
        let grid = geometry::log_grid(2.0 * h, radius * 0.9, ctx.config.geometry.grid_points);
        if let Ok((profile, fitted)) = geometry::layer_profile(space, center, radius, &grid) {
            let rows: Vec<Vec<String>> =
                profile.iter().map(|(e, r)| vec![fmt_f64(*e), fmt_f64(*r)]).collect();
            write_csv(&out.join("layer_profile.csv"), &["eps_over_r", "mass_fraction"], &rows)?;
            if let Some(fitted) = fitted {
                report.constant("9.1", "layer_eta", fitted.eta);
                report.constant("9.1", "layer_c", fitted.c);
            }
        }
        if let Ok((profile, fitted)) = geometry::annular_profile(space, center, radius, &grid) {
            let rows: Vec<Vec<String>> =
                profile.iter().map(|(s, r)| vec![fmt_f64(*s), fmt_f64(*r)]).collect();
            write_csv(&out.join("annular_profile.csv"), &["s_over_r", "mass_fraction"], &rows)?;
            if let Some(fitted) = fitted {
                report.constant("9.4", "annular_eta", fitted.eta);
            }
        }
        // normalized two-region constant on a cube/halo-style pair
        let tree = &ctx.tree;
        let mid_gen = 2.min(tree.max_generation());
        if let Some(&q) = tree.generation(mid_gen).first() {
            let inner = tree.cube(q).members.clone();
            let hat = tree.q_hat(q);
            let outer: Vec<usize> =
                hat.into_iter().filter(|m| inner.binary_search(m).is_err()).collect();
            if !outer.is_empty() {
                if let Ok(est) = geometry::normalized_hardy_constant(space, &inner, &outer, 3.0, 3.0) {
                    report.constant("9.3", "normalized_hardy_constant", est.value);
                }
            }
        }
    }
    let detail = json!({
        "geodesic_max": study.geodesic_max,
        "geodesic_passes": study.geodesic_passes,
        "relative_annular": study.relative_annular,
        "relative_layer": study.relative_layer,
        "hardy_constants": study.hardy_constants,
        "chain_consistent": study.chain_consistent,
        "violated_link": study.violated_link,
    });
    Ok(if failures.is_empty() { SuiteOutcome::pass(detail) } else { SuiteOutcome::fail(detail, failures) })
}

/// Convenience accessor used by the binary: all suite names in run order.
pub const SUITE_NAMES: [&str; 9] = [
    "space",
    "tree",
    "operator",
    "wavelets",
    "accretive",
    "stopping",
    "bcr",
    "compress",
    "geometry",
];

pub fn run_suite(
    name: &str,
    ctx: &Context,
    report: &mut Report,
    out: &Path,
) -> anyhow::Result<SuiteOutcome> {
    match name {
        "space" => space_suite(ctx, report, out),
        "tree" => tree_suite(ctx, report, out),
        "operator" => operator_suite(ctx, report, out),
        "wavelets" => wavelets_suite(ctx, report, out),
        "accretive" => accretive_suite(ctx, report),
        "stopping" => stopping_suite(ctx, report, out),
        "bcr" => bcr_suite(ctx, report, out),
        "compress" => compress_suite(ctx, report, out),
        "geometry" => geometry_suite(ctx, report, out),
        other => anyhow::bail!("unknown suite {other}"),
    }
}
