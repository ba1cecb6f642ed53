//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::sync::Arc;
use std::time::Instant;

use anosov_core::contact::{
    assemble, bi_adapted_check, construct_strongly_adapted, liouville_check, strad_predicates, reeb_conditions,
    Assembly, BiAdaptedMode, Consensus, ContactTolerances, StradReport,
};
use anosov_core::convexity::{
    blend_identity, blend_rate, convexity_probe, log_convexity_probe, tau_grid, w_alpha_s_probe, BlendSpec, Level,
};
use anosov_core::expansion::{cat_norm, sl2_norm, ExpansionRate};
use anosov_core::fields::{ExpProfile, Profile, Scalar, Shape};
use anosov_core::flow::{orbit_integral, periodic_orbits_cat};
use anosov_core::model::{cat_lambda, cat_log_lambda};
use anosov_core::sampling::sample_points;
use anosov_core::sync::{pipeline, SyncParams, SyncPoint, Synchronizer};
use anosov_core::tables::{strad_table, sync_table};
use anosov_core::{FlowSpec, Model, ModelPoint, Result, Role};

const SEED: u64 = 20240917;
const N: usize = 1000;
const WINDOWS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
const DELTA: f64 = 0.05;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn perturbed_u() -> anosov_core::expansion::NormForm {
    cat_norm(Role::Unstable, Profile::single(DELTA, Shape::Sin))
}

fn base_s() -> anosov_core::expansion::NormForm {
    cat_norm(Role::Stable, Profile::zero())
}

/// Shared state between criteria.
struct Lab {
    cat: Vec<ModelPoint>,
    sl2: Vec<ModelPoint>,
    tol: ContactTolerances,
    sync_runs: Vec<(Synchronizer, Vec<SyncPoint>)>,
    assemblies: Vec<(Assembly, bool, StradReport)>,
}

fn c1(lab: &Lab) -> Result<Outcome> {
    let sample = &lab.cat[..100];
    let nf = cat_norm(Role::Unstable, Profile::zero());
    let mut worst_r: f64 = 0.0;
    let mut worst_x: f64 = 0.0;
    for t in WINDOWS {
        let s = Synchronizer::new(nf.clone(), FlowSpec::new(Model::Cat), SyncParams::window(t), sample)?;
        for out in s.eval_all(sample)? {
            worst_r = worst_r.max((out.r_t - cat_log_lambda()).abs());
            worst_x = worst_x.max(out.xr_t.abs());
        }
    }
    let oracle = ((3.0 + 5f64.sqrt()) / 2.0).ln();
    let lam_ok = (cat_log_lambda() - oracle).abs() < 1e-15 && (cat_log_lambda() - 0.962424).abs() < 1e-6;
    outcome(lam_ok && worst_r < 1e-10 && worst_x < 1e-10, format!("max |r_T - ln lambda| = {worst_r:.2e}, max |X r_T| = {worst_x:.2e}"))
}

fn c2(lab: &mut Lab) -> Result<Outcome> {
    let mut pass = true;
    let mut parts = vec![];
    for t in WINDOWS {
        let s = Synchronizer::new(perturbed_u(), FlowSpec::new(Model::Cat), SyncParams::window(t), &lab.cat)?;
        let pts = s.eval_all(&lab.cat)?;
        let worst = pts.iter().map(|p| (p.r_t - p.baseline).abs() / s.eps).fold(0.0, f64::max);
        let mismatch = pts.iter().filter(|p| p.flags.baseline_mismatch).count();
        pass &= worst <= 1.0 && mismatch == 0;
        parts.push(format!("T={t}: max dev/eps = {worst:.3}"));
        lab.sync_runs.push((s, pts));
    }
    outcome(pass, parts.join(", "))
}

fn c3(lab: &Lab) -> Result<Outcome> {
    let mut pass = true;
    let mut sups = vec![];
    let mut max_a: f64 = 0.0;
    for (s, pts) in &lab.sync_runs {
        let t = s.params.t;
        let lo = s.eps * (-t * s.osc).exp();
        let hi = s.eps * (t * s.osc).exp() + 1e-8;
        let mut sup: f64 = 0.0;
        for p in pts {
            max_a = max_a.max(p.a.abs());
            pass &= p.a.abs() <= 1.0 + 1e-8;
            pass &= p.b >= lo && p.b <= hi;
            sup = sup.max(p.xr_t.abs());
        }
        let bound = s.osc / t + 2.0 * s.eps + 4.0 * s.eps * s.eps;
        pass &= sup <= bound;
        sups.push(sup);
    }
    let decreasing = sups.windows(2).all(|w| w[1] < w[0]);
    let cols: Vec<String> = sups.iter().map(|v| format!("{v:.3e}")).collect();
    outcome(pass && decreasing, format!("max |A_T| = {max_a:.4}, sup |X r_T| by T = [{}]", cols.join(", ")))
}

fn c4(lab: &Lab) -> Result<Outcome> {
    let mut e1: f64 = 0.0;
    let mut e2: f64 = 0.0;
    for (s, _) in lab.sync_runs.iter().filter(|(s, _)| s.params.t == 2.0 || s.params.t == 4.0) {
        for p in &lab.cat[..50] {
            let fd = s.fd_check(p)?;
            e1 = e1.max((fd.r_fd - fd.r_closed).abs());
            e2 = e2.max((fd.xr_fd - fd.xr_closed).abs());
        }
    }
    outcome(e1 < 1e-5 && e2 < 1e-4, format!("rate vs FD {e1:.2e}, derivative vs FD {e2:.2e} (100 point-window pairs)"))
}

fn c5(lab: &mut Lab) -> Result<Outcome> {
    let tol = lab.tol;
    let mut list: Vec<(Assembly, bool, StradReport)> = vec![];
    let sl2 = assemble("sl2 base", sl2_norm(Role::Unstable, 0.0), sl2_norm(Role::Stable, 0.0), FlowSpec::new(Model::Sl2), &lab.sl2, &tol)?;
    let rep = strad_predicates(&sl2, &lab.sl2, &tol);
    list.push((sl2, true, rep));
    for (label, d) in [("cat base", 0.0), ("cat delta 0.01", 0.01)] {
        let a = assemble(label, cat_norm(Role::Unstable, Profile::single(d, Shape::Sin)), base_s(), FlowSpec::new(Model::Cat), &lab.cat, &tol)?;
        let rep = strad_predicates(&a, &lab.cat, &tol);
        list.push((a, true, rep));
    }
    for t in [4.0, 8.0] {
        let (a, _, rep) = construct_strongly_adapted(perturbed_u(), base_s(), &FlowSpec::new(Model::Cat), SyncParams::window(t), &lab.cat, &tol)?;
        list.push((a, true, rep));
    }
    let bad = assemble("cat delta 0.05 unsynchronized", perturbed_u(), base_s(), FlowSpec::new(Model::Cat), &lab.cat, &tol)?;
    let rep = strad_predicates(&bad, &lab.cat, &tol);
    list.push((bad, false, rep));

    let mut pass = true;
    let mut parts = vec![];
    for (_, expect, rep) in &list {
        let ta = reeb_conditions(rep);
        let expected = if *expect { rep.consensus == Consensus::AllTrue } else { rep.n_false > 0 };
        pass &= rep.n_disagree == 0 && rep.indeterminate_fraction() < 0.01 && expected;
        pass &= ta.agrees_with_strad && rep.n_orientation_mismatch == 0;
        parts.push(format!(
            "{}: {:?} ({} true / {} false / {} indet.)",
            rep.label, rep.consensus, rep.n_true, rep.n_false, rep.n_indeterminate
        ));
    }
    lab.assemblies = list;
    outcome(pass, parts.join("; "))
}

fn c6(lab: &Lab) -> Result<Outcome> {
    let worst = lab.assemblies.iter().map(|(_, _, r)| r.max_reebquad).fold(0.0, f64::max);
    let adapted = lab.assemblies.iter().all(|(_, _, r)| r.n_not_adapted == 0);
    outcome(adapted && worst <= 1e-7, format!("max normalized residual {worst:.2e} over {} assemblies", lab.assemblies.len()))
}

fn c7(lab: &Lab) -> Result<Outcome> {
    let tol = lab.tol;
    let sl2 = &lab.assemblies[0].0;
    let r = bi_adapted_check(sl2, &lab.sl2, BiAdaptedMode::Direct, &tol)?;
    let asym = &lab.assemblies.iter().find(|(a, _, _)| a.label == "cat delta 0.01").unwrap().0;
    let q = bi_adapted_check(asym, &lab.cat, BiAdaptedMode::Direct, &tol)?;
    outcome(
        r.residual_plus < 1e-10 && r.residual_minus < 1e-10 && q.residual_plus > 1e-3,
        format!(
            "sl2 residuals {:.1e} / {:.1e}; asymmetric cat alpha_+(R_-) = {:.3e} (expected failure)",
            r.residual_plus, r.residual_minus, q.residual_plus
        ),
    )
}

fn c8(lab: &Lab) -> Result<Outcome> {
    let grid: Vec<f64> = (0..21).map(|k| -1.0 + 0.1 * k as f64).collect();
    let mut pass = true;
    let mut parts = vec![];
    for (a, expect, rep) in &lab.assemblies {
        if !*expect || !rep.is_true() {
            continue;
        }
        let sample = if a.model() == Model::Sl2 { &lab.sl2 } else { &lab.cat };
        let l = liouville_check(a, &grid, sample);
        pass &= l.min_density > 0.0;
        parts.push(format!("{}: {:.3e}", a.label, l.min_density));
    }
    outcome(pass && parts.len() >= 5, format!("min density {}", parts.join(", ")))
}

fn c9(lab: &Lab) -> Result<Outcome> {
    let tol = lab.tol;
    let pts = &lab.cat[..91];
    let h: Scalar = Arc::new(ExpProfile { rate: 0.0, h: Profile::single(0.1, Shape::Sin) });
    let bs = BlendSpec::new(cat_norm(Role::Unstable, Profile::zero()), h, FlowSpec::new(Model::Cat), pts)?;
    let mut e3: f64 = 0.0;
    let mut e4: f64 = 0.0;
    for tau in tau_grid(11) {
        for r in blend_rate(&bs, tau, pts)? {
            e3 = e3.max((r.formula - r.direct).abs() / r.direct.abs().max(1.0));
        }
        for r in blend_identity(&bs, tau, pts)? {
            e4 = e4.max(r.rel_err);
        }
    }
    let sample = &lab.cat[..200];
    let spec = FlowSpec::new(Model::Cat);
    let a = cat_norm(Role::Unstable, Profile::single(0.01, Shape::Sin));
    let b = cat_norm(Role::Unstable, Profile::single(-0.01, Shape::Sin));
    let strong = convexity_probe(&a, &b, &spec, Level::Strong, &tau_grid(11), sample, 1e-9)?;
    let strong_ok = strong.iter().all(|r| r.holds);
    let (_, w4, re) = pipeline(perturbed_u(), base_s(), &spec, SyncParams::window(4.0), sample)?;
    let (_, w8, _) = pipeline(perturbed_u(), base_s(), &spec, SyncParams::window(8.0), sample)?;
    let w = w_alpha_s_probe(&base_s(), &w4, &w8, &re, &tau_grid(11), sample, &tol)?;
    let w_ok = w.iter().all(|r| r.inequality == Some(true) && r.strad == Consensus::AllTrue && r.agree);
    let base = &lab.assemblies.iter().find(|(a, _, _)| a.label == "cat base").unwrap().0;
    let lc = log_convexity_probe(base, Arc::new(Profile::single(0.01, Shape::Sin)), &tau_grid(11), sample, &tol)?;
    let lc_ok = lc.iter().all(|r| r.holds && r.affinity < 1e-5);
    let aff = lc.iter().map(|r| r.affinity).fold(0.0, f64::max);
    outcome(
        e3 <= 1e-7 && e4 <= 1e-6 && strong_ok && w_ok && lc_ok,
        format!("blend rate {e3:.1e}, weighted average {e4:.1e}, strong blends {strong_ok}, W blends {w_ok}, log-convexity {lc_ok} (affinity {aff:.1e})"),
    )
}

fn c10(lab: &Lab) -> Result<Outcome> {
    let rate = ExpansionRate::new(perturbed_u(), FlowSpec::new(Model::Cat));
    let f = |p: &ModelPoint| Ok(rate.eval(p.coords).0);
    let mut worst: f64 = 0.0;
    let mut counts = vec![];
    for n in 1..=3u32 {
        let orbits = periodic_orbits_cat(n);
        counts.push(orbits.len());
        for o in &orbits {
            let i = orbit_integral(&f, &rate.spec, &o.start, n as f64, 1e-3)?;
            let target = cat_lambda().powi(n as i32);
            worst = worst.max((i.exp() - target).abs() / target);
        }
    }
    let spec = FlowSpec::new(Model::Cat);
    let mut angle: f64 = 0.0;
    for p in &lab.cat[..20] {
        let b = spec.recover_bundles(p, 30.0)?;
        angle = angle.max(b.angle_u).max(b.angle_s);
    }
    let sl2 = FlowSpec::new(Model::Sl2);
    for p in &lab.sl2[..5] {
        let b = sl2.recover_bundles(p, 30.0)?;
        angle = angle.max(b.angle_u).max(b.angle_s);
    }
    outcome(
        worst < 1e-7 && angle < 1e-6,
        format!("orbits per period {counts:?}, max relative multiplier error {worst:.2e}, max bundle angle {angle:.2e}"),
    )
}

fn c11(lab: &Lab) -> Result<Outcome> {
    let sample = &lab.cat[..40];
    let run = |threads: usize| -> Result<(String, String)> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
        pool.install(|| {
            let s = Synchronizer::new(perturbed_u(), FlowSpec::new(Model::Cat), SyncParams::window(2.0), sample)?;
            let a = sync_table(&s.eval_all(sample)?)?;
            let asm = assemble("det", perturbed_u(), base_s(), FlowSpec::new(Model::Cat), sample, &lab.tol)?;
            let b = strad_table(&strad_predicates(&asm, sample, &lab.tol))?;
            Ok((a, b))
        })
    };
    let one = run(1)?;
    let two = run(1)?;
    let many = run(4)?;
    let same = one == two && one == many;
    outcome(same, format!("{} + {} CSV bytes identical across runs and thread counts: {same}", one.0.len(), one.1.len()))
}

fn main() {
    let mut lab = Lab {
        cat: sample_points(Model::Cat, N, SEED),
        sl2: sample_points(Model::Sl2, N, SEED),
        tol: ContactTolerances::default(),
        sync_runs: vec![],
        assemblies: vec![],
    };
    let names = [
        "constant-rate exactness",
        "averaged-rate bound",
        "synchronized-norm structure",
        "finite-difference cross-validation",
        "eight-condition unanimity",
        "Reeb quadrant residual",
        "incompressible bi-adaptation",
        "Liouville pencil",
        "convexity identities and probes",
        "periodic orbits and bundle recovery",
        "determinism",
    ];
    let mut failed = 0;
    for (k, name) in names.iter().enumerate() {
        let t0 = Instant::now();
        let res = match k + 1 {
            1 => c1(&lab),
            2 => c2(&mut lab),
            3 => c3(&lab),
            4 => c4(&lab),
            5 => c5(&mut lab),
            6 => c6(&lab),
            7 => c7(&lab),
            8 => c8(&lab),
            9 => c9(&lab),
            10 => c10(&lab),
            _ => c11(&lab),
        };
        let (pass, detail) = match res {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {}: {} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            name,
            detail,
            t0.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", names.len() - failed, names.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
