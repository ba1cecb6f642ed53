use std::sync::Arc;

use anosov_core::contact::{
    assemble, construct_strongly_adapted, liouville_check, strad_predicates, reeb_conditions, Assembly, Consensus,
    StradReport, ReebReport,
};
use anosov_core::convexity::{
    blend_identity, blend_rate, convexity_probe, log_convexity_probe, tau_grid, w_alpha_s_probe, BlendSpec, Level,
};
use anosov_core::expansion::{cat_norm, sl2_norm, ExpansionRate};
use anosov_core::fields::{ConstScalar, ExpProfile, Profile, Scalar, Shape};
use anosov_core::sampling::sample_points;
use anosov_core::sync::{pipeline, Synchronizer};
use anosov_core::tables::{strad_table, sync_table, to_csv};
use anosov_core::{FlowSpec, Model, ModelPoint, Role};
use serde::Serialize;

use crate::config::RunConfig;
use crate::manifest::{Check, Run, RunManifest};
use crate::CliError;

fn sample(cfg: &RunConfig) -> Vec<ModelPoint> {
    sample_points(cfg.model, cfg.samples, cfg.seed)
}

fn fmt_t(t: f64) -> String {
    format!("{t}").replace('.', "p")
}

/// Report summary without the per-sample rows.
#[derive(Serialize)]
struct StradSummary {
    label: String,
    consensus: Consensus,
    n_samples: usize,
    n_true: usize,
    n_false: usize,
    n_indeterminate: usize,
    n_disagree: usize,
    n_orientation_mismatch: usize,
    min_margins: [f64; 8],
    max_reebquad: f64,
    reeb: ReebReport,
}

fn summary(rep: &StradReport) -> StradSummary {
    StradSummary {
        label: rep.label.clone(),
        consensus: rep.consensus,
        n_samples: rep.n_samples,
        n_true: rep.n_true,
        n_false: rep.n_false,
        n_indeterminate: rep.n_indeterminate,
        n_disagree: rep.n_disagree,
        n_orientation_mismatch: rep.n_orientation_mismatch,
        min_margins: rep.min_margins,
        max_reebquad: rep.max_reebquad,
        reeb: reeb_conditions(rep),
    }
}

/// An assembly with whether strong adaptation is required of it.
struct Built {
    asm: Assembly,
    required: bool,
}

fn build_assemblies(cfg: &RunConfig, pts: &[ModelPoint], run: &mut Run) -> Vec<Built> {
    let tol = cfg.contact_tolerances();
    let spec = FlowSpec::new(cfg.model);
    let mut out = vec![];
    let (u, s) = cfg.base_pair();
    match assemble("baseline", u, s, spec.clone(), pts, &tol) {
        Ok(asm) => out.push(Built { asm, required: true }),
        Err(e) => run.check("assemble.baseline", false, e.to_string()),
    }
    if cfg.is_perturbed() {
        let (u, s) = cfg.perturbed_pair();
        match assemble("perturbed", u.clone(), s.clone(), spec.clone(), pts, &tol) {
            Ok(asm) => out.push(Built { asm, required: !cfg.synchronize }),
            Err(e) => run.check("assemble.perturbed", false, e.to_string()),
        }
        if cfg.synchronize {
            let t = cfg.t_grid.iter().cloned().fold(f64::MIN, f64::max);
            match construct_strongly_adapted(u, s, &spec, cfg.sync_params(t), pts, &tol) {
                Ok((mut asm, _, _)) => {
                    asm.label = format!("synchronized_T{}", fmt_t(t));
                    out.push(Built { asm, required: true });
                }
                Err(e) => run.check(format!("assemble.synchronized_T{}", fmt_t(t)), false, e.to_string()),
            }
        }
    }
    out
}

pub fn verify_strad(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let mut run = Run::new("verify-strad", cfg);
    let pts = sample(cfg);
    let tol = cfg.contact_tolerances();
    let mut summaries = vec![];
    for b in build_assemblies(cfg, &pts, &mut run) {
        let rep = strad_predicates(&b.asm, &pts, &tol);
        let l = &rep.label;
        let ta = reeb_conditions(&rep);
        run.check(
            format!("strad.{l}.unanimous"),
            rep.n_disagree == 0 && rep.n_orientation_mismatch == 0 && ta.agrees_with_strad,
            format!("{} disagreements, {} orientation mismatches", rep.n_disagree, rep.n_orientation_mismatch),
        );
        run.check(format!("strad.{l}.reebquad"), rep.max_reebquad <= tol.reebquad, format!("max residual {:.3e}", rep.max_reebquad));
        let verdict = format!("{:?} ({} true, {} false)", rep.consensus, rep.n_true, rep.n_false);
        if b.required {
            run.check(format!("strad.{l}.strongly_adapted"), rep.is_true(), verdict);
        } else {
            run.warn(format!("{l}: {verdict}, not required"));
        }
        if rep.indeterminate_fraction() >= 0.01 {
            run.warn(format!("{l}: {} indeterminate samples", rep.n_indeterminate));
        } else if rep.n_indeterminate > 0 {
            run.warn(format!("{l}: {} indeterminate samples excluded", rep.n_indeterminate));
        }
        run.artifact(&format!("strad_{l}.csv"), "contact_lab", "strad_predicates", strad_table(&rep)?);
        summaries.push(summary(&rep));
    }
    run.json("report.json", "contact_lab", "strad_predicates", &summaries)?;
    run.finish()
}

#[derive(Serialize)]
struct SyncSummaryRow {
    #[serde(rename = "T")]
    t: f64,
    eps: f64,
    osc: f64,
    max_dev: f64,
    max_abs_a: f64,
    min_b: f64,
    max_b: f64,
    sup_xr: f64,
    xr_bound: f64,
    horizon_capped: usize,
    tech_margin: Option<f64>,
}

pub fn synchronize(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let mut run = Run::new("synchronize", cfg);
    let pts = sample(cfg);
    let spec = FlowSpec::new(cfg.model);
    let (u, s) = cfg.perturbed_pair();
    let mut rows = vec![];
    for &t in &cfg.t_grid {
        let sync = Synchronizer::new(u.clone(), spec.clone(), cfg.sync_params(t), &pts)?;
        if sync.ill_conditioned() {
            run.warn(format!("T = {t}: T osc = {:.2} > 6, quadrature is ill-conditioned", t * sync.osc));
        }
        let out = sync.eval_all(&pts)?;
        let capped = out.iter().filter(|p| p.flags.horizon_capped).count();
        if capped > 0 {
            run.warn(format!("T = {t}: {capped} horizon-capped points"));
        }
        let lo = sync.eps * (-t * sync.osc).exp() * (1.0 - 1e-9);
        let hi = sync.eps * (t * sync.osc).exp() * (1.0 + 1e-9);
        let mut row = SyncSummaryRow {
            t,
            eps: sync.eps,
            osc: sync.osc,
            max_dev: 0.0,
            max_abs_a: 0.0,
            min_b: f64::INFINITY,
            max_b: 0.0,
            sup_xr: 0.0,
            xr_bound: sync.osc / t + 2.0 * sync.eps + 4.0 * sync.eps * sync.eps,
            horizon_capped: capped,
            tech_margin: None,
        };
        for p in &out {
            row.max_dev = row.max_dev.max((p.r_t - p.baseline).abs());
            row.max_abs_a = row.max_abs_a.max(p.a.abs());
            row.min_b = row.min_b.min(p.b);
            row.max_b = row.max_b.max(p.b);
            row.sup_xr = row.sup_xr.max(p.xr_t.abs());
        }
        run.check(format!("sync.T{}.rate_bound", fmt_t(t)), row.max_dev <= sync.eps, format!("max |r_T - avg| = {:.3e}, eps = {:.3e}", row.max_dev, sync.eps));
        run.check(
            format!("sync.T{}.structure", fmt_t(t)),
            row.max_abs_a <= 1.0 + 1e-8 && row.min_b >= lo && row.max_b <= hi && row.sup_xr <= row.xr_bound,
            format!("max |A| = {:.4}, B in [{:.3e}, {:.3e}], sup |X r_T| = {:.3e} <= {:.3e}", row.max_abs_a, row.min_b, row.max_b, row.sup_xr, row.xr_bound),
        );
        if !cfg.is_perturbed() {
            run.check(format!("sync.T{}.constant_rate", fmt_t(t)), row.max_dev < 1e-10 && row.sup_xr < 1e-10, format!("deviations {:.2e}, {:.2e}", row.max_dev, row.sup_xr));
        }
        if cfg.synchronize {
            match pipeline(u.clone(), s.clone(), &spec, cfg.sync_params(t), &pts) {
                Ok((_, synced, re)) => {
                    let rate = ExpansionRate::new(synced, re);
                    let m = pts
                        .iter()
                        .map(|p| {
                            let (r, xr) = rate.eval(p.coords);
                            1.0 + r + xr / r
                        })
                        .fold(f64::INFINITY, f64::min);
                    row.tech_margin = Some(m);
                }
                Err(e) => run.warn(format!("T = {t}: pipeline failed: {e}")),
            }
        }
        run.artifact(&format!("sync_T{}.csv", fmt_t(t)), "synchronizer", "sync_family", sync_table(&out)?);
        rows.push(row);
    }
    if cfg.is_perturbed() && rows.len() > 1 {
        let dec = rows.windows(2).all(|w| w[1].sup_xr < w[0].sup_xr);
        let col: Vec<String> = rows.iter().map(|r| format!("{:.3e}", r.sup_xr)).collect();
        run.check("sync.sup_xr_decreasing", dec, col.join(" > "));
    }
    run.artifact("sync_summary.csv", "synchronizer", "sync_family", to_csv(&rows)?);
    run.json("report.json", "synchronizer", "sync_family", &rows)?;
    run.finish()
}

#[derive(Serialize)]
struct IdentityRow {
    point: usize,
    tau: f64,
    lhs: f64,
    rhs: f64,
    w0: f64,
    w1: f64,
    rel_err: f64,
}

#[derive(Serialize)]
struct TauRow {
    probe: &'static str,
    tau: f64,
    holds: bool,
    margin: f64,
    extra: f64,
}

pub fn convexity(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let mut run = Run::new("convexity", cfg);
    let pts = sample(cfg);
    let tol = cfg.contact_tolerances();
    let spec = FlowSpec::new(cfg.model);
    let taus = tau_grid(cfg.convexity.n_tau);
    let cc = &cfg.convexity;
    let (bu, bs) = cfg.base_pair();
    let (pu, _) = cfg.perturbed_pair();

    let h: Scalar = match cfg.model {
        Model::Cat => Arc::new(ExpProfile { rate: 0.0, h: Profile::single(cc.h_amplitude, Shape::Sin) }),
        Model::Sl2 => Arc::new(ConstScalar(cc.h_amplitude.exp())),
    };
    let blend = BlendSpec::new(pu.clone(), h, spec.clone(), &pts)?;
    let mut e3: f64 = 0.0;
    let mut e4: f64 = 0.0;
    let mut rate_rows = vec![];
    let mut ident_rows = vec![];
    for &tau in &taus {
        for r in blend_rate(&blend, tau, &pts)? {
            e3 = e3.max((r.formula - r.direct).abs() / r.direct.abs().max(1.0));
            rate_rows.push(r);
        }
        for r in blend_identity(&blend, tau, &pts)? {
            e4 = e4.max(r.rel_err);
            ident_rows.push(IdentityRow { point: r.index, tau: r.tau, lhs: r.lhs, rhs: r.rhs, w0: r.weights[0], w1: r.weights[1], rel_err: r.rel_err });
        }
    }
    run.check("convexity.blend_rate", e3 <= 1e-7, format!("max discrepancy {e3:.2e}"));
    run.check("convexity.blend_identity", e4 <= 1e-6, format!("max relative discrepancy {e4:.2e}"));
    run.artifact("blend_rate.csv", "convexity_suite", "blend_rate", to_csv(&rate_rows)?);
    run.artifact("blend_identity.csv", "convexity_suite", "blend_identity", to_csv(&ident_rows)?);

    let mut rows: Vec<TauRow> = vec![];
    let (a, b) = match cfg.model {
        Model::Cat => (
            cat_norm(Role::Unstable, Profile::single(cc.endpoint_amplitude, Shape::Sin)),
            cat_norm(Role::Unstable, Profile::single(-cc.endpoint_amplitude, Shape::Sin)),
        ),
        Model::Sl2 => (sl2_norm(Role::Unstable, 0.0), sl2_norm(Role::Unstable, cc.endpoint_amplitude)),
    };
    match convexity_probe(&a, &b, &spec, Level::Strong, &taus, &pts, tol.contact) {
        Ok(v) => {
            run.check("convexity.strong_blend", v.iter().all(|r| r.holds), format!("min margin {:.3e}", v.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min)));
            rows.extend(v.iter().map(|r| TauRow { probe: "strong_blend", tau: r.tau, holds: r.holds, margin: r.margin, extra: 0.0 }));
        }
        Err(e) => run.check("convexity.strong_blend", false, e.to_string()),
    }
    if cfg.is_perturbed() {
        let c = match pu.model {
            Model::Cat => cat_norm(Role::Unstable, Profile::single(-cfg.perturbation.delta_u, Shape::Cos)),
            Model::Sl2 => bu.clone(),
        };
        match convexity_probe(&pu, &c, &spec, Level::Adapted, &taus, &pts, tol.contact) {
            Ok(v) => {
                run.check("convexity.adapted_blend", v.iter().all(|r| r.holds), format!("{} blends", v.len()));
                rows.extend(v.iter().map(|r| TauRow { probe: "adapted_blend", tau: r.tau, holds: r.holds, margin: r.margin, extra: 0.0 }));
            }
            Err(e) => run.check("convexity.adapted_blend", false, e.to_string()),
        }
    }

    // W[alpha_s]: two synchronized norms for the unit-stable flow
    let w_ends = if cfg.model == Model::Cat && cfg.t_grid.len() >= 2 {
        let mut ts = cfg.t_grid.clone();
        ts.sort_by(f64::total_cmp);
        let t1 = ts[ts.len() - 2];
        let t2 = ts[ts.len() - 1];
        let one = pipeline(pu.clone(), bs.clone(), &spec, cfg.sync_params(t1), &pts);
        let two = pipeline(pu.clone(), bs.clone(), &spec, cfg.sync_params(t2), &pts);
        match (one, two) {
            (Ok((_, a, re)), Ok((_, b, _))) => Some((a, b, re)),
            (Err(e), _) | (_, Err(e)) => {
                run.check("convexity.w_alpha_s", false, e.to_string());
                None
            }
        }
    } else if cfg.model == Model::Sl2 {
        Some((sl2_norm(Role::Unstable, 0.0), sl2_norm(Role::Unstable, cc.endpoint_amplitude), spec.clone()))
    } else {
        None
    };
    if let Some((a, b, re)) = w_ends {
        match w_alpha_s_probe(&bs, &a, &b, &re, &taus, &pts, &tol) {
            Ok(v) => {
                let ok = v.iter().all(|r| r.agree && r.inequality != Some(false) && r.strad != Consensus::Disagreement);
                run.check("convexity.w_alpha_s", ok, format!("{} blends", v.len()));
                rows.extend(v.iter().map(|r| TauRow { probe: "w_alpha_s", tau: r.tau, holds: r.inequality == Some(true), margin: r.margin, extra: 0.0 }));
            }
            Err(e) => run.check("convexity.w_alpha_s", false, e.to_string()),
        }
    }

    let g: Scalar = match cfg.model {
        Model::Cat => Arc::new(Profile::single(cc.log_amplitude, Shape::Sin)),
        Model::Sl2 => Arc::new(ConstScalar(cc.log_amplitude)),
    };
    let base = assemble("baseline", bu, bs, spec.clone(), &pts, &tol)?;
    match log_convexity_probe(&base, g, &taus, &pts, &tol) {
        Ok(v) => {
            let aff = v.iter().map(|r| r.affinity).fold(0.0, f64::max);
            run.check("convexity.log_convexity", v.iter().all(|r| r.holds) && aff < 1e-5, format!("affinity residual {aff:.2e}"));
            rows.extend(v.iter().map(|r| TauRow { probe: "log_convexity", tau: r.tau, holds: r.holds, margin: r.margin, extra: r.affinity }));
        }
        Err(e) => run.check("convexity.log_convexity", false, e.to_string()),
    }
    run.artifact("convexity.csv", "convexity_suite", "convexity_probe", to_csv(&rows)?);
    let checks: Vec<Check> = run.checks.clone();
    run.json("report.json", "convexity_suite", "all", &checks)?;
    run.finish()
}

#[derive(Serialize)]
struct LiouvilleRow {
    label: String,
    required: bool,
    min_density: f64,
    at_s: f64,
    at_point: usize,
}

pub fn liouville(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let mut run = Run::new("liouville", cfg);
    let pts = sample(cfg);
    let grid: Vec<f64> = (0..cfg.n_s).map(|k| -1.0 + 2.0 * k as f64 / (cfg.n_s - 1) as f64).collect();
    let mut rows = vec![];
    for b in build_assemblies(cfg, &pts, &mut run) {
        let l = liouville_check(&b.asm, &grid, &pts);
        let label = b.asm.label.clone();
        if b.required {
            run.check(format!("liouville.{label}"), l.min_density > 0.0, format!("min density {:.3e} at s = {}", l.min_density, l.at_s));
        } else if l.min_density <= 0.0 {
            run.warn(format!("{label}: pencil density {:.3e} at s = {} (not required)", l.min_density, l.at_s));
        }
        rows.push(LiouvilleRow { label, required: b.required, min_density: l.min_density, at_s: l.at_s, at_point: l.at_index });
    }
    run.artifact("liouville.csv", "contact_lab", "liouville_check", to_csv(&rows)?);
    run.json("report.json", "contact_lab", "liouville_check", &rows)?;
    run.finish()
}

#[derive(Serialize, Debug)]
pub struct Section {
    pub command: String,
    pub pass: bool,
    pub config_hash: String,
    pub failing: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Serialize, Debug)]
pub struct Summary {
    pub sections: Vec<Section>,
    pub failing_checks: Vec<String>,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.failing_checks.is_empty()
    }
}

pub fn report(cfg: &RunConfig) -> Result<Summary, CliError> {
    let dir = &cfg.output_dir;
    let mut manifests = vec![];
    if dir.is_dir() {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .filter_map(|e| e.ok())
            .map(|e| e.path().join("manifest.json"))
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        for p in entries {
            let text = std::fs::read_to_string(&p).map_err(|e| CliError::Runtime(e.to_string()))?;
            let m: RunManifest = serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
            manifests.push(m);
        }
    }
    let mut sections = vec![];
    let mut failing_checks = vec![];
    for m in manifests {
        let failing: Vec<String> = m.checks.iter().filter(|c| !c.pass).map(|c| c.id.clone()).collect();
        failing_checks.extend(failing.iter().map(|id| format!("{}:{id}", m.command)));
        sections.push(Section { command: m.command.clone(), pass: failing.is_empty(), config_hash: m.config_hash, failing, warnings: m.warnings });
    }
    let summary = Summary { sections, failing_checks };
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(dir.join("report.json"), text).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(summary)
}
