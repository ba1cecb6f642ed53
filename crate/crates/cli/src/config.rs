use std::path::{Path, PathBuf};

use anosov_core::contact::ContactTolerances;
use anosov_core::expansion::{cat_norm, sl2_norm, NormForm};
use anosov_core::fields::{Profile, Shape};
use anosov_core::sync::SyncParams;
use anosov_core::{Model, Role};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Perturbation {
    pub delta_u: f64,
    pub shape_u: Shape,
    pub delta_s: f64,
    pub shape_s: Shape,
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation { delta_u: 0.05, shape_u: Shape::Sin, delta_s: 0.0, shape_s: Shape::Sin }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub tol_contact: f64,
    pub tol_margin: f64,
    pub tol_reebquad: f64,
    pub tol_trunc: f64,
    pub quad_step: f64,
    pub fd_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { tol_contact: 1e-9, tol_margin: 1e-6, tol_reebquad: 1e-7, tol_trunc: 1e-10, quad_step: 1e-2, fd_step: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvexityConfig {
    /// Amplitude of `ln h` for the blend identities.
    pub h_amplitude: f64,
    /// Endpoints `e^{+-a sin 2 pi z}` of the strong blend.
    pub endpoint_amplitude: f64,
    /// `g = a sin 2 pi z` for the log-convexity probe.
    pub log_amplitude: f64,
    pub n_tau: usize,
}

impl Default for ConvexityConfig {
    fn default() -> Self {
        ConvexityConfig { h_amplitude: 0.1, endpoint_amplitude: 0.01, log_amplitude: 0.01, n_tau: 11 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: Model,
    pub perturbation: Perturbation,
    /// Repair the perturbed pair by synchronization (with unit stable rate).
    pub synchronize: bool,
    pub t_grid: Vec<f64>,
    pub eps_override: Option<f64>,
    pub tolerances: Tolerances,
    pub samples: usize,
    pub seed: u64,
    pub n_s: usize,
    pub convexity: ConvexityConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: Model::Cat,
            perturbation: Perturbation::default(),
            synchronize: true,
            t_grid: vec![1.0, 2.0, 4.0, 8.0],
            eps_override: None,
            tolerances: Tolerances::default(),
            samples: 1000,
            seed: 1,
            n_s: 21,
            convexity: ConvexityConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let t = &self.tolerances;
        let tols = [t.tol_contact, t.tol_margin, t.tol_reebquad, t.tol_trunc, t.quad_step, t.fd_step];
        if tols.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(CliError::Usage("all tolerances must be positive".into()));
        }
        if self.samples == 0 {
            return Err(CliError::Usage("samples must be positive".into()));
        }
        if self.t_grid.is_empty() || self.t_grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(CliError::Usage("t_grid must be a non-empty list of positive windows".into()));
        }
        if let Some(e) = self.eps_override {
            if !(e > 0.0 && e.is_finite()) {
                return Err(CliError::Usage("eps_override must be positive".into()));
            }
        }
        if self.n_s < 2 || self.convexity.n_tau < 2 {
            return Err(CliError::Usage("n_s and convexity.n_tau need at least two points".into()));
        }
        Ok(())
    }

    pub fn contact_tolerances(&self) -> ContactTolerances {
        ContactTolerances { contact: self.tolerances.tol_contact, margin: self.tolerances.tol_margin, reebquad: self.tolerances.tol_reebquad }
    }

    pub fn sync_params(&self, t: f64) -> SyncParams {
        SyncParams {
            t,
            eps: self.eps_override,
            tol_trunc: self.tolerances.tol_trunc,
            quad_step: self.tolerances.quad_step,
            fd_step: self.tolerances.fd_step,
            ..SyncParams::default()
        }
    }

    pub fn is_perturbed(&self) -> bool {
        self.model == Model::Cat && (self.perturbation.delta_u != 0.0 || self.perturbation.delta_s != 0.0)
    }

    /// The unperturbed pair.
    pub fn base_pair(&self) -> (NormForm, NormForm) {
        match self.model {
            Model::Cat => (cat_norm(Role::Unstable, Profile::zero()), cat_norm(Role::Stable, Profile::zero())),
            Model::Sl2 => (sl2_norm(Role::Unstable, 0.0), sl2_norm(Role::Stable, 0.0)),
        }
    }

    /// The configured pair; equal to the base pair on the frame model.
    pub fn perturbed_pair(&self) -> (NormForm, NormForm) {
        match self.model {
            Model::Cat => {
                let p = &self.perturbation;
                (
                    cat_norm(Role::Unstable, Profile::single(p.delta_u, p.shape_u)),
                    cat_norm(Role::Stable, Profile::single(p.delta_s, p.shape_s)),
                )
            }
            Model::Sl2 => self.base_pair(),
        }
    }

    /// Canonical JSON used for the manifest hash; the output directory is left out.
    pub fn canonical_json(&self) -> String {
        let cfg = RunConfig { output_dir: PathBuf::new(), ..self.clone() };
        serde_json::to_string(&cfg).expect("config serializes")
    }
}
