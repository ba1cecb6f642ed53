//! Synchronization of a norm on an invariant line bundle.
//!
//! For a window `T` the averaged rate `avg(u) = (1/T) int_u^{u+T} r` is the
//! log-growth of the norm over `[u, u+T]` divided by `T`. With
//! `S_t = exp(eps t + int_0^t avg)` and `Q_t = exp(-eps t + int_0^t avg)` the
//! synchronized norm at `p` is `|v|_T^2 = int_0^inf |X^t v|^2 / S_t^2 dt +
//! int_-inf^0 |X^t v|^2 / Q_t^2 dt`, for `v` the unit vector of the original
//! norm. Its rate is `r_T = eps A_T + avg(0)` with `B_T = 1 / |v|_T^2` and
//! `A_T = (I_S - I_Q) / (I_S + I_Q)`, and its derivative along the flow is
//! `2 eps^2 + (r(T) - r(0)) / T - 2 eps B_T - 2 eps^2 A_T^2`.
//!
//! Norms are evaluated along the orbit through the exact bundle cocycle of
//! the model, so no tangent vector is iterated over long times.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::expansion::{ExpansionRate, NormForm};
use crate::fields::{Composable, OneForm, J3};
use crate::flow::{orbit_integral, FlowSpec, Role};
use crate::jet::{self, Jet};
use crate::model::{Model, ModelPoint};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SyncParams {
    /// Averaging window.
    pub t: f64,
    /// Overrides the default `exp(-T osc)`.
    pub eps: Option<f64>,
    /// Overrides the sampled oscillation of the rate.
    pub osc: Option<f64>,
    /// Target size of the neglected tail, relative to the integrals.
    pub tol_trunc: f64,
    /// Largest quadrature step.
    pub quad_step: f64,
    /// Upper bound on the truncation horizon.
    pub t_max: f64,
    /// Step of the finite-difference cross-checks along the flow.
    pub fd_step: f64,
}

impl Default for SyncParams {
    fn default() -> Self {
        SyncParams { t: 1.0, eps: None, osc: None, tol_trunc: 1e-10, quad_step: 1e-2, t_max: 1e5, fd_step: 1e-3 }
    }
}

impl SyncParams {
    pub fn window(t: f64) -> SyncParams {
        SyncParams { t, ..SyncParams::default() }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, PartialEq, Eq)]
pub struct SyncFlags {
    /// The truncation horizon hit `t_max`.
    pub horizon_capped: bool,
    /// The rate quadrature and the log-norm difference disagree on the baseline.
    pub baseline_mismatch: bool,
}

impl SyncFlags {
    pub fn label(&self) -> String {
        let mut v = vec![];
        if self.horizon_capped {
            v.push("horizon_capped");
        }
        if self.baseline_mismatch {
            v.push("baseline_mismatch");
        }
        if v.is_empty() {
            "ok".into()
        } else {
            v.join("|")
        }
    }
}

/// Synchronization output at one point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SyncPoint {
    pub point: [f64; 3],
    pub t: f64,
    pub eps: f64,
    pub i_s: f64,
    pub i_q: f64,
    pub b: f64,
    pub a: f64,
    pub r_t: f64,
    /// `(1/T) int_0^T r` by quadrature of the rate.
    pub baseline: f64,
    pub xr_t: f64,
    /// Original rate and its derivative at the point.
    pub r: f64,
    pub xr: f64,
    /// Original rate at `X^T p`.
    pub r_end: f64,
    pub horizon: f64,
    pub flags: SyncFlags,
}

impl SyncPoint {
    /// `g_T = -1/2 ln B_T`, so that the synchronized form is `exp(g_T) alpha`.
    pub fn log_factor(&self) -> f64 {
        -0.5 * self.b.ln()
    }
}

/// One synchronization run: a norm form, a flow and a window with its
/// family constants `eps` and `osc`.
pub struct Synchronizer {
    pub rate: ExpansionRate,
    pub params: SyncParams,
    pub eps: f64,
    pub osc: f64,
    cache: Mutex<HashMap<[u64; 3], SyncPoint>>,
}

impl std::fmt::Debug for Synchronizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Synchronizer(T = {}, eps = {:.3e}, osc = {:.3e})", self.params.t, self.eps, self.osc)
    }
}

/// `max r - min r` over the sample.
pub fn rate_oscillation(rate: &ExpansionRate, sample: &[ModelPoint]) -> f64 {
    let (lo, hi) = sample.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let r = rate.eval(p.coords).0;
        (lo.min(r), hi.max(r))
    });
    if sample.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

impl Synchronizer {
    pub fn new(nf: NormForm, spec: FlowSpec, params: SyncParams, sample: &[ModelPoint]) -> Result<Synchronizer> {
        if !(params.t >= 0.0 && params.t.is_finite()) {
            return Err(LabError::Config(format!("window must be non-negative, got {}", params.t)));
        }
        if nf.model != spec.model {
            return Err(LabError::Config("norm form and flow live on different models".into()));
        }
        let rate = ExpansionRate::new(nf, spec);
        let osc = match params.osc {
            Some(o) => o,
            None => rate_oscillation(&rate, sample),
        };
        let eps = params.eps.unwrap_or((-params.t * osc).exp());
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(LabError::Config(format!("eps must be positive, got {eps}")));
        }
        Ok(Synchronizer { rate, params, eps, osc, cache: Mutex::new(HashMap::new()) })
    }

    pub fn nf(&self) -> &NormForm {
        &self.rate.nf
    }

    pub fn spec(&self) -> &FlowSpec {
        &self.rate.spec
    }

    /// Whether `T osc` exceeds the range where the construction is well conditioned.
    pub fn ill_conditioned(&self) -> bool {
        self.params.t * self.osc > 6.0
    }

    /// Truncation horizon and whether it was capped.
    pub fn horizon(&self) -> (f64, bool) {
        let want = ((1.0 / self.params.tol_trunc).ln() + self.params.t * self.osc) / (2.0 * self.eps);
        if want > self.params.t_max {
            (self.params.t_max, true)
        } else {
            (want, false)
        }
    }

    /// Evaluate the synchronized norm at a point.
    pub fn eval(&self, p: &ModelPoint) -> Result<SyncPoint> {
        let key = p.coords.map(f64::to_bits);
        if let Some(s) = self.cache.lock().unwrap().get(&key) {
            return Ok(*s);
        }
        let s = self.compute(p)?;
        self.cache.lock().unwrap().insert(key, s);
        Ok(s)
    }

    fn compute(&self, p: &ModelPoint) -> Result<SyncPoint> {
        let nf = self.nf();
        let spec = self.spec();
        let (r0, xr0) = self.rate.eval(p.coords);
        if self.params.t == 0.0 {
            return Ok(SyncPoint {
                point: p.coords,
                t: 0.0,
                eps: self.eps,
                i_s: f64::NAN,
                i_q: f64::NAN,
                b: 1.0,
                a: 0.0,
                r_t: r0,
                baseline: r0,
                xr_t: xr0,
                r: r0,
                xr: xr0,
                r_end: r0,
                horizon: 0.0,
                flags: SyncFlags::default(),
            });
        }
        let t_win = self.params.t;
        let eps = self.eps;
        // the weight decays like exp(-2 eps t); keep 2 eps h small
        let step = self.params.quad_step.min(5e-4 / eps);
        let mut m = (t_win / step).ceil().max(2.0) as i64;
        if m % 2 == 1 {
            m += 1;
        }
        let h = t_win / m as f64;
        let (t_star, capped) = self.horizon();
        let mut n = (t_star / h).ceil() as i64;
        if n % 2 == 1 {
            n += 1;
        }
        let k_lo = -n - 1;
        let k_hi = n + 1 + m;
        let grid = spec.orbit_grid(p, h, k_lo, k_hi)?;
        let sign = nf.role.sign();
        let a0 = nf.on_direction(p.coords).abs().ln();
        let off = (-k_lo) as usize;
        let lognorm: Vec<f64> = grid
            .iter()
            .map(|s| sign * s.log_mult_u + nf.on_direction(s.point).abs().ln() - a0)
            .collect();
        if lognorm.iter().any(|v| !v.is_finite()) {
            return Err(LabError::NonFinite(format!("log-norm along the orbit of {:?}", p.coords)));
        }
        // windowed averages on k in -n-1 ..= n+1
        let avg = |k: i64| -> f64 {
            let i = (k + off as i64) as usize;
            (lognorm[i + m as usize] - lognorm[i]) / t_win
        };
        let ln_at = |k: i64| lognorm[(k + off as i64) as usize];
        // cumulative int_0^{t_k} avg with the four-point rule
        let mut cum_f = vec![0.0; n as usize + 1];
        for k in 0..n {
            let step = h / 24.0 * (-avg(k - 1) + 13.0 * avg(k) + 13.0 * avg(k + 1) - avg(k + 2));
            cum_f[k as usize + 1] = cum_f[k as usize] + step;
        }
        let mut cum_b = vec![0.0; n as usize + 1];
        for k in 0..n {
            // interval [t_{-k-1}, t_{-k}]
            let j = -k - 1;
            let step = h / 24.0 * (-avg(j - 1) + 13.0 * avg(j) + 13.0 * avg(j + 1) - avg(j + 2));
            cum_b[k as usize + 1] = cum_b[k as usize] - step;
        }
        let simpson = |f: &dyn Fn(usize) -> f64| -> f64 {
            let mut acc = f(0) + f(n as usize);
            for i in 1..n as usize {
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i);
            }
            acc * h / 3.0
        };
        let g_s = |k: usize| 2.0 * ln_at(k as i64) - 2.0 * (eps * k as f64 * h + cum_f[k]);
        let g_q = |k: usize| 2.0 * ln_at(-(k as i64)) - 2.0 * (eps * k as f64 * h + cum_b[k]);
        let i_s = simpson(&|k| g_s(k).exp()) + g_s(n as usize).exp() / (2.0 * eps);
        let i_q = simpson(&|k| g_q(k).exp()) + g_q(n as usize).exp() / (2.0 * eps);
        let total = i_s + i_q;
        if !(total.is_finite() && total > 0.0) {
            return Err(LabError::NonFinite(format!("synchronized norm at {:?}", p.coords)));
        }
        let b = 1.0 / total;
        let a = (i_s - i_q) / total;
        let avg0 = avg(0);
        let r_t = eps * a + avg0;
        // baseline by quadrature of the rate on the window
        let rate_at = |i: usize| self.rate.eval(grid[off + i].point).0;
        let mut base = rate_at(0) + rate_at(m as usize);
        for i in 1..m as usize {
            base += if i % 2 == 1 { 4.0 } else { 2.0 } * rate_at(i);
        }
        let baseline = base * h / 3.0 / t_win;
        let r_end = self.rate.eval(grid[off + m as usize].point).0;
        let xr_t = 2.0 * eps * eps + (r_end - r0) / t_win - 2.0 * eps * b - 2.0 * eps * eps * a * a;
        let flags = SyncFlags { horizon_capped: capped, baseline_mismatch: (baseline - avg0).abs() > 1e-8 };
        Ok(SyncPoint {
            point: p.coords,
            t: t_win,
            eps,
            i_s,
            i_q,
            b,
            a,
            r_t,
            baseline,
            xr_t,
            r: r0,
            xr: xr0,
            r_end,
            horizon: n as f64 * h,
            flags,
        })
    }

    /// Evaluate over a sample in parallel; results keep the sample order.
    pub fn eval_all(&self, sample: &[ModelPoint]) -> Result<Vec<SyncPoint>> {
        sample.par_iter().map(|p| self.eval(p)).collect()
    }

    /// Central differences along the flow of `g_T` and `r_T`, to compare
    /// with the closed forms for `r_T` and `X r_T`.
    pub fn fd_check(&self, p: &ModelPoint) -> Result<FdCheck> {
        let dk = self.params.fd_step;
        let spec = self.spec();
        let here = self.eval(p)?;
        let fwd = self.eval(&spec.flow(p, dk)?)?;
        let bwd = self.eval(&spec.flow(p, -dk)?)?;
        let dg = (fwd.log_factor() - bwd.log_factor()) / (2.0 * dk);
        let r_fd = here.r + dg;
        let xr_fd = (fwd.r_t - bwd.r_t) / (2.0 * dk);
        Ok(FdCheck { r_closed: here.r_t, r_fd, xr_closed: here.xr_t, xr_fd })
    }

    /// The synchronized norm form `exp(g_T) alpha` as a field.
    pub fn synchronized_form(self: &Arc<Self>) -> SynchronizedForm {
        SynchronizedForm { sync: self.clone() }
    }

    pub fn synchronized_norm(self: &Arc<Self>) -> NormForm {
        NormForm::new(self.nf().model, self.nf().role, Arc::new(self.synchronized_form()))
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FdCheck {
    pub r_closed: f64,
    pub r_fd: f64,
    pub xr_closed: f64,
    pub xr_fd: f64,
}

/// `int_0^t r(X^s p) ds` by nested quadrature of the rate.
pub fn log_cocycle(rate: &ExpansionRate, p: &ModelPoint, t: f64) -> Result<f64> {
    orbit_integral(&|q: &ModelPoint| Ok(rate.eval(q.coords).0), &rate.spec, p, t, 2e-3)
}

/// `exp(g_T) alpha` with `g_T = -1/2 ln B_T`. Jets of `g_T` up to second order
/// come from `g_T`, `X g_T = r_T - r` and `X X g_T = X r_T - X r`; this needs
/// data that depends on the height only (always true on the frame model).
pub struct SynchronizedForm {
    pub sync: Arc<Synchronizer>,
}

impl SynchronizedForm {
    fn log_factor_jet(&self, p: [f64; 3]) -> Result<Jet> {
        let model = self.sync.nf().model;
        let np = model.normalize(p);
        let s = self.sync.eval(&np)?;
        let g = s.log_factor();
        if model == Model::Sl2 {
            return Ok(Jet::constant(g));
        }
        let spec = self.sync.spec();
        let seeds = Jet::seed(np.coords, 2);
        let f = spec.speed_field().jet(&seeds);
        let a = self.sync.nf().form.jet(&seeds);
        let transverse = |j: &Jet| j.g[0].abs() + j.g[1].abs() + j.hess(0, 0).abs() + j.hess(1, 1).abs() + j.hess(0, 1).abs();
        if transverse(&f) > 0.0 || a.iter().any(|c| transverse(c) > 1e-14 * (1.0 + c.v.abs())) {
            return Err(LabError::Unsupported("synchronized form jets need height-only norm and speed".into()));
        }
        let xg = s.r_t - s.r;
        let xxg = s.xr_t - s.xr;
        let gz = xg / f.v;
        let gzz = (xxg - f.v * f.g[2] * gz) / (f.v * f.v);
        let mut out = Jet::constant(g);
        out.order = 2;
        out.g[2] = gz;
        out.h[5] = gzz;
        Ok(out)
    }
}

impl OneForm for SynchronizedForm {
    fn jet(&self, q: &J3) -> J3 {
        let p = Jet::point(q);
        let g = match self.log_factor_jet(p) {
            Ok(g) => g,
            Err(_) => Jet::constant(f64::NAN),
        };
        let g = if Jet::is_identity_seed(q) { g.with_order(Jet::min_order(q)) } else { g.compose_with(q) };
        jet::scale3(&self.sync.nf().form.jet(q), g.exp())
    }
    fn value(&self, p: [f64; 3]) -> [f64; 3] {
        let np = self.sync.nf().model.normalize(p);
        let g = self.sync.eval(&np).map(|s| s.log_factor()).unwrap_or(f64::NAN);
        self.sync.nf().form.value(p).map(|c| c * g.exp())
    }
}

/// Synchronize the unstable norm, reparametrize so that the stable rate is
/// `-1`, and return the synchronized pair with the new flow.
pub fn pipeline(
    alpha_u: NormForm,
    alpha_s: NormForm,
    spec: &FlowSpec,
    params: SyncParams,
    sample: &[ModelPoint],
) -> Result<(Arc<Synchronizer>, NormForm, FlowSpec)> {
    if alpha_u.role != Role::Unstable || alpha_s.role != Role::Stable {
        return Err(LabError::Precondition("pipeline takes an unstable and a stable norm form".into()));
    }
    let re = crate::expansion::reparametrize_unit_stable(&alpha_s, spec, sample)?;
    let sync = Arc::new(Synchronizer::new(alpha_u, re.clone(), params, sample)?);
    let synced = sync.synchronized_norm();
    Ok((sync, synced, re))
}
