use std::sync::Arc;

use anosov_core::calculus::Calculus;
use anosov_core::contact::{assemble, liouville_check, liouville_density, local, strad_predicates, ContactTolerances};
use anosov_core::convexity::{blend_identity, BlendSpec};
use anosov_core::expansion::{cat_norm, ExpansionRate};
use anosov_core::fields::{fd_scalar_jet, ExpProfile, Profile, Shape};
use anosov_core::flow::Speed;
use anosov_core::model::{deck_vector, normalize_cat};
use anosov_core::sync::{SyncParams, Synchronizer};
use anosov_core::{FlowSpec, Jet, Model, ModelPoint, Role, ScalarField};
use approx::assert_relative_eq;
use nalgebra::Vector3;
use proptest::prelude::*;

fn unit() -> impl Strategy<Value = f64> {
    0.0..1.0f64
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    (unit(), unit(), unit()).prop_map(|(x, y, z)| [x, y, z])
}

fn shape() -> impl Strategy<Value = Shape> {
    prop_oneof![Just(Shape::Sin), Just(Shape::Cos)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scalar_jets_match_finite_differences(p in point(), amp in -0.3..0.3f64, sh in shape()) {
        let f = ExpProfile { rate: 0.7, h: Profile::single(amp, sh) };
        let j = f.jet(&Jet::seed(p, 2));
        let fd = fd_scalar_jet(&|q| f.value(q), p, 1e-4, true);
        for k in 0..3 {
            prop_assert!((j.g[k] - fd.g[k]).abs() < 1e-7 * (1.0 + j.g[k].abs()));
        }
        // plain second differences carry an h^2 error
        prop_assert!((j.hess(2, 2) - fd.hess(2, 2)).abs() < 1e-4 * (1.0 + j.hess(2, 2).abs()));
    }

    #[test]
    fn deck_maps_commute_with_the_flow(p in point(), t in -3.0..3.0f64, v in (-1.0..1.0f64, -1.0..1.0f64)) {
        let spec = FlowSpec::new(Model::Cat);
        let w = Vector3::new(v.0, v.1, 0.0);
        let (q, wq) = spec.pushforward_lifted(p, w, t).unwrap();
        let (np, n) = normalize_cat(q);
        let direct = spec.pushforward(&ModelPoint::new(Model::Cat, p), w, t).unwrap();
        for k in 0..3 {
            let d = (np[k] - direct.0.coords[k]).abs();
            prop_assert!(d < 1e-9 || (d - 1.0).abs() < 1e-9);
        }
        let carried = deck_vector(n, wq);
        prop_assert!((carried - direct.1).norm() < 1e-9 * (1.0 + carried.norm()));
    }

    #[test]
    fn variable_speed_flow_is_a_group(p in point(), s in 0.0..1.5f64, t in 0.0..1.5f64, amp in 0.0..0.4f64) {
        let f = Arc::new(ExpProfile { rate: 0.0, h: Profile::single(amp, Shape::Cos) });
        let spec = FlowSpec { model: Model::Cat, speed: Speed::Field(f) };
        let a = spec.flow_lifted(spec.flow_lifted(p, s).unwrap(), t).unwrap();
        let b = spec.flow_lifted(p, s + t).unwrap();
        prop_assert!((a[2] - b[2]).abs() < 1e-8);
    }

    #[test]
    fn verdicts_survive_constant_rescaling(k in -2.0..2.0f64, d in prop_oneof![Just(0.0), Just(0.01), Just(0.05)], seed in 0u64..1000) {
        let tol = ContactTolerances::default();
        let sample = anosov_core::sampling::sample_points(Model::Cat, 24, seed);
        let asm = assemble("p", cat_norm(Role::Unstable, Profile::single(d, Shape::Sin)), cat_norm(Role::Stable, Profile::zero()), FlowSpec::new(Model::Cat), &sample, &tol).unwrap();
        let a = strad_predicates(&asm, &sample, &tol);
        let b = strad_predicates(&asm.rescaled(k), &sample, &tol);
        for (x, y) in a.samples.iter().zip(&b.samples) {
            prop_assert_eq!(x.truth, y.truth);
            prop_assert_eq!(x.reeb, y.reeb);
        }
        prop_assert_eq!(a.consensus, b.consensus);
    }

    #[test]
    fn equivalences_agree(d in 0.0..0.08f64, sh in shape(), seed in 0u64..1000) {
        let tol = ContactTolerances::default();
        let sample = anosov_core::sampling::sample_points(Model::Cat, 24, seed);
        let asm = assemble("p", cat_norm(Role::Unstable, Profile::single(d, sh)), cat_norm(Role::Stable, Profile::zero()), FlowSpec::new(Model::Cat), &sample, &tol).unwrap();
        let rep = strad_predicates(&asm, &sample, &tol);
        prop_assert_eq!(rep.n_disagree, 0);
        prop_assert_eq!(rep.n_orientation_mismatch, 0);
        prop_assert!(rep.max_reebquad <= 1e-7);
    }

    #[test]
    fn liouville_density_in_terms_of_rates(d in -0.08..0.08f64, ds in -0.05..0.05f64, s in -1.0..=1.0f64, p in point()) {
        let tol = ContactTolerances::default();
        let pts = [ModelPoint::new(Model::Cat, p)];
        let u = cat_norm(Role::Unstable, Profile::single(d, Shape::Sin));
        let st = cat_norm(Role::Stable, Profile::single(ds, Shape::Cos));
        let spec = FlowSpec::new(Model::Cat);
        let asm = assemble("p", u.clone(), st.clone(), spec.clone(), &pts, &tol).unwrap();
        let dens = liouville_density(&local(&asm, p), s);
        let f = Model::Cat.frame_data();
        let on_frame = dens * nalgebra::Matrix3::from_columns(&[f.x, f.e_s, f.e_u]).determinant();
        let (ru, xru) = ExpansionRate::new(u.clone(), spec.clone()).eval(p);
        let (rs, xrs) = ExpansionRate::new(st.clone(), spec).eval(p);
        let (pu, qs) = (ru * ru + xru, rs * rs + xrs);
        let unit = u.on_direction(p) * st.on_direction(p);
        let oracle = 2.0 * unit * ((1.0 - s) * (pu * (1.0 - rs) - qs * (1.0 - ru)) + (1.0 + s) * (ru - rs));
        prop_assert!((on_frame - oracle).abs() < 1e-9 * (1.0 + oracle.abs()), "{} vs {}", on_frame, oracle);
    }

    #[test]
    fn weighted_average_identity(tau in 0.0..=1.0f64, amp in -0.2..0.2f64, p in point()) {
        let pts = [ModelPoint::new(Model::Cat, p)];
        let h = Arc::new(ExpProfile { rate: 0.0, h: Profile::single(amp, Shape::Sin) });
        let bs = BlendSpec::new(cat_norm(Role::Unstable, Profile::single(0.03, Shape::Cos)), h, FlowSpec::new(Model::Cat), &pts).unwrap();
        let row = blend_identity(&bs, tau, &pts).unwrap()[0];
        prop_assert!(row.rel_err < 1e-9);
        assert_relative_eq!(row.weights[0] + row.weights[1], 1.0, epsilon = 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn synchronization_stays_in_bounds(p in point(), t in 0.5..3.0f64, d in 0.0..0.06f64) {
        let sample = anosov_core::sampling::sample_points(Model::Cat, 16, 3);
        let nf = cat_norm(Role::Unstable, Profile::single(d, Shape::Sin));
        let s = Synchronizer::new(nf, FlowSpec::new(Model::Cat), SyncParams::window(t), &sample).unwrap();
        let out = s.eval(&ModelPoint::new(Model::Cat, p)).unwrap();
        prop_assert!(out.a.abs() <= 1.0 + 1e-8);
        prop_assert!((out.r_t - out.baseline).abs() <= s.eps * (1.0 + 1e-9));
        prop_assert!(out.b > 0.0);
    }
}

#[test]
fn lie_derivative_of_a_rate_matches_its_flow_derivative() {
    let rate = ExpansionRate::new(cat_norm(Role::Unstable, Profile::single(0.05, Shape::Sin)), FlowSpec::new(Model::Cat));
    let calc = Calculus::new(Model::Cat);
    let p = [0.3, 0.6, 0.45];
    let s = Jet::seed(p, 1);
    let xr = calc.deriv(&rate.spec.vector_jet(&s), &rate.jet(&s)).v;
    let h = 1e-4;
    let f = |dz: f64| rate.eval([p[0], p[1], p[2] + dz]).0;
    assert_relative_eq!(xr, (f(h) - f(-h)) / (2.0 * h), epsilon = 1e-6);
}

#[test]
fn strong_adaptation_alone_does_not_give_a_liouville_pencil() {
    let tol = ContactTolerances::default();
    let sample = anosov_core::sampling::sample_points(Model::Cat, 200, 0);
    let asm = assemble("p", cat_norm(Role::Unstable, Profile::single(0.036, Shape::Sin)), cat_norm(Role::Stable, Profile::zero()), FlowSpec::new(Model::Cat), &sample, &tol).unwrap();
    assert!(strad_predicates(&asm, &sample, &tol).is_true());
    let l = liouville_check(&asm, &[-1.0, 0.0, 1.0], &sample);
    assert!(l.min_density < 0.0 && l.at_s == -1.0, "{l:?}");
}
