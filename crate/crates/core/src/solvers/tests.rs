use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::kernel::Interactions;
use super::pgd::{euclidean_gradient, from_params, projected_step, to_params};
use super::*;
use crate::energy::{EnergyWeights, Residuals, SceneObjective, FD_STEP};
use crate::liegroup::{so3_log, Pose, Twist};
use crate::surface::generate::torus;
use crate::surface::{PointCloud, Surface, SurfaceParams, TorusSdf};
use crate::testutil::{random_torus_trajectory, rng, small_torus};

/// `V ≡ 0`: only the kernel acts.
struct Flat;
impl Objective for Flat {
    fn residuals(&self, _: &Trajectory) -> Result<Residuals, EnergyError> {
        Ok(Residuals::single(DVector::zeros(0)))
    }
}

/// Rotation-only pull toward fixed targets.
struct RotationToy(Vec<[[f64; 3]; 3]>);
impl Objective for RotationToy {
    fn residuals(&self, traj: &Trajectory) -> Result<Residuals, EnergyError> {
        let mut r = Vec::new();
        for (t, (p, target)) in traj.poses().iter().zip(&self.0).enumerate() {
            let rel: [[f64; 3]; 3] =
                std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| target[k][i] * p.rotation()[k][j]).sum()));
            let w = so3_log(&rel).map_err(|source| EnergyError::Lie { step: t, source })?;
            r.extend_from_slice(&w);
        }
        Ok(Residuals::single(DVector::from_vec(r)))
    }
}

fn random_pose(r: &mut impl Rng, scale: f64) -> Pose {
    Twist::from_array(std::array::from_fn(|_| r.random_range(-scale..scale))).exp()
}

fn random_traj(r: &mut impl Rng, n_t: usize, scale: f64) -> Trajectory {
    Trajectory::new((0..n_t).map(|_| random_pose(r, scale)).collect()).unwrap()
}

fn quiet(method: Method) -> SolverConfig {
    SolverConfig {
        record_timing: false,
        ..SolverConfig::for_method(method)
    }
}

fn scene_with_roi(nodes: &[usize]) -> Surface {
    let pts = torus(1.0, 0.35, 400, 3);
    let mut roi = vec![0.0; pts.len()];
    nodes.iter().for_each(|&i| roi[i] = 1.0);
    let cloud = PointCloud::new(pts, roi).unwrap();
    let sdf = std::sync::Arc::new(TorusSdf { center: [0.0; 3], major: 1.0, minor: 0.35 });
    let params = SurfaceParams {
        n_modes: 12,
        deposit_k: 20,
        ..SurfaceParams::default()
    };
    Surface::build(cloud, sdf, &params, None).unwrap().0
}

#[test]
fn straight_line_init() {
    let s = scene_with_roi(&[5, 77]);
    let traj = init_straight_line(&s, 3).unwrap();
    let (a, b) = (s.cloud().points()[5], s.cloud().points()[77]);
    let ends = [*traj.poses()[0].translation(), *traj.poses()[2].translation()];
    assert!(ends == [a, b] || ends == [b, a]);
    let mid = traj.poses()[1].translation();
    for k in 0..3 {
        assert!((mid[k] - 0.5 * (a[k] + b[k])).abs() < 1e-15);
    }
    for p in traj.poses() {
        assert_eq!(*p.rotation(), [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }

    let s = scene_with_roi(&[3, 10, 200, 311]);
    let traj = init_straight_line(&s, 20).unwrap();
    let pts = s.cloud().points();
    let d = |p: &[f64; 3], q: &[f64; 3]| (0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>();
    let span = d(traj.poses()[0].translation(), traj.poses()[19].translation());
    for &i in &[3, 10, 200, 311] {
        for &j in &[3, 10, 200, 311] {
            assert!(d(&pts[i], &pts[j]) <= span);
        }
    }

    assert!(init_straight_line(&scene_with_roi(&[9]), 10).is_err());
}

#[test]
fn particle_perturbation() {
    let mut r = rng(1);
    let traj = random_traj(&mut r, 8, 1.0);
    let one = perturb_particles(&traj, 1, 0.0, 4).unwrap();
    assert_eq!(one.particles, vec![traj.clone()]);

    let a = perturb_particles(&traj, 6, 0.005, 11).unwrap();
    let b = perturb_particles(&traj, 6, 0.005, 11).unwrap();
    let c = perturb_particles(&traj, 6, 0.005, 12).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.hash(), c.hash());
    assert_eq!(a.particles[0], traj);
    assert!(a.particles[1..].iter().all(|p| p != &traj));
    assert!(perturb_particles(&traj, 3, 0.0, 1).is_err());

    let var = 0.005;
    let mut sum2 = 0.0;
    let mut count = 0usize;
    for i in 1..=100 {
        for t in 0..100 {
            for v in init::noise_twist(7, i, t, var).to_array() {
                sum2 += v * v;
                count += 1;
            }
        }
    }
    let sample = sum2 / count as f64;
    assert!((sample - var).abs() < 0.05 * var, "sample variance {sample}");
}

#[test]
fn kernel_values() {
    let mut r = rng(2);
    let x = random_traj(&mut r, 7, 1.0);
    let l = 0.1;
    assert_eq!(traj_kernel(&x, &x, l).unwrap(), 7.0);

    let mut d: [f64; 6] = std::array::from_fn(|_| r.random_range(-1.0..1.0));
    let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    d.iter_mut().for_each(|v| *v *= l.sqrt() / n);
    let y = x.with_pose(3, x.poses()[3].oplus(&Twist::from_array(d)));
    assert!((traj_kernel(&x, &y, l).unwrap() - (6.0 + (-1.0f64).exp())).abs() < 1e-12);

    for _ in 0..20 {
        let a = random_traj(&mut r, 5, 1.0);
        let b = random_traj(&mut r, 5, 1.0);
        assert!((traj_kernel(&a, &b, 0.7).unwrap() - traj_kernel(&b, &a, 0.7).unwrap()).abs() < 1e-12);
    }
    assert!(traj_kernel(&x, &random_traj(&mut r, 6, 1.0), l).is_err());
}

#[test]
fn kernel_gradient() {
    let mut r = rng(3);
    let x = random_traj(&mut r, 6, 1.0);
    assert_eq!(kernel_grad1(&x, &x, 0.1).unwrap(), DVector::zeros(36));

    let y = x.with_pose(2, random_pose(&mut r, 1.0));
    let g = kernel_grad1(&x, &y, 0.5).unwrap();
    for (i, v) in g.iter().enumerate() {
        assert_eq!(*v != 0.0, i / 6 == 2, "entry {i}");
    }

    for _ in 0..20 {
        let a = random_traj(&mut r, 4, 0.8);
        let b = random_traj(&mut r, 4, 0.8);
        let l = r.random_range(0.3..3.0);
        let g = kernel_grad1(&a, &b, l).unwrap();
        let fd = DVector::from_fn(24, |c, _| {
            let (t, k) = (c / 6, c % 6);
            let mut e = [0.0; 6];
            e[k] = FD_STEP;
            let plus = a.with_pose(t, a.poses()[t].oplus(&Twist::from_array(e)));
            e[k] = -FD_STEP;
            let minus = a.with_pose(t, a.poses()[t].oplus(&Twist::from_array(e)));
            (traj_kernel(&plus, &b, l).unwrap() - traj_kernel(&minus, &b, l).unwrap()) / (2.0 * FD_STEP)
        });
        assert!((&g - &fd).norm() <= 1e-4 * fd.norm(), "{:e}", (&g - &fd).norm() / fd.norm());
    }
}

#[test]
fn svgd_single_particle_and_symmetry() {
    let mut r = rng(4);
    let x = random_traj(&mut r, 5, 1.0);
    let g = DVector::from_fn(30, |_, _| r.random_range(-1.0..1.0));
    let out = svgd_direction(std::slice::from_ref(&x), std::slice::from_ref(&g), 0.1, KernelMode::PerStep).unwrap();
    assert_eq!(out[0], g);
    let out = svgd_direction(std::slice::from_ref(&x), std::slice::from_ref(&g), 0.1, KernelMode::Scalar).unwrap();
    assert_eq!(out[0], &g * 5.0);

    // Mirror images across the xy-plane: translations (x, y, ±z), same gradient
    // mirrored accordingly (reflection of a twist: ω ↦ (−ωx, −ωy, ωz), v ↦ (vx, vy, −vz)).
    let a = Trajectory::new((0..4).map(|t| Pose::from_translation([0.1 * t as f64, 0.2, 0.15])).collect()).unwrap();
    let b = Trajectory::new((0..4).map(|t| Pose::from_translation([0.1 * t as f64, 0.2, -0.15])).collect()).unwrap();
    let mirror = |f: &DVector<f64>| {
        DVector::from_fn(f.len(), |i, _| match i % 6 {
            0 | 1 | 5 => -f[i],
            _ => f[i],
        })
    };
    let ga = DVector::from_fn(24, |_, _| r.random_range(-1.0..1.0));
    let gb = mirror(&ga);
    let out = svgd_direction(&[a, b], &[ga, gb], 0.2, KernelMode::PerStep).unwrap();
    assert!((mirror(&out[0]) - &out[1]).amax() < 1e-12);
}

#[test]
fn svgd_repulsion_separates() {
    let mut r = rng(5);
    for mode in [KernelMode::PerStep, KernelMode::Scalar] {
        for _ in 0..10 {
            let a = random_traj(&mut r, 5, 0.3);
            let b = random_traj(&mut r, 5, 0.3);
            let zero = DVector::zeros(30);
            let out = svgd_direction(&[a.clone(), b.clone()], &[zero.clone(), zero], 0.5, mode).unwrap();
            let mut s = 0.0;
            for t in 0..5 {
                let d = a.poses()[t].ominus(&b.poses()[t]).unwrap();
                s += Twist::from_slice(&out[0].as_slice()[6 * t..6 * t + 6]).dot(&d);
            }
            assert!(s > 0.0);
        }
    }
}

#[test]
fn svgd_rejects_overlap() {
    let mut r = rng(6);
    let a = random_traj(&mut r, 4, 1.0);
    let b = a.with_pose(1, random_pose(&mut r, 1.0));
    let z = DVector::zeros(24);
    let err = svgd_direction(&[a, b], &[z.clone(), z], 0.1, KernelMode::PerStep).unwrap_err();
    assert!(matches!(err, SolverError::Overlap { step: 0, .. }), "{err}");
    assert!(err.to_string().contains("re-noise"));
}

#[test]
fn transport_is_exercised() {
    let mut r = rng(7);
    let ps: Vec<Trajectory> = (0..3).map(|_| random_traj(&mut r, 4, 0.5)).collect();
    let gs: Vec<DVector<f64>> = (0..3).map(|_| DVector::from_fn(24, |_, _| r.random_range(-1.0..1.0))).collect();
    let with = Interactions::compute(&ps, 0.5, true).unwrap().directions(&ps, &gs, KernelMode::PerStep);
    let without = Interactions::compute(&ps, 0.5, false).unwrap().directions(&ps, &gs, KernelMode::PerStep);
    for j in 0..3 {
        assert!((&with[j] - &without[j]).amax() > 1e-6);
    }
    // Pure translations: the adjoint is then the identity on ω and rotates nothing.
    let ps: Vec<Trajectory> = (0..3)
        .map(|i| Trajectory::new((0..4).map(|t| Pose::from_translation([0.1 * i as f64, 0.05 * t as f64, 0.0])).collect()).unwrap())
        .collect();
    let zero_rot: Vec<DVector<f64>> = (0..3)
        .map(|_| DVector::from_fn(24, |i, _| if i % 6 < 3 { 0.0 } else { r.random_range(-1.0..1.0) }))
        .collect();
    let with = Interactions::compute(&ps, 0.5, true).unwrap().directions(&ps, &zero_rot, KernelMode::PerStep);
    let without = Interactions::compute(&ps, 0.5, false).unwrap().directions(&ps, &zero_rot, KernelMode::PerStep);
    for j in 0..3 {
        assert!((&with[j] - &without[j]).amax() < 1e-12);
    }
}

fn random_spd(r: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n + 3, |_, _| r.random_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(n, n) * 1e-3
}

#[test]
fn preconditioner_examples() {
    let mut r = rng(8);
    let x = random_traj(&mut r, 4, 1.0);
    let phi = DVector::from_fn(24, |_, _| r.random_range(-1.0..1.0));
    let eye = vec![DMatrix::identity(24, 24)];
    let a = precondition(&phi, 0, std::slice::from_ref(&x), &eye, 0.1, KernelMode::PerStep).unwrap();
    assert!((&a - &phi).amax() < 1e-14);
    let a = precondition(&phi, 0, std::slice::from_ref(&x), &eye, 0.1, KernelMode::Scalar).unwrap();
    assert!((&a - &phi / 16.0).amax() < 1e-14);

    let ps: Vec<Trajectory> = (0..4).map(|_| random_traj(&mut r, 4, 0.2)).collect();
    let hs = vec![DMatrix::identity(24, 24) * 2.5; 4];
    for mode in [KernelMode::PerStep, KernelMode::Scalar] {
        // No kernel-gradient term: H = cI with a single particle.
        let a = precondition(&phi, 0, &ps[..1], &hs[..1], 0.3, mode).unwrap();
        let cos = a.dot(&phi) / (a.norm() * phi.norm());
        assert!((cos - 1.0).abs() < 1e-12);
    }
    for mode in [KernelMode::PerStep, KernelMode::Scalar] {
        for _ in 0..10 {
            let hs: Vec<DMatrix<f64>> = (0..4).map(|_| random_spd(&mut r, 24)).collect();
            let j = r.random_range(0..4);
            let a_mat = preconditioner_matrix(j, &ps, &hs, 0.3, mode).unwrap();
            let alpha = precondition(&phi, j, &ps, &hs, 0.3, mode).unwrap();
            let res = (&a_mat * &alpha - &phi).norm() / phi.norm();
            assert!(res < 1e-8, "{res:e}");
        }
    }
}

#[test]
fn factorization_fallback() {
    let singular = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 2.0]));
    let x = kernel::spd_solve(singular, &DVector::from_vec(vec![1.0, 1.0, 1.0])).unwrap();
    assert!(x.iter().all(|v| v.is_finite()));
    let negative = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
    assert!(matches!(
        kernel::spd_solve(negative, &DVector::from_vec(vec![1.0, 1.0])),
        Err(SolverError::Factorization)
    ));
}

#[test]
fn clipping_bounds_rotation() {
    let mut f = DVector::from_vec(vec![3.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0]);
    clip_rotation(&mut f, std::f64::consts::FRAC_PI_2);
    assert!((f[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    assert!((f[3] - std::f64::consts::FRAC_PI_2 / 3.0).abs() < 1e-15);
    assert_eq!(f.rows(6, 6), DVector::from_vec(vec![0.1, 0.0, 0.0, 1.0, 0.0, 0.0]));
}

fn torus_problem(n_t: usize) -> (Surface, Trajectory) {
    let s = small_torus();
    let init = init_straight_line(&s, n_t).unwrap();
    (s, init)
}

#[test]
fn gn_fixed_point() {
    let s = small_torus();
    let mut r = rng(9);
    let traj = random_torus_trajectory(&mut r, 8);
    // Zero smoothness/attach/align weights and a matched target leave V ≡ 0 here.
    let c = s.trajectory_coeffs(&traj.positions()).unwrap();
    let s = s.with_target_coeffs(c).unwrap();
    let w = EnergyWeights { smooth: 0.0, align: 0.0, attach: 0.0, ergodic: 0.1 };
    let obj = SceneObjective::new(&s, w);
    let rep = run_gn(&obj, &traj, &quiet(Method::Gn)).unwrap();
    assert!(rep.iterations <= 2);
    assert!(rep.best_energy().total < 1e-8);
    assert_eq!(rep.status, Status::Converged);
}

#[test]
fn gn_descends_on_torus() {
    let (s, init) = torus_problem(12);
    let obj = SceneObjective::new(&s, EnergyWeights::default());
    let rep = run_gn(&obj, &init, &quiet(Method::Gn)).unwrap();
    assert!(rep.trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(rep.trace[0] <= rep.initial.total);
    assert!(rep.best_energy().total * 10.0 <= rep.initial.total);
    assert!(rep.trace.len() <= 200);
    let traj = rep.best_trajectory().unwrap();
    assert!(traj.max_orthogonality_defect() < 1e-9);
    assert_eq!(rep, run_gn(&obj, &init, &quiet(Method::Gn)).unwrap());
}

#[test]
fn batch_gn_degenerates_to_gn() {
    let (s, init) = torus_problem(10);
    let obj = SceneObjective::new(&s, EnergyWeights::default());
    let cfg = SolverConfig {
        n_particles: 1,
        noise_var: 0.0,
        ..quiet(Method::BatchGn)
    };
    let set = perturb_particles(&init, 1, 0.0, 3).unwrap();
    let batch = run_batch_gn(&obj, &set, &cfg).unwrap();
    let gn = run_gn(&obj, &init, &cfg).unwrap();
    assert_eq!(batch.trace, gn.trace);
    assert_eq!(batch.finals, gn.finals);
    assert_eq!(batch.trajectory, gn.trajectory);

    let cfg = SolverConfig {
        n_particles: 4,
        ..quiet(Method::BatchGn)
    };
    let set = perturb_particles(&init, 4, cfg.noise_var, 3).unwrap();
    let batch = run_batch_gn(&obj, &set, &cfg).unwrap();
    assert!(batch.best_energy().total <= batch.finals[0].total);
    assert_eq!(batch.finals[0], gn.finals[0]);
    assert!(batch.trace.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(batch, run_batch_gn(&obj, &set, &cfg).unwrap());
}

#[test]
fn se_single_particle_is_gradient_descent() {
    let (s, init) = torus_problem(8);
    let obj = SceneObjective::new(&s, EnergyWeights::default());
    let cfg = SolverConfig {
        n_particles: 1,
        noise_var: 0.0,
        max_iters: 20,
        step_size: 0.01,
        ..quiet(Method::Se)
    };
    let rep = run_se(&obj, &ParticleSet::single(init.clone()), &cfg).unwrap();
    let mut x = init;
    let mut trace = Vec::new();
    for _ in 0..20 {
        let g = obj.linearize(&x).unwrap().gradient();
        x = x.retract((-g * 0.01).as_slice(), 1.0);
        trace.push(obj.energy(&x).unwrap().total);
    }
    assert_eq!(rep.trajectory, x.to_matrices());
    for (a, b) in rep.trace.iter().zip(&trace) {
        assert!((a - b).abs() <= 1e-12 * b.max(1.0));
    }
}

#[test]
fn se_repulsion_spreads_particles() {
    let mut r = rng(10);
    let a = random_traj(&mut r, 3, 0.2);
    let set = perturb_particles(&a, 2, 0.005, 1).unwrap();
    let mut ps = set.particles.clone();
    let dist = |ps: &[Trajectory]| -> Vec<f64> {
        (0..3).map(|t| ps[0].poses()[t].ominus(&ps[1].poses()[t]).unwrap().norm()).collect()
    };
    let cfg = SolverConfig {
        kernel_length: 0.1,
        step_size: 1e-3,
        ..quiet(Method::Se)
    };
    let mut prev = dist(&ps);
    for _ in 0..50 {
        let (dirs, _) = se_directions(&Flat, &ps, &cfg).unwrap();
        ps = ps.iter().zip(&dirs).map(|(p, d)| p.retract(d.as_slice(), cfg.step_size)).collect();
        let now = dist(&ps);
        for t in 0..3 {
            assert!(now[t] >= prev[t] - 1e-15);
        }
        prev = now;
    }
}

#[test]
fn particle_methods_are_deterministic_and_stay_on_manifold() {
    let (s, init) = torus_problem(8);
    let obj = SceneObjective::new(&s, EnergyWeights::default());
    for method in [Method::Se, Method::Tsvec] {
        let cfg = SolverConfig {
            n_particles: 3,
            max_iters: 15,
            kernel_length: 0.1,
            ..quiet(method)
        };
        let set = perturb_particles(&init, 3, cfg.noise_var, 5).unwrap();
        let a = solve(&obj, &set, &cfg).unwrap();
        let b = solve(&obj, &set, &cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.trace.len(), 15);
        assert_eq!(a.initial, obj.energy(&init).unwrap());
        let best = a.finals[a.best].total;
        assert!(a.finals.iter().all(|f| f.total >= best));
        assert!(a.best_trajectory().unwrap().max_orthogonality_defect() < 1e-9);
    }
}

#[test]
fn tsvec_single_particle_is_gauss_newton() {
    let (s, _) = torus_problem(10);
    let obj = SceneObjective::new(&s, EnergyWeights::default());
    let mut r = rng(11);
    let cfg = quiet(Method::Tsvec);
    for _ in 0..3 {
        let x = random_torus_trajectory(&mut r, 10);
        let (alpha, _) = tsvec_directions(&obj, std::slice::from_ref(&x), &cfg).unwrap();
        let lin = obj.linearize(&x).unwrap();
        let gn = nalgebra::Cholesky::new(lin.gn_hessian()).unwrap().solve(&-lin.gradient());
        assert!((&alpha[0] - &gn).amax() <= 1e-8 * gn.amax());
    }
}

#[test]
fn pgd_projection_and_agreement_with_gn() {
    let mut r = rng(12);
    let targets: Vec<[[f64; 3]; 3]> = (0..4).map(|_| *random_pose(&mut r, 1.0).rotation()).collect();
    let toy = RotationToy(targets.clone());
    let init = Trajectory::new(
        targets
            .iter()
            .map(|t| Pose::new(*t, [0.0; 3]).unwrap().oplus(&Twist::new([0.5, -0.4, 0.3], [0.0; 3])))
            .collect(),
    )
    .unwrap();

    let mut params = to_params(&init);
    let traj = from_params(&params).unwrap();
    let g = euclidean_gradient(&traj, &params, &toy.linearize(&traj).unwrap().gradient());
    for _ in 0..5 {
        params = projected_step(&params, &g, 0.3);
        for p in &params {
            assert!(((p[3] * p[3] + p[4] * p[4] + p[5] * p[5] + p[6] * p[6]).sqrt() - 1.0).abs() < 1e-15);
        }
    }

    let cfg = SolverConfig {
        stop_tol: 1e-14,
        max_iters: 500,
        ..quiet(Method::Pgd)
    };
    let pgd = run_pgd(&toy, &init, &cfg).unwrap();
    assert!(pgd.trace.windows(2).all(|w| w[1] <= w[0]));
    let gn = run_gn(&toy, &init, &SolverConfig { stop_tol: 1e-14, ..quiet(Method::Gn) }).unwrap();
    let (a, b) = (pgd.best_trajectory().unwrap(), gn.best_trajectory().unwrap());
    for t in 0..4 {
        let d = a.poses()[t].ominus(&b.poses()[t]).unwrap();
        let w = (d.to_array()[0].powi(2) + d.to_array()[1].powi(2) + d.to_array()[2].powi(2)).sqrt();
        assert!(w < 1e-3, "step {t}: {w:e}");
    }
}

#[test]
fn pgd_descends_on_torus() {
    let (s, init) = torus_problem(8);
    let obj = SceneObjective::new(&s, EnergyWeights::default());
    let rep = run_pgd(&obj, &init, &SolverConfig { max_iters: 100, ..quiet(Method::Pgd) }).unwrap();
    assert!(rep.trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(rep.best_energy().total < rep.initial.total);
}

#[test]
fn config_validation_and_names() {
    assert!(SolverConfig::default().validate().is_ok());
    assert!(SolverConfig { step_size: 0.0, ..Default::default() }.validate().is_err());
    assert!(SolverConfig { kernel_length: -1.0, ..Default::default() }.validate().is_err());
    assert!(SolverConfig { noise_var: 0.0, ..Default::default() }.validate().is_err());
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
    }
    assert_eq!("Batch-GN".parse::<Method>().unwrap(), Method::BatchGn);
    assert!("lbfgs".parse::<Method>().is_err());
    let json = serde_json::to_string(&SolverConfig::default()).unwrap();
    assert_eq!(serde_json::from_str::<SolverConfig>(&json).unwrap(), SolverConfig::default());
}

