//! Independent oracles shared by the property suites and the acceptance
//! target. Each check returns `Ok(detail)` or `Err(detail)`.

#![allow(dead_code)]

use coop_loc::kalman::GpsModel;
use coop_loc::linalg::min_eigenvalue4;
use coop_loc::sci::{self, GpsSplitRule, OmegaObjective, OmegaSearch, OMEGA_CLAMP};
use coop_loc::types::{position, CovMat, SplitEstimate, StateVec};
use coop_loc::unscented::{make_sigma_points, unscented_transform, UtParams};
use nalgebra::{SMatrix, SVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec<const D: usize>(rng: &mut ChaCha8Rng) -> SVector<f64, D> {
    SVector::from_fn(|_, _| rng.sample(StandardNormal))
}

/// `M Mᵀ + floor·I` with Gaussian `M` scaled by `scale`.
pub fn random_spd<const D: usize>(
    rng: &mut ChaCha8Rng,
    scale: f64,
    floor: f64,
) -> SMatrix<f64, D, D> {
    let m = SMatrix::<f64, D, D>::from_fn(|_, _| scale * rng.sample::<f64, _>(StandardNormal));
    let s = m * m.transpose() + SMatrix::<f64, D, D>::identity() * floor;
    (s + s.transpose()) * 0.5
}

pub fn random_split(rng: &mut ChaCha8Rng) -> SplitEstimate {
    SplitEstimate {
        state: normal_vec::<4>(rng) * 5.0,
        p_dep: {
            let scale = rng.random_range(0.2..2.0);
            random_spd(rng, scale, 0.05)
        },
        p_ind: {
            let scale = rng.random_range(0.2..2.0);
            random_spd(rng, scale, 0.05)
        },
    }
}

fn rel_err<const R: usize, const C: usize>(
    got: &SMatrix<f64, R, C>,
    want: &SMatrix<f64, R, C>,
) -> f64 {
    (got - want).norm() / want.norm().max(1e-300)
}

/// UT through random affine maps must reproduce the closed form, and the
/// sigma set must reconstruct its generating moments.
pub fn ut_exactness(instances: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let params = UtParams::default();
    let mut worst_mean = 0.0f64;
    let mut worst_cov = 0.0f64;
    for i in 0..instances {
        let x = normal_vec::<4>(&mut rng) * 10.0;
        let scale = rng.random_range(0.1..3.0);
        let p = random_spd::<4>(&mut rng, scale, 1e-3);
        let sigma = make_sigma_points(&x, &p, &params).map_err(|e| format!("instance {i}: {e}"))?;

        let wsum: f64 = sigma.w_mean.iter().sum();
        if (wsum - 1.0).abs() > 1e-12 {
            return Err(format!("instance {i}: mean weights sum to {wsum}"));
        }
        let mean: SVector<f64, 4> = sigma
            .points
            .iter()
            .zip(&sigma.w_mean)
            .map(|(pt, w)| pt * *w)
            .sum();
        if (mean - x).norm() > 1e-9 * x.norm().max(1.0) {
            return Err(format!(
                "instance {i}: sigma mean off by {}",
                (mean - x).norm()
            ));
        }
        let cov: CovMat = sigma
            .points
            .iter()
            .zip(&sigma.w_cov)
            .map(|(pt, w)| (pt - x) * (pt - x).transpose() * *w)
            .sum();
        if rel_err(&cov, &p) > 1e-8 {
            return Err(format!(
                "instance {i}: sigma covariance rel err {}",
                rel_err(&cov, &p)
            ));
        }
        for k in 0..4 {
            let mid = (sigma.points[1 + k] + sigma.points[5 + k]) * 0.5;
            if (mid - x).norm() > 1e-9 * x.norm().max(1.0) {
                return Err(format!(
                    "instance {i}: points {} and {} not symmetric",
                    1 + k,
                    5 + k
                ));
            }
        }

        let a = SMatrix::<f64, 3, 4>::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let b = normal_vec::<3>(&mut rng);
        let (m, c) = unscented_transform(&sigma, |v: &SVector<f64, 4>| a * v + b)
            .map_err(|e| format!("instance {i}: {e}"))?;
        let want_m = a * x + b;
        let want_c = a * p * a.transpose();
        worst_mean = worst_mean.max(rel_err(&m, &want_m));
        worst_cov = worst_cov.max(rel_err(&c, &want_c));
    }
    let detail =
        format!("{instances} instances, worst rel err mean {worst_mean:.1e} cov {worst_cov:.1e}");
    if worst_mean <= 1e-8 && worst_cov <= 1e-8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Gain-form fusion of fully independent pairs against the information form
/// written out here from scratch.
pub fn information_equivalence(pairs: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for i in 0..pairs {
        let pa = random_spd::<4>(&mut rng, 1.0, 0.05);
        let pb = random_spd::<4>(&mut rng, 1.0, 0.05);
        let a = SplitEstimate::independent(normal_vec::<4>(&mut rng) * 5.0, pa);
        let b = SplitEstimate::independent(normal_vec::<4>(&mut rng) * 5.0, pb);
        let fused = sci::fuse(&a, &b).map_err(|e| format!("pair {i}: {e}"))?;

        let ia = pa.try_inverse().ok_or("singular test matrix")?;
        let ib = pb.try_inverse().ok_or("singular test matrix")?;
        let p = (ia + ib).try_inverse().ok_or("singular test matrix")?;
        let x = p * (ia * a.state + ib * b.state);
        worst = worst
            .max(rel_err(&fused.total(), &p))
            .max(rel_err(&fused.state, &x))
            .max(rel_err(&fused.p_ind, &p));
    }
    let detail = format!("{pairs} pairs, worst rel err {worst:.1e}");
    if worst <= 1e-8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Brute-force argmin of the fused position log-determinant on a 1e-4 grid.
pub fn brute_force_omega(a: &SplitEstimate, b: &SplitEstimate) -> f64 {
    let objective = |w: f64| {
        let p1 = a.p_dep / w + a.p_ind;
        let p2 = b.p_dep / (1.0 - w) + b.p_ind;
        let k = p1 * (p1 + p2).try_inverse().expect("invertible");
        let p = (CovMat::identity() - k) * p1;
        p.fixed_view::<2, 2>(0, 0).determinant().ln()
    };
    let steps = ((1.0 - 2.0 * OMEGA_CLAMP) / 1e-4).round() as usize;
    (0..=steps)
        .map(|i| OMEGA_CLAMP + i as f64 * 1e-4)
        .map(|w| (w, objective(w)))
        .fold((f64::NAN, f64::INFINITY), |best, (w, v)| {
            if v < best.1 {
                (w, v)
            } else {
                best
            }
        })
        .0
}

pub fn omega_matches_brute_force(pairs: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let search = OmegaSearch::default();
    let mut worst = 0.0f64;
    for i in 0..pairs {
        let a = random_split(&mut rng);
        let b = random_split(&mut rng);
        let w = sci::optimize_omega(&a, &b, &search);
        let w_bf = brute_force_omega(&a, &b);
        let gap = (w - w_bf).abs();
        worst = worst.max(gap);
        if gap > 1e-3 {
            let fw = sci::omega_objective(&a, &b, w, OmegaObjective::PositionLogDet);
            let fb = sci::omega_objective(&a, &b, w_bf, OmegaObjective::PositionLogDet);
            return Err(format!(
                "pair {i}: omega {w} vs brute force {w_bf} (objective {fw} vs {fb})"
            ));
        }
    }
    Ok(format!(
        "{pairs} pairs, worst |omega - brute force| {worst:.1e}"
    ))
}

fn closure_ok(est: &SplitEstimate, expected_total: &CovMat) -> Result<(), String> {
    let total = est.p_dep + est.p_ind;
    let scale = expected_total.trace().abs().max(1.0);
    if (total - expected_total).abs().max() > 1e-9 * scale {
        return Err(format!(
            "P_d + P_i differs from P by {:.1e}",
            (total - expected_total).abs().max()
        ));
    }
    for (name, m) in [("P_d", &est.p_dep), ("P_i", &est.p_ind)] {
        let tr = m.trace().abs().max(1e-12);
        let min = min_eigenvalue4(m);
        if min < -1e-9 * tr {
            return Err(format!("{name} min eigenvalue {min:.3e} (trace {tr:.3e})"));
        }
    }
    Ok(())
}

/// Random sequences of predict, range-style fusion and GPS updates; after
/// every step the split parts must add up to the independently computed
/// total and stay PSD.
pub fn split_closure(sequences: usize, steps: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let search = OmegaSearch::default();
    let cv = coop_loc::kalman::LinearModel::constant_velocity(1.0, 0.01);
    let mut ops = [0usize; 3];
    for s in 0..sequences {
        let mut est = SplitEstimate::independent(
            normal_vec::<4>(&mut rng) * 10.0,
            random_spd(&mut rng, 1.0, 0.1),
        );
        for step in 0..steps {
            let op = rng.random_range(0..3);
            ops[op] += 1;
            let (next, expected) = match op {
                0 => {
                    let next =
                        coop_loc::sim::predict_split(&est, &cv).map_err(|e| e.to_string())?;
                    (next, cv.f * est.total() * cv.f.transpose() + cv.q)
                }
                1 => {
                    let scale = rng.random_range(0.3..3.0);
                    let other = SplitEstimate::dependent(
                        est.state + normal_vec::<4>(&mut rng),
                        random_spd(&mut rng, scale, 0.05),
                    );
                    let (next, w) =
                        sci::fuse_with(&est, &other, &search).map_err(|e| e.to_string())?;
                    let expected =
                        sci::fused_covariance(&est, &other, w).map_err(|e| e.to_string())?;
                    (next, expected)
                }
                _ => {
                    let model = GpsModel::isotropic(rng.random_range(0.01..25.0));
                    let z = position(&est.state)
                        + nalgebra::Vector2::new(
                            rng.random_range(-3.0..3.0),
                            rng.random_range(-3.0..3.0),
                        );
                    let next = sci::gps_split_update(&est, &z, &model, GpsSplitRule::TotalPrior)
                        .map_err(|e| e.to_string())?;
                    let p = est.total();
                    let s = model.h * p * model.h.transpose() + model.r;
                    let k =
                        p * model.h.transpose() * s.try_inverse().ok_or("singular innovation")?;
                    let ikh = CovMat::identity() - k * model.h;
                    (
                        next,
                        ikh * p * ikh.transpose() + k * model.r * k.transpose(),
                    )
                }
            };
            closure_ok(&next, &expected)
                .map_err(|e| format!("sequence {s} step {step} op {op}: {e}"))?;
            est = next;
        }
    }
    Ok(format!(
        "{sequences} sequences x {steps} steps (predict {}, fuse {}, gps {})",
        ops[0], ops[1], ops[2]
    ))
}

/// Two estimates of a zero truth whose errors share a common component with
/// correlation `rho`; the split tells the fuser exactly which part may be
/// correlated. The fused covariance must dominate the empirical MSE.
pub fn conservativeness(rho: f64, instances: usize, trials: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut worst_margin = f64::INFINITY;
    for inst in 0..instances {
        let pa = random_spd::<4>(&mut rng, 1.0, 0.1);
        let pb = random_spd::<4>(&mut rng, 1.0, 0.1);
        let la = pa.cholesky().ok_or("not SPD")?.l();
        let lb = pb.cholesky().ok_or("not SPD")?.l();
        let split = |p: CovMat| (p * rho, p * (1.0 - rho));
        let (ad, ai) = split(pa);
        let (bd, bi) = split(pb);

        // Weight and gain depend only on the covariances.
        let proto_a = SplitEstimate {
            state: StateVec::zeros(),
            p_dep: ad,
            p_ind: ai,
        };
        let proto_b = SplitEstimate {
            state: StateVec::zeros(),
            p_dep: bd,
            p_ind: bi,
        };
        let (proto, w) = sci::fuse_with(&proto_a, &proto_b, &OmegaSearch::default())
            .map_err(|e| e.to_string())?;
        let p = proto.total();

        let mut errors = Vec::with_capacity(trials);
        for _ in 0..trials {
            let z0 = normal_vec::<4>(&mut rng);
            let z1 = normal_vec::<4>(&mut rng);
            let z2 = normal_vec::<4>(&mut rng);
            let ea = la * (z0 * rho.sqrt() + z1 * (1.0 - rho).sqrt());
            let eb = lb * (z0 * rho.sqrt() + z2 * (1.0 - rho).sqrt());
            let a = SplitEstimate {
                state: ea,
                ..proto_a
            };
            let b = SplitEstimate {
                state: eb,
                ..proto_b
            };
            let fused = sci::sci_fuse(&a, &b, w).map_err(|e| e.to_string())?;
            errors.push(fused.state);
        }
        let n = trials as f64;
        let mse: CovMat = errors.iter().map(|e| e * e.transpose()).sum::<CovMat>() / n;
        let eig = SymmetricEigen::new(p - mse);
        let (imin, lmin) =
            eig.eigenvalues
                .iter()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |b, (i, v)| if *v < b.1 { (i, *v) } else { b },
                );
        let v = eig.eigenvectors.column(imin).into_owned();
        let t: Vec<f64> = errors
            .iter()
            .map(|e| (v.transpose() * p * v)[(0, 0)] - v.dot(e).powi(2))
            .collect();
        let mean = t.iter().sum::<f64>() / n;
        let se = (t.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt();
        let margin = lmin / se;
        worst_margin = worst_margin.min(margin);
        if lmin < -3.0 * se {
            return Err(format!(
                "rho {rho} instance {inst}: min eig of P - MSE {lmin:.3e} < -3 se ({se:.3e})"
            ));
        }
    }
    Ok(format!(
        "rho {rho}: {instances} x {trials} trials, worst min eig / se {worst_margin:.1}"
    ))
}
