//! Cross-checks of the production computational paths against independent
//! dense oracles (nalgebra) and against the derivative-free maximizer of the
//! dual convex problem.

mod common;

use common::*;
use fdslrm::estimators::{kkt_matrix, kkt_matrix_inverse};
use fdslrm::{
    build_projection, estimate_remle, gram_system, loglik, schur_matrices, solve_mme, DesignSet,
    DoolseVariant, LikelihoodVariant, VarianceComponents,
};
use nalgebra::DMatrix;
use rand::prelude::*;

#[test]
fn ols_residuals_match_qr_oracle() {
    let mut rng = StdRng::seed_from_u64(101);
    for _ in 0..25 {
        let design = random_dense_design(&mut rng, 8, 2, 1);
        let x: Vec<f64> = (0..8).map(|_| normal(&mut rng)).collect();
        let cache = build_projection(&design, &x).unwrap();
        let oracle = qr_residuals(design.f_cols(), &x);
        assert!(max_abs_diff(cache.eps(), &oracle) < 1e-10);
    }
}

#[test]
fn mme_solution_matches_dense_block_oracle() {
    let mut rng = StdRng::seed_from_u64(202);
    for _ in 0..30 {
        let design = random_dense_design(&mut rng, 16, 2, 3);
        // strictly positive components: the dense form needs D^{-1}
        let nu = VarianceComponents::new(vec![
            rng.random_range(0.2..2.0),
            rng.random_range(0.05..2.0),
            rng.random_range(0.05..2.0),
            rng.random_range(0.05..2.0),
        ])
        .unwrap();
        let x: Vec<f64> = (0..16).map(|_| normal(&mut rng)).collect();
        let out = solve_mme(&design, &x, &nu).unwrap();
        let (beta, y) = dense_block_mme(&design, &x, &nu);
        assert!(max_abs_diff(&out.beta_hat, &beta) < 1e-9, "beta mismatch");
        assert!(max_abs_diff(&out.y_hat, &y) < 1e-9, "y mismatch");
    }
}

#[test]
fn w_star_inverse_matches_dense_inversion() {
    let mut rng = StdRng::seed_from_u64(303);
    for _ in 0..25 {
        let design = random_dense_design(&mut rng, 14, 2, 3);
        let nu = VarianceComponents::new(vec![
            rng.random_range(0.2..2.0),
            rng.random_range(0.1..2.0),
            rng.random_range(0.1..2.0),
            rng.random_range(0.1..2.0),
        ])
        .unwrap();
        let x: Vec<f64> = (0..14).map(|_| normal(&mut rng)).collect();
        let cache = build_projection(&design, &x).unwrap();
        let s = schur_matrices(&cache, &design, &nu).unwrap();
        // W* = W + nu_0 D^{-1} inverted densely
        let mut w_star = na_from_mat(cache.w());
        for j in 0..3 {
            w_star[(j, j)] += nu.nu0() / nu.random()[j];
        }
        let dense_inv = w_star.clone().try_inverse().unwrap();
        let fast = na_from_mat(s.w_star_inv());
        assert!((dense_inv - &fast).abs().max() < 1e-12 * fast.abs().max().max(1.0));
        // and W* itself is recovered
        let w_back = na_from_mat(s.w_star().unwrap());
        assert!((w_back - w_star).abs().max() < 1e-10);
    }
}

#[test]
fn determinant_identity_for_u_star() {
    // det U* * nu_0^{n-l} = det(nu_0 I_n + M_F V D V' M_F)
    let mut rng = StdRng::seed_from_u64(404);
    for _ in 0..20 {
        let design = random_dense_design(&mut rng, 12, 2, 3);
        let nu = random_nu(&mut rng, 3, 0.3);
        let x: Vec<f64> = (0..12).map(|_| normal(&mut rng)).collect();
        let cache = build_projection(&design, &x).unwrap();
        let s = schur_matrices(&cache, &design, &nu).unwrap();
        let log_det_u = na_from_mat(s.u_star()).lu().determinant().ln();

        let n = design.n();
        let mfv: Vec<Vec<f64>> = design
            .v_cols()
            .iter()
            .map(|v| cache.m_f_apply(&design, v))
            .collect();
        let mfv_na = na_from_cols(&mfv, n);
        let d = DMatrix::from_fn(3, 3, |i, j| if i == j { nu.random()[i] } else { 0.0 });
        let mut big = &mfv_na * d * mfv_na.transpose();
        for i in 0..n {
            big[(i, i)] += nu.nu0();
        }
        let log_det_big = big.cholesky().unwrap().determinant().ln();
        let lhs = log_det_u + (n as f64 - 3.0) * nu.nu0().ln();
        assert!(
            (lhs - log_det_big).abs() < 1e-8 * log_det_big.abs().max(1.0),
            "{lhs} vs {log_det_big}"
        );
    }
}

#[test]
fn analytic_kkt_inverse_matches_dense_inversion() {
    let mut rng = StdRng::seed_from_u64(505);
    for _ in 0..40 {
        let spec = random_orthogonal_model(&mut rng, 12..=60, 3, 5);
        let design: DesignSet<f64> = spec.realize().unwrap();
        let nu = random_nu(&mut rng, design.l(), 0.2);
        let x = gaussian_series(&design, &vec![1.0; design.k()], &nu, &mut rng);
        let cache = build_projection(&design, &x).unwrap();
        let gram = gram_system(&cache, &design, DoolseVariant::Mdoolse).unwrap();
        let b: Vec<bool> = (0..design.l()).map(|_| rng.random()).collect();
        let analytic = kkt_matrix_inverse(&gram, &b);
        let dense = na_from_mat(&kkt_matrix(&gram, &b)).try_inverse().unwrap();
        let diff = (na_from_mat(&analytic) - &dense).abs().max();
        assert!(diff < 1e-10 * dense.abs().max().max(1.0), "diff {diff}");
    }
}

#[test]
fn orthogonal_loglik_fast_path_matches_dense_oracle() {
    let mut rng = StdRng::seed_from_u64(606);
    for _ in 0..25 {
        let spec = random_orthogonal_model(&mut rng, 10..=40, 3, 4);
        let design: DesignSet<f64> = spec.realize().unwrap();
        let nu = random_nu(&mut rng, design.l(), 0.2);
        let x = gaussian_series(&design, &vec![0.5; design.k()], &nu, &mut rng);
        let cache = build_projection(&design, &x).unwrap();
        for reml in [false, true] {
            let variant = if reml { LikelihoodVariant::Reml } else { LikelihoodVariant::Ml };
            let fast = loglik(&cache, &design, &nu, variant).unwrap();
            let dense = dense_loglik(&design, &x, &nu, reml);
            assert!(
                (fast - dense).abs() < 1e-9 * dense.abs().max(1.0),
                "reml={reml}: {fast} vs {dense}"
            );
        }
    }
}

#[test]
fn general_loglik_path_matches_dense_oracle() {
    let mut rng = StdRng::seed_from_u64(707);
    for _ in 0..25 {
        let design = random_dense_design(&mut rng, 18, 2, 3);
        assert!(!design.is_orthogonal());
        let nu = random_nu(&mut rng, 3, 0.25);
        let x: Vec<f64> = (0..18).map(|_| normal(&mut rng)).collect();
        let cache = build_projection(&design, &x).unwrap();
        for reml in [false, true] {
            let variant = if reml { LikelihoodVariant::Reml } else { LikelihoodVariant::Ml };
            let fast = loglik(&cache, &design, &nu, variant).unwrap();
            let dense = dense_loglik(&design, &x, &nu, reml);
            assert!(
                (fast - dense).abs() < 1e-9 * dense.abs().max(1.0),
                "reml={reml}: {fast} vs {dense}"
            );
        }
    }
}

#[test]
fn remle_matches_dual_maximizer_at_desk_scale() {
    let mut rng = StdRng::seed_from_u64(808);
    for _ in 0..10 {
        let spec = random_orthogonal_model(&mut rng, 24..=80, 3, 4);
        let design: DesignSet<f64> = spec.realize().unwrap();
        let nu_true = random_nu(&mut rng, design.l(), 0.0);
        let x = gaussian_series(&design, &vec![1.0; design.k()], &nu_true, &mut rng);
        let cache = build_projection(&design, &x).unwrap();
        for reml in [false, true] {
            let variant = if reml { LikelihoodVariant::Reml } else { LikelihoodVariant::Ml };
            let est = estimate_remle(&cache, &design, variant).unwrap();
            let oracle = dual_problem(&design, &cache, reml).maximize();
            let scale = norm(est.solution.nu_hat.as_slice()).max(1e-12);
            let diff = max_abs_diff(est.solution.nu_hat.as_slice(), &oracle);
            assert!(diff / scale < 1e-5, "reml={reml} diff {diff} scale {scale}");
        }
    }
}

#[test]
fn simulated_covariance_matches_model_covariance() {
    use fdslrm::{sampler, ModelSpec, SimulationConfig, TermSpec};
    use fdslrm::Frequency;

    let spec = ModelSpec::new(
        8,
        vec![TermSpec::Constant],
        vec![TermSpec::Cosine(Frequency::Harmonic(2)), TermSpec::Sine(Frequency::Harmonic(2))],
    )
    .unwrap();
    let nu = VarianceComponents::new(vec![0.5, 1.2, 0.4]).unwrap();
    let config = SimulationConfig {
        spec: spec.clone(),
        beta: vec![2.0],
        nu_true: nu.clone(),
        replicates: 100_000,
        seed: 909,
    };
    let design: DesignSet<f64> = spec.realize().unwrap();
    let sigma = dense_sigma(&design, &nu);
    let n = 8;
    let mut mean = vec![0.0; n];
    let mut second = DMatrix::<f64>::zeros(n, n);
    let r = config.replicates as f64;
    for rep in sampler(&config).unwrap() {
        for i in 0..n {
            mean[i] += rep.series[i] / r;
            for j in 0..n {
                second[(i, j)] += rep.series[i] * rep.series[j] / r;
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            let cov = second[(i, j)] - mean[i] * mean[j];
            // SE of a covariance entry ~ sqrt((sigma_ii sigma_jj + sigma_ij^2)/r)
            let se = ((sigma[(i, i)] * sigma[(j, j)] + sigma[(i, j)].powi(2)) / r).sqrt();
            assert!(
                (cov - sigma[(i, j)]).abs() < 4.0 * se,
                "entry ({i},{j}): {cov} vs {}",
                sigma[(i, j)]
            );
        }
    }
}
