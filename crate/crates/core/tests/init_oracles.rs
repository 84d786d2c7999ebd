mod common;

use common::{rademacher_expectation, synth};
use nalgebra::DVector;
use sparsecode::genmodel::{
    draw_batch, generate_dictionary, generate_orthonormal_dictionary, support_stats, ModelParams,
    SparseCode,
};
use sparsecode::init::*;
use sparsecode::metrics::nearness;
use sparsecode::numerics::Matrix;

fn code(support: &[usize], values: &[f64]) -> SparseCode {
    SparseCode::new(support.to_vec(), values.to_vec()).unwrap()
}

#[test]
fn analytic_moment_matches_enumeration() {
    let cases = [
        (
            4,
            4,
            2,
            code(&[0, 1], &[1.0, -1.0]),
            code(&[1, 3], &[1.0, 1.0]),
        ),
        (
            5,
            6,
            3,
            code(&[0, 2, 5], &[1.0, 1.0, -1.0]),
            code(&[2, 3, 4], &[-1.0, 1.0, 1.0]),
        ),
        (
            6,
            5,
            2,
            code(&[1, 4], &[1.0, 1.0]),
            code(&[0, 3], &[1.0, -1.0]),
        ),
        (
            3,
            6,
            4,
            code(&[0, 1, 2, 3], &[1.0, 1.0, 1.0, 1.0]),
            code(&[2, 3, 4, 5], &[1.0, -1.0, 1.0, -1.0]),
        ),
    ];
    for (seed, (n, m, k, cu, cv)) in cases.into_iter().enumerate() {
        let astar = generate_dictionary(n, m, seed as u64).unwrap();
        let stats = support_stats(&ModelParams::rademacher(n, m, k).unwrap());
        let u = DVector::from_vec(cu.synthesize(&astar));
        let v = DVector::from_vec(cv.synthesize(&astar));
        let oracle = rademacher_expectation(m, k, n, n, |s, signs| {
            let y = synth(astar.inner(), s, signs);
            &y * y.transpose() * (y.dot(&u) * y.dot(&v))
        });
        let am = analytic_moment(&cu, &cv, &astar, &stats).unwrap();
        let err = (am.total.inner() - &oracle).amax();
        assert!(err <= 1e-12, "case {seed}: {err:e}");
        let parts = am.main.inner() + am.e1.inner() + am.e2.inner() + am.e3.inner();
        assert!((parts - am.total.inner()).amax() <= 1e-14);
    }
}

#[test]
fn orthonormal_moment_structure() {
    let q = generate_orthonormal_dictionary(6, 6, 1).unwrap();
    let stats = support_stats(&ModelParams::rademacher(6, 6, 2).unwrap());
    let cu = code(&[0, 2], &[1.0, -1.0]);
    let cv = code(&[2, 4], &[-1.0, 1.0]);
    let am = analytic_moment(&cu, &cv, &q, &stats).unwrap();
    let a2 = DVector::from_column_slice(q.column(2));
    let expected = &a2 * a2.transpose() * stats.q_i;
    assert!((am.main.inner() - expected).amax() < 1e-14);
    assert!(am.e1_norm < 1e-14);

    let disjoint = code(&[1, 3], &[1.0, 1.0]);
    let am = analytic_moment(&cu, &disjoint, &q, &stats).unwrap();
    assert_eq!(am.main_norm, 0.0);
    assert!(am.e3_norm > 0.0);
}

#[test]
fn weighted_moment_is_symmetric_and_psd_for_equal_weights() {
    let astar = generate_dictionary(12, 16, 4).unwrap();
    let params = ModelParams::rademacher(12, 16, 3).unwrap();
    let b = draw_batch(&astar, &params, 500, 5, 0).unwrap();
    let u = b.samples.column(0).to_vec();
    let v = b.samples.column(1).to_vec();
    let m = weighted_moment(&u, &v, &b.samples).unwrap();
    assert_eq!(m.inner(), &m.inner().transpose());
    let mu = weighted_moment(&u, &u, &b.samples).unwrap();
    let eig = nalgebra::SymmetricEigen::new(mu.inner().clone());
    assert!(eig.eigenvalues.iter().all(|l| *l >= -1e-12));
}

#[test]
fn code_domain_moment_equals_sample_moment() {
    let astar = generate_dictionary(10, 14, 6).unwrap();
    let params = ModelParams::rademacher(10, 14, 3).unwrap();
    let b = draw_batch(&astar, &params, 800, 7, 0).unwrap();
    let u = b.samples.column(3).to_vec();
    let v = b.samples.column(9).to_vec();
    let dense = weighted_moment(&u, &v, &b.samples).unwrap();
    let am = astar.inner();
    let beta = am.tr_mul(&DVector::from_vec(u));
    let beta_p = am.tr_mul(&DVector::from_vec(v));
    let k = code_moment(beta.as_slice(), beta_p.as_slice(), &b.codes);
    let fast = am * k * am.transpose();
    assert!((fast - dense.inner()).amax() <= 1e-12 * dense.inner().amax().max(1.0));
}

#[test]
fn empirical_moment_approaches_analytic() {
    let (n, m, k) = (32, 32, 3);
    let astar = generate_dictionary(n, m, 8).unwrap();
    let params = ModelParams::rademacher(n, m, k).unwrap();
    let stats = support_stats(&params);
    let cu = code(&[1, 5, 9], &[1.0, -1.0, 1.0]);
    let cv = code(&[5, 12, 20], &[-1.0, 1.0, 1.0]);
    let b = draw_batch(&astar, &params, 50_000, 9, 0).unwrap();
    let u = cu.synthesize(&astar);
    let v = cv.synthesize(&astar);
    let am = astar.inner();
    let beta = am.tr_mul(&DVector::from_vec(u));
    let beta_p = am.tr_mul(&DVector::from_vec(v));
    let emp = am * code_moment(beta.as_slice(), beta_p.as_slice(), &b.codes) * am.transpose();
    let ana = analytic_moment(&cu, &cv, &astar, &stats).unwrap();
    let gap = moment_spectrum(&Matrix::from_dmatrix(emp - ana.total.inner()).unwrap()).sigma1;
    assert!(gap <= 0.1 * k as f64 / m as f64, "{gap}");
}

#[test]
fn uniqueness_separates_overlaps_on_orthonormal_toy() {
    let (n, m, k) = (8, 8, 2);
    let q = generate_orthonormal_dictionary(n, m, 3).unwrap();
    let params = ModelParams::rademacher(n, m, k).unwrap();
    let stats = support_stats(&params);
    let cfg = InitConfig {
        sigma1_floor: 0.5,
        sigma2_ceil: 0.5,
        ..InitConfig::defaults(&params, 0)
    };
    let cases = [
        (
            code(&[0, 1], &[1.0, 1.0]),
            code(&[2, 3], &[1.0, -1.0]),
            false,
        ),
        (
            code(&[0, 1], &[1.0, 1.0]),
            code(&[1, 3], &[1.0, -1.0]),
            true,
        ),
        (
            code(&[0, 1], &[1.0, 1.0]),
            code(&[0, 1], &[-1.0, 1.0]),
            false,
        ),
    ];
    for (cu, cv, want) in cases {
        let am = analytic_moment(&cu, &cv, &q, &stats).unwrap();
        let t = moment_spectrum(&am.total);
        assert_eq!(
            uniqueness_test(t.sigma1, t.sigma2, &params, &cfg),
            want,
            "{t:?}"
        );
    }
}

#[test]
fn single_atom_model_yields_one_candidate() {
    let astar = Matrix::from_columns(&[vec![0.6, 0.8]]).unwrap();
    let params = ModelParams::rademacher(2, 1, 1).unwrap();
    let cfg = InitConfig {
        p1: 4,
        p2: 50,
        max_pairs: 10,
        ..InitConfig::defaults(&params, 1)
    };
    let out = pairwise_init(InitInput::Synthetic { astar: &astar }, &params, &cfg).unwrap();
    assert_eq!(out.candidates.len(), 1);
    assert_eq!(out.pairs_tried, 1);
    let z = &out.candidates.candidates[0].vector;
    assert!((z[0] - 0.6).abs() < 1e-12 && (z[1] - 0.8).abs() < 1e-12);
}

#[test]
fn oracle_moments_recover_orthonormal_atoms_exactly_without_cross_terms() {
    let (n, m, k) = (24, 16, 1);
    let q = generate_orthonormal_dictionary(n, m, 12).unwrap();
    let params = ModelParams::rademacher(n, m, k).unwrap();
    let cfg = InitConfig {
        moment: MomentSource::Oracle,
        ..InitConfig::defaults(&params, 13)
    };
    let out = pairwise_init(InitInput::Synthetic { astar: &q }, &params, &cfg).unwrap();
    for z in out.candidates.vectors() {
        let best = (0..m)
            .map(|i| sign_invariant_distance(z, q.column(i)))
            .fold(f64::INFINITY, f64::min);
        assert!(best < 1e-10, "{best}");
    }
    let report = nearness(&out.dictionary, &q, 1e-10, 1e-10).unwrap();
    assert!(report.is_near, "{report:?}");
}

/// With two atoms per sample the cross terms tilt the top singular vector
/// by about `q_ij / q_i`; accepted vectors stay within `1/ln m`.
#[test]
fn oracle_moments_land_near_orthonormal_atoms() {
    let (n, m, k) = (48, 32, 2);
    let q = generate_orthonormal_dictionary(n, m, 12).unwrap();
    let params = ModelParams::rademacher(n, m, k).unwrap();
    let cfg = InitConfig {
        moment: MomentSource::Oracle,
        sigma1_floor: 0.5,
        sigma2_ceil: 0.5 * (m as f64).ln(),
        ..InitConfig::defaults(&params, 13)
    };
    let out = pairwise_init(InitInput::Synthetic { astar: &q }, &params, &cfg).unwrap();
    let bound = 1.0 / (m as f64).ln();
    for z in out.candidates.vectors() {
        let best = (0..m)
            .map(|i| sign_invariant_distance(z, q.column(i)))
            .fold(f64::INFINITY, f64::min);
        assert!(best < bound, "{best}");
    }
}

#[test]
fn partial_result_carries_candidates() {
    let (n, m, k) = (24, 16, 2);
    let q = generate_orthonormal_dictionary(n, m, 12).unwrap();
    let params = ModelParams::rademacher(n, m, k).unwrap();
    let cfg = InitConfig {
        moment: MomentSource::Oracle,
        max_pairs: 5,
        ..InitConfig::defaults(&params, 13)
    };
    match pairwise_init(InitInput::Synthetic { astar: &q }, &params, &cfg) {
        Err(InitError::Partial {
            found,
            wanted,
            pairs_tried,
            candidates,
        }) => {
            assert_eq!(wanted, 16);
            assert_eq!(pairs_tried, 5);
            assert_eq!(found, candidates.len());
        }
        other => panic!("expected a partial result, got {other:?}"),
    }
}

#[test]
fn data_mode_runs_on_observed_samples() {
    let (n, m, k) = (12, 6, 1);
    let q = generate_orthonormal_dictionary(n, m, 2).unwrap();
    let params = ModelParams::rademacher(n, m, k).unwrap();
    let b = draw_batch(&q, &params, 2_000, 3, 0).unwrap();
    let cfg = InitConfig {
        p1: 200,
        p2: 1_800,
        ..InitConfig::defaults(&params, 4)
    };
    let out = pairwise_init(
        InitInput::Data {
            samples: &b.samples,
        },
        &params,
        &cfg,
    )
    .unwrap();
    let report = nearness(&out.dictionary, &q, 1e-8, 1.0).unwrap();
    assert!(report.delta < 1e-8, "{report:?}");
}
