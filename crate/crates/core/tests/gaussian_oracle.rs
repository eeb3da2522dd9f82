use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use subdist::dense::{bures_distance_dense, 
    density_from_gamma, density_from_gamma_exp, fidelity_dense, fidelity_dense_product, gamma_from_density,
    operator_correlation, psd_sqrt, trace_distance, DenseState,
};
use subdist::ensemble::{haar_orthogonal, state_rng};
use subdist::gaussian::{
    block_diagonal, bures_distance, canonical_form, fidelity, fidelity_traced, gaussian_compose,
    gaussian_product_trace, Branch, CMat, CorrelationMatrix, GaussianOperator, Mat, C64,
};

#[derive(Clone, Copy, Debug)]
enum Kind {
    Mixed,
    Pure,
    Partial,
}

fn random_state(rng: &mut ChaCha8Rng, ell: usize, kind: Kind) -> CorrelationMatrix {
    let units = match kind {
        Kind::Mixed => 0,
        Kind::Pure => ell,
        Kind::Partial => rng.random_range(1..ell.max(2)).min(ell),
    };
    let values: Vec<f64> = (0..ell)
        .map(|j| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            if j < units {
                sign
            } else {
                rng.random_range(-0.95..0.95)
            }
        })
        .collect();
    let o = haar_orthogonal(2 * ell, rng);
    let m = o.transpose() * block_diagonal(&values) * &o;
    CorrelationMatrix::new((&m - m.transpose()) * 0.5).unwrap()
}

fn dense(g: &CorrelationMatrix) -> DenseState {
    density_from_gamma(g).unwrap()
}

#[test]
fn density_round_trip() {
    let mut rng = state_rng(1, 0);
    for ell in 1..=5 {
        for kind in [Kind::Mixed, Kind::Pure, Kind::Partial] {
            for _ in 0..5 {
                let g = random_state(&mut rng, ell, kind);
                let back = gamma_from_density(&dense(&g)).unwrap();
                assert!((back.matrix() - g.matrix()).amax() < 1e-10, "ell = {ell}, {kind:?}");
            }
        }
    }
}

#[test]
fn density_special_cases() {
    let pure = dense(&CorrelationMatrix::from_pair_values(&[1.0]).unwrap());
    assert!((pure.matrix()[(0, 0)].re - 1.0).abs() < 1e-15);
    assert!(pure.matrix()[(1, 1)].norm() < 1e-15);
    let zero = dense(&CorrelationMatrix::maximally_mixed(3));
    assert!((zero.matrix() - CMat::identity(8, 8) * C64::new(0.125, 0.0)).camax() < 1e-15);
    // |0…0⟩ has ⟨d_{2j-1} d_{2j}⟩ = i.
    let mut psi = DVector::zeros(8);
    psi[0] = C64::new(1.0, 0.0);
    let g = gamma_from_density(&DenseState::pure(&psi).unwrap()).unwrap();
    assert!((g.matrix() - block_diagonal(&[1.0; 3])).amax() < 1e-15);
}

#[test]
fn exponential_form_agrees_for_mixed_states() {
    let mut rng = state_rng(2, 0);
    for ell in 1..=4 {
        let g = random_state(&mut rng, ell, Kind::Mixed);
        let a = dense(&g);
        let b = density_from_gamma_exp(&g).unwrap();
        assert!((a.matrix() - b.matrix()).camax() < 1e-10);
    }
    let pure = CorrelationMatrix::from_pair_values(&[1.0, 0.2]).unwrap();
    assert!(density_from_gamma_exp(&pure).is_err());
}

#[test]
fn dense_distance_examples() {
    let a = dense(&CorrelationMatrix::from_pair_values(&[0.5]).unwrap());
    let b = dense(&CorrelationMatrix::from_pair_values(&[0.0]).unwrap());
    assert!((trace_distance(&a, &b).unwrap() - 0.25).abs() < 1e-15);
    let up = dense(&CorrelationMatrix::from_pair_values(&[1.0]).unwrap());
    let down = dense(&CorrelationMatrix::from_pair_values(&[-1.0]).unwrap());
    assert!((trace_distance(&up, &down).unwrap() - 1.0).abs() < 1e-15);
    assert!(fidelity_dense(&up, &down).unwrap() < 1e-15);
    assert!((fidelity_dense(&up, &b).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    assert!((fidelity_dense(&a, &a).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn partial_trace_properties() {
    // Bell state (|00⟩ + |11⟩)/√2 reduces to the identity over two.
    let s = 0.5f64.sqrt();
    let mut psi = DVector::zeros(4);
    psi[0] = C64::new(s, 0.0);
    psi[3] = C64::new(s, 0.0);
    let rho = DenseState::pure(&psi).unwrap().partial_trace(1).unwrap();
    assert!((rho.matrix() - CMat::identity(2, 2) * C64::new(0.5, 0.0)).camax() < 1e-15);
    // Product |a⟩|b⟩.
    let a = DVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
    let b = DVector::from_vec(vec![C64::new(0.0, 1.0), C64::new(0.0, 0.0)]);
    let psi = DVector::from_fn(4, |i, _| a[i / 2] * b[i % 2]);
    let rho = DenseState::pure(&psi).unwrap().partial_trace(1).unwrap();
    assert!((rho.matrix() - &a * a.adjoint()).camax() < 1e-15);
}

#[test]
fn complementary_reductions_share_spectra() {
    let mut rng = state_rng(3, 0);
    let dim = 32;
    let psi = DVector::from_fn(dim, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let psi = &psi / C64::new(psi.norm(), 0.0);
    let a = subdist::dense::reduced_density_pure(&psi, 2).unwrap();
    // The last three sites: swap site order by reshaping the other way.
    let swapped = DVector::from_fn(dim, |i, _| psi[(i % 4) * 8 + i / 4]);
    let b = subdist::dense::reduced_density_pure(&swapped, 3).unwrap();
    let mut ea: Vec<f64> = a.matrix().clone().symmetric_eigenvalues().iter().copied().collect();
    let mut eb: Vec<f64> = b.matrix().clone().symmetric_eigenvalues().iter().copied().filter(|x| x.abs() > 1e-12).collect();
    ea.sort_by(f64::total_cmp);
    eb.sort_by(f64::total_cmp);
    assert_eq!(ea.len(), eb.len());
    for (x, y) in ea.iter().zip(&eb) {
        assert!((x - y).abs() < 1e-12);
    }
}

/// `det(1 + √(√K₁ K₂ √K₁))` with explicit matrix square roots.
fn nested_root_fidelity(g1: &CorrelationMatrix, g2: &CorrelationMatrix) -> f64 {
    let n = g1.matrix().nrows();
    let id = CMat::identity(n, n);
    let k = |g: &CorrelationMatrix| {
        let gam = g.gamma();
        (&id - &gam) * (&id + &gam).try_inverse().unwrap()
    };
    let x = psd_sqrt(&k(g1));
    let inner = psd_sqrt(&(&x * k(g2) * &x));
    let pre = |g: &CorrelationMatrix| ((&id + g.gamma()) * C64::new(0.5, 0.0)).determinant().re.powf(0.25);
    pre(g1) * pre(g2) * (&id + inner).determinant().re.sqrt()
}

#[test]
fn nested_root_form_agrees_on_mixed_states() {
    let mut rng = state_rng(4, 0);
    for ell in 1..=4 {
        for _ in 0..10 {
            let a = random_state(&mut rng, ell, Kind::Mixed);
            let b = random_state(&mut rng, ell, Kind::Mixed);
            let f = fidelity(&a, &b).unwrap();
            assert!((f - nested_root_fidelity(&a, &b)).abs() < 1e-9);
        }
    }
}

#[test]
fn randomized_pairs_match_dense_fidelity() {
    let mut rng = state_rng(5, 0);
    let mut hits = std::collections::HashMap::<Branch, usize>::new();
    let kinds = [Kind::Mixed, Kind::Pure, Kind::Partial];
    let mut cases = 0;
    while cases < 1200 {
        let ell = rng.random_range(1..=5usize);
        let ka = kinds[rng.random_range(0..3)];
        let kb = kinds[rng.random_range(0..3)];
        let a = random_state(&mut rng, ell, ka);
        let b = random_state(&mut rng, ell, kb);
        let (f, branch) = fidelity_traced(&a, &b).unwrap();
        let (da, db) = (dense(&a), dense(&b));
        let fd = fidelity_dense(&da, &db).unwrap();
        assert!((f - fd).abs() < 1e-9, "ell = {ell}, {ka:?}/{kb:?}, {branch:?}: {f} vs {fd}");
        let back = fidelity(&b, &a).unwrap();
        assert!((f - back).abs() < 1e-9);
        let d = trace_distance(&da, &db).unwrap();
        assert!(1.0 - f <= d + 1e-9 && d <= (1.0 - f * f).max(0.0).sqrt() + 1e-9);
        *hits.entry(branch).or_default() += 1;
        cases += 1;
    }
    for branch in [Branch::SingleMode, Branch::Regular, Branch::Pure, Branch::Reduced] {
        assert!(hits.get(&branch).copied().unwrap_or(0) >= 100, "{hits:?}");
    }
}

#[test]
fn product_trace_and_dense_product_fidelity() {
    let mut rng = state_rng(6, 0);
    for ell in 1..=4 {
        let a = random_state(&mut rng, ell, Kind::Mixed);
        let b = random_state(&mut rng, ell, Kind::Partial);
        let (da, db) = (dense(&a), dense(&b));
        let t = (da.matrix() * db.matrix()).trace();
        assert!((gaussian_product_trace(&a, &b).unwrap() - t.re).abs() < 1e-12);
        let c = random_state(&mut rng, ell, Kind::Mixed);
        let dc = dense(&c);
        assert!((fidelity_dense(&da, &dc).unwrap() - fidelity_dense_product(&da, &dc).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn compose_matches_dense_products() {
    let mut rng = state_rng(7, 0);
    for ell in 1..=4 {
        let a = random_state(&mut rng, ell, Kind::Mixed);
        let b = random_state(&mut rng, ell, Kind::Mixed);
        let c = random_state(&mut rng, ell, Kind::Mixed);
        let (da, db, dc) = (dense(&a), dense(&b), dense(&c));
        let ab = da.matrix() * db.matrix();
        let composed = gaussian_compose(&a, &b).unwrap();
        let want = operator_correlation(&ab).unwrap();
        assert!((composed.gamma() - &want).camax() < 1e-9);

        // tr(ρ₁ρ₂ρ₃) = tr(ρ₁ρ₂) tr(X₁₂ ρ₃).
        let opc = GaussianOperator::from_correlation(&c);
        let chained = GaussianOperator::from_correlation(&a).product_trace(&GaussianOperator::from_correlation(&b)).unwrap()
            * composed.product_trace(&opc).unwrap();
        let direct = (ab * dc.matrix()).trace();
        assert!((chained - direct).norm() < 1e-9, "ell = {ell}: {chained} vs {direct}");
    }
}

#[test]
fn commuting_compose_is_a_state() {
    let a = CorrelationMatrix::from_pair_values(&[0.3, -0.6, 0.9]).unwrap();
    let b = CorrelationMatrix::from_pair_values(&[0.5, 0.2, -0.4]).unwrap();
    let composed = gaussian_compose(&a, &b).unwrap().into_correlation().unwrap();
    let (da, db) = (dense(&a), dense(&b));
    let product = da.matrix() * db.matrix();
    let t = gaussian_product_trace(&a, &b).unwrap();
    let want = dense(&composed).matrix() * C64::new(t, 0.0);
    assert!((product - want).camax() < 1e-9);
}

#[test]
fn non_commuting_product_is_not_hermitian() {
    let mut rng = state_rng(8, 0);
    let a = random_state(&mut rng, 2, Kind::Mixed);
    let b = random_state(&mut rng, 2, Kind::Mixed);
    let composed = gaussian_compose(&a, &b).unwrap();
    assert!(composed.hermiticity_defect() > 1e-6);
    assert!(composed.into_correlation().is_err());
}

#[test]
fn canonical_form_round_trip_and_ordering() {
    let mut rng = state_rng(9, 0);
    for ell in 1..=8 {
        let raw = Mat::from_fn(2 * ell, 2 * ell, |_, _| rng.random_range(-1.0..1.0));
        let m = (&raw - raw.transpose()) * 0.5;
        let m = &m / (m.clone().singular_values().max() + 1e-3);
        let cf = canonical_form(&m);
        assert!((cf.reconstruct() - &m).amax() < 1e-10);
        assert!((&cf.rotation * cf.rotation.transpose() - Mat::identity(2 * ell, 2 * ell)).amax() < 1e-12);
        assert!(cf.pair_values.windows(2).all(|w| w[0] >= w[1]));
        assert!(cf.pair_values.iter().all(|&g| g >= 0.0));
    }
}

#[test]
fn widely_spread_pair_values_are_resolved() {
    let mut rng = state_rng(10, 0);
    let values = [1.0, 0.5, 1e-4, 1e-7, 0.0];
    let o = haar_orthogonal(10, &mut rng);
    let m = o.transpose() * block_diagonal(&values) * &o;
    let cf = canonical_form(&m);
    for (got, want) in cf.pair_values.iter().zip(values) {
        assert!((got - want).abs() < 1e-13, "{got} vs {want}");
    }
    assert!((cf.reconstruct() - &m).amax() < 1e-13);
}

#[test]
fn pure_versus_overlapping_state() {
    // A pure state and a mixture that contains it with weight one half.
    let pure = CorrelationMatrix::from_pair_values(&[1.0, 1.0]).unwrap();
    let mixed = CorrelationMatrix::from_pair_values(&[1.0, 0.0]).unwrap();
    let f = fidelity(&pure, &mixed).unwrap();
    assert!((f - 0.5f64.sqrt()).abs() < 1e-12);
    assert!((bures_distance(&pure, &pure).unwrap()).abs() < 1e-6);
}

fn arb_state(max_modes: usize) -> impl Strategy<Value = (u64, usize, u8)> {
    (any::<u64>(), 1..=max_modes, 0u8..3)
}

fn build(seed: u64, ell: usize, kind: u8) -> CorrelationMatrix {
    let mut rng = state_rng(seed, 0);
    let kind = [Kind::Mixed, Kind::Pure, Kind::Partial][kind as usize];
    random_state(&mut rng, ell, kind)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fidelity_range_symmetry_identity((s1, ell, k1) in arb_state(6), (s2, k2) in (any::<u64>(), 0u8..3)) {
        let a = build(s1, ell, k1);
        let b = build(s2, ell, k2);
        let f = fidelity(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f - fidelity(&b, &a).unwrap()).abs() < 1e-9);
        prop_assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-10);
        let bd = bures_distance(&a, &b).unwrap();
        prop_assert!((0.0..=2f64.sqrt() + 1e-12).contains(&bd));
    }

    #[test]
    fn trace_distance_triangle((s1, ell, k1) in arb_state(4), (s2, k2) in (any::<u64>(), 0u8..3), (s3, k3) in (any::<u64>(), 0u8..3)) {
        let a = dense(&build(s1, ell, k1));
        let b = dense(&build(s2, ell, k2));
        let c = dense(&build(s3, ell, k3));
        let ab = trace_distance(&a, &b).unwrap();
        let bc = trace_distance(&b, &c).unwrap();
        let ac = trace_distance(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-10);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
    }

    #[test]
    fn single_mode_dispatch_consistency(g1 in -1.0f64..=1.0, g2 in -1.0f64..=1.0) {
        let a = CorrelationMatrix::from_pair_values(&[g1]).unwrap();
        let b = CorrelationMatrix::from_pair_values(&[g2]).unwrap();
        let f = fidelity(&a, &b).unwrap();
        let fd = fidelity_dense(&dense(&a), &dense(&b)).unwrap();
        prop_assert!((f - fd).abs() < 1e-10);
        if a.is_pure() {
            prop_assert!((subdist::gaussian::fidelity_pure(&a, &b).unwrap() - f).abs() < 1e-10);
        }
    }
}

#[test]
fn dense_bures_matches_fidelity_and_vanishes_on_equal_states() {
    let mut rng = state_rng(8, 0);
    for ell in 1..=4 {
        for kind in [Kind::Mixed, Kind::Partial, Kind::Pure] {
            let a = dense(&random_state(&mut rng, ell, kind));
            let b = dense(&random_state(&mut rng, ell, Kind::Mixed));
            let f = fidelity_dense(&a, &b).unwrap();
            let from_f = (2.0 * (1.0 - f)).max(0.0).sqrt();
            assert!((bures_distance_dense(&a, &b).unwrap() - from_f).abs() < 1e-9);
        }
        let a = dense(&random_state(&mut rng, ell, Kind::Mixed));
        assert!(bures_distance_dense(&a, &a.clone()).unwrap() < 1e-13);
    }
}
