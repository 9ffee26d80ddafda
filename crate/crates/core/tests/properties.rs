//! Randomized invariants for the operator algebra, the master-equation
//! generator, the mean-field embedding and the Bloch-sphere machinery.

use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;

use ptdimer::fock::{self, build_basis, Site, SparseOperator};
use ptdimer::jump::ManyBodyState;
use ptdimer::lindblad::{DimerParams, Lindbladian};
use ptdimer::meanfield::{self, ModeAmplitudes};
use ptdimer::observables::{self, BlochFrame, SinglePartDM};
use ptdimer::states;
use ptdimer::C64;

const TOL: f64 = 1e-12;

fn c64() -> impl Strategy<Value = C64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| C64::new(re, im))
}

fn amplitudes() -> impl Strategy<Value = ModeAmplitudes> {
    (c64(), c64())
        .prop_filter("non-zero", |(a, b)| a.norm_sqr() + b.norm_sqr() > 1e-3)
        .prop_map(|(a, b)| ModeAmplitudes::new(a, b).normalized())
}

fn site() -> impl Strategy<Value = Site> {
    prop_oneof![Just(Site::One), Just(Site::Two)]
}

fn dense_close(a: &DMatrix<C64>, b: &DMatrix<C64>, tol: f64) -> bool {
    (a - b).iter().all(|v| v.norm() <= tol)
}

/// Random Hermitian, positive, unit-trace matrix with no weight on the top shell.
fn density_below_top(n_max: usize, entries: &[C64]) -> DMatrix<C64> {
    let basis = build_basis(n_max);
    let keep = basis.top_shell().start;
    let d = basis.dim();
    let mut a = DMatrix::<C64>::zeros(d, d);
    for r in 0..keep {
        for c in 0..keep {
            a[(r, c)] = entries[(r * d + c) % entries.len()];
        }
    }
    let rho = &a * a.adjoint();
    let tr = rho.trace();
    rho / tr
}

fn apply(gen: &Lindbladian, rho: &DMatrix<C64>) -> DMatrix<C64> {
    gen.apply(rho).expect("dimensions match")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fock_index_round_trip(n_max in 0usize..40) {
        let b = build_basis(n_max);
        prop_assert_eq!(b.dim(), (n_max + 1) * (n_max + 2) / 2);
        for k in 0..b.dim() {
            let (n1, n2) = b.state(k);
            prop_assert_eq!(b.index_of(n1, n2), Some(k));
            prop_assert!(n1 + n2 <= n_max);
        }
        prop_assert_eq!(b.index_of(n_max + 1, 0), None);
    }

    #[test]
    fn canonical_commutators_below_cutoff(n_max in 1usize..9, j in site(), k in site()) {
        let b = build_basis(n_max);
        let comm = fock::annihilation(&b, j).matmul(&fock::creation(&b, k))
            .sub(&fock::creation(&b, k).matmul(&fock::annihilation(&b, j)));
        let below = b.top_shell().start;
        for r in 0..below {
            for c in 0..below {
                let expected = if r == c && j == k { 1.0 } else { 0.0 };
                prop_assert!((comm.get(r, c) - C64::new(expected, 0.0)).norm() < TOL);
            }
        }
        let a_a = fock::annihilation(&b, j).commutator(&fock::annihilation(&b, k));
        prop_assert!(a_a.max_abs() < TOL);
    }

    #[test]
    fn hamiltonian_is_hermitian_and_conserves_number(n_max in 0usize..12, u in -2.0f64..2.0) {
        let b = build_basis(n_max);
        let h = fock::hamiltonian(&b, u);
        prop_assert!(h.check_hermitian());
        prop_assert!(h.commutator(&fock::total_number_operator(&b)).max_abs() < TOL);
    }

    #[test]
    fn transfer_operator_adjoint(n_max in 0usize..10, j in site(), k in site()) {
        let b = build_basis(n_max);
        let jk = fock::transfer_operator(&b, j, k).adjoint();
        let kj = fock::transfer_operator(&b, k, j);
        prop_assert!(jk.sub(&kj).max_abs() < TOL);
        let product = fock::creation(&b, j).matmul(&fock::annihilation(&b, k));
        prop_assert!(fock::transfer_operator(&b, j, k).sub(&product).max_abs() < TOL);
    }

    #[test]
    fn lindbladian_preserves_trace_and_hermiticity(
        n_max in 1usize..6,
        u in -1.0f64..1.0,
        gl in 0.0f64..2.0,
        gg in 0.0f64..2.0,
        entries in prop::collection::vec(c64(), 16..64),
    ) {
        let b = build_basis(n_max);
        let params = DimerParams::new(u, gl, gg, 1).unwrap();
        let gen = Lindbladian::dimer(&b, &params);
        let rho = density_below_top(n_max, &entries);
        let drho = apply(&gen, &rho);
        prop_assert!(drho.trace().norm() < 1e-12);
        prop_assert!(dense_close(&drho, &drho.adjoint(), 1e-12));
    }

    #[test]
    fn lindbladian_is_linear(
        n_max in 1usize..5,
        gl in 0.0f64..2.0,
        gg in 0.0f64..2.0,
        x in c64(),
        y in c64(),
        e1 in prop::collection::vec(c64(), 8..32),
        e2 in prop::collection::vec(c64(), 8..32),
    ) {
        let b = build_basis(n_max);
        let gen = Lindbladian::dimer(&b, &DimerParams::new(0.3, gl, gg, 1).unwrap());
        let r1 = density_below_top(n_max, &e1);
        let r2 = density_below_top(n_max, &e2);
        let lhs = apply(&gen, &(&r1 * x + &r2 * y));
        let rhs = apply(&gen, &r1) * x + apply(&gen, &r2) * y;
        prop_assert!(dense_close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn embedding_matches_one_body_moments(c in amplitudes(), n0 in 1usize..30) {
        let basis = Arc::new(build_basis(n0 + 2));
        let psi = states::embed_mean_field(&c, n0, &basis).unwrap();
        prop_assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
        let spdm = observables::single_particle_dm(&psi);
        let expected = SinglePartDM::from_mean_field(&c, n0 as f64);
        for j in 0..2 {
            for k in 0..2 {
                prop_assert!((spdm.sigma[j][k] - expected.sigma[j][k]).norm() < 1e-10 * n0 as f64);
            }
        }
    }

    #[test]
    fn embedding_carries_global_phase(c in amplitudes(), n0 in 1usize..20, phi in -3.0f64..3.0) {
        let basis = Arc::new(build_basis(n0));
        let rotated = states::embed_mean_field(&c.scale(C64::from_polar(1.0, phi)), n0, &basis).unwrap();
        let plain = states::embed_mean_field(&c, n0, &basis).unwrap();
        let factor = C64::from_polar(1.0, n0 as f64 * phi);
        for (a, b) in rotated.amplitudes().iter().zip(plain.amplitudes()) {
            prop_assert!((a - b * factor).norm() < 1e-10);
        }
    }

    #[test]
    fn embedding_preserves_overlaps(a in amplitudes(), b in amplitudes(), n0 in 1usize..15) {
        let basis = Arc::new(build_basis(n0));
        let pa = states::embed_mean_field(&a, n0, &basis).unwrap();
        let pb = states::embed_mean_field(&b, n0, &basis).unwrap();
        let expected = a.inner(&b).powu(n0 as u32);
        prop_assert!((pa.inner(&pb) - expected).norm() < 1e-10);
    }

    #[test]
    fn embedding_commutes_with_site_swap(c in amplitudes(), n0 in 1usize..15) {
        let basis = Arc::new(build_basis(n0));
        let swapped = ModeAmplitudes::new(c.c2, c.c1);
        let psi = states::embed_mean_field(&c, n0, &basis).unwrap();
        let phi = states::embed_mean_field(&swapped, n0, &basis).unwrap();
        for k in 0..basis.dim() {
            let (n1, n2) = basis.state(k);
            let mirror = basis.index_of(n2, n1).unwrap();
            prop_assert!((psi.amplitudes()[k] - phi.amplitudes()[mirror]).norm() < 1e-12);
        }
    }

    #[test]
    fn pauli_algebra(e1 in amplitudes()) {
        let frame = BlochFrame::from_north_pole(e1);
        prop_assert!(frame.e1.inner(&frame.e2).norm() < TOL);
        prop_assert!((frame.e2.norm_sqr() - 1.0).abs() < TOL);
        let s = &frame.sigma;
        let mul = |a: &[[C64; 2]; 2], b: &[[C64; 2]; 2]| {
            let mut m = [[C64::new(0.0, 0.0); 2]; 2];
            for r in 0..2 {
                for c in 0..2 {
                    m[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
                }
            }
            m
        };
        let i = C64::new(0.0, 1.0);
        for a in 0..3 {
            let sq = mul(&s[a], &s[a]);
            prop_assert!((sq[0][0] - 1.0).norm() < TOL && (sq[1][1] - 1.0).norm() < TOL);
            prop_assert!(sq[0][1].norm() < TOL && sq[1][0].norm() < TOL);
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            // σ_a σ_b = i σ_c for cyclic (a, b, c)
            let ab = mul(&s[a], &s[b]);
            for r in 0..2 {
                for col in 0..2 {
                    prop_assert!((ab[r][col] - i * s[c][r][col]).norm() < TOL);
                    prop_assert!((s[a][r][col] - s[a][col][r].conj()).norm() < TOL);
                }
            }
        }
        let closed = observables::coefficient_matrices(&e1);
        for a in 0..3 {
            for r in 0..2 {
                for col in 0..2 {
                    prop_assert!((closed[a][r][col] - s[a][r][col]).norm() < TOL);
                }
            }
        }
    }

    #[test]
    fn contraction_of_pure_states_has_full_length(e1 in amplitudes(), c in amplitudes(), n in 0.5f64..200.0) {
        let frame = BlochFrame::from_north_pole(e1);
        let b = frame.contract(&SinglePartDM::from_mean_field(&c, n).sigma);
        prop_assert!((observables::norm3(&b) - n).abs() < 1e-10 * n);
        // north pole maps to +z
        let pole = frame.contract(&SinglePartDM::from_mean_field(&frame.e1, n).sigma);
        prop_assert!((pole[2] - n).abs() < 1e-10 * n && pole[0].abs() < 1e-10 * n);
    }

    #[test]
    fn contraction_of_mixtures_is_inside_the_sphere(
        e1 in amplitudes(),
        a in amplitudes(),
        b in amplitudes(),
        w in 0.0f64..1.0,
        n in 0.5f64..100.0,
    ) {
        let frame = BlochFrame::from_north_pole(e1);
        let sa = SinglePartDM::from_mean_field(&a, n * w);
        let sb = SinglePartDM::from_mean_field(&b, n * (1.0 - w));
        let mut mix = sa.sigma;
        for r in 0..2 {
            for c in 0..2 {
                mix[r][c] += sb.sigma[r][c];
            }
        }
        let v = frame.contract(&mix);
        prop_assert!(observables::norm3(&v) <= n * (1.0 + 1e-12));
        // linearity of the contraction
        let va = frame.contract(&sa.sigma);
        let vb = frame.contract(&sb.sigma);
        for k in 0..3 {
            prop_assert!((v[k] - va[k] - vb[k]).abs() < 1e-10 * n);
        }
    }

    #[test]
    fn bloch_vector_of_embedded_state_matches_mean_field(g in 0.0f64..2.0, gamma in -1.9f64..1.9, c in amplitudes(), n0 in 1usize..12) {
        let frame = BlochFrame::new(g, gamma).unwrap();
        let basis = Arc::new(build_basis(n0));
        let psi = states::embed_mean_field(&c, n0, &basis).unwrap();
        let q = observables::bloch_vector(&psi, &frame, 0.0);
        let mf = observables::bloch_vector_mf(&c, n0, &frame, 0.0);
        for k in 0..3 {
            prop_assert!((q.b[k] - mf.b[k]).abs() < 1e-10 * n0 as f64);
        }
        // collective spin operator expectation agrees with the contraction
        let sz = observables::collective_spin_operator(&basis, &frame.sigma[2]);
        let direct = <ManyBodyState as observables::QuantumState>::expect(&psi, &sz);
        prop_assert!((direct.re - q.b[2]).abs() < 1e-10 * n0 as f64);
    }

    #[test]
    fn stationary_states_solve_the_gpe(g in -3.0f64..3.0, gamma in -2.0f64..2.0) {
        let s = meanfield::stationary_states(g, gamma).unwrap();
        prop_assert!(meanfield::stationary_residual(&s.ground, s.mu_ground, g, gamma) < 1e-12);
        prop_assert!(meanfield::stationary_residual(&s.excited, s.mu_excited, g, gamma) < 1e-12);
        prop_assert_eq!(s.ground.pt_image(), s.ground);
        prop_assert!((s.excited.pt_image().c1 - s.excited.c1).norm() < TOL);
    }
}

#[test]
fn identity_operator_is_neutral() {
    let b = build_basis(4);
    let h = fock::hamiltonian(&b, 0.3);
    let id = SparseOperator::identity(b.dim());
    assert!(h.matmul(&id).sub(&h).max_abs() < TOL);
}
