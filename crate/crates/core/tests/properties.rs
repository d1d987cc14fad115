//! Cross-module invariants as property tests: spectral calculus, the
//! symmetric subspace projector, energy identities, kernel homogeneity.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;
use std::sync::{Arc, OnceLock};

use cr_yamabe::energy::{SphereEnergy, YamabeConstants};
use cr_yamabe::riesz::{homogeneity_defect, KernelKind, KernelSpec};
use cr_yamabe::spectral::{apply_a2k, pairing, HarmonicBasis, SpectralFunction};
use cr_yamabe::symmetry::{invariance_check, project_xg, SubgroupSpec, SymmetricSpace, Unitary};

fn ctx() -> &'static SphereEnergy {
    static CTX: OnceLock<SphereEnergy> = OnceLock::new();
    CTX.get_or_init(|| {
        let c = YamabeConstants::new(1, 1.0).unwrap();
        SphereEnergy::new(c, Arc::new(HarmonicBasis::build(1, 4, 4).unwrap())).unwrap()
    })
}

fn swap_space() -> &'static SymmetricSpace {
    static S: OnceLock<SymmetricSpace> = OnceLock::new();
    S.get_or_init(|| SymmetricSpace::new(SubgroupSpec::hopf_swap_odd(), &ctx().transform).unwrap())
}

fn random_fn(seed: u64, scale: f64) -> SpectralFunction {
    use rand::Rng;
    let b = ctx().basis().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = (0..b.len())
        .map(|_| scale * rng.gen_range(-1.0..1.0))
        .collect();
    SpectralFunction::from_coeffs(b, coeffs).unwrap()
}

/// Γ((Q+2k)/4 + j)/Γ((Q−2k)/4 + j) via log-gamma.
fn lambda_oracle(j: usize, k: f64, q: f64) -> f64 {
    let j = j as f64;
    (ln_gamma((q + 2.0 * k) / 4.0 + j) - ln_gamma((q - 2.0 * k) / 4.0 + j)).exp()
}

fn max_diff(a: &SpectralFunction, b: &SpectralFunction) -> f64 {
    a.coeffs
        .iter()
        .zip(&b.coeffs)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parseval_holds_on_the_quadrature(seed in any::<u64>()) {
        let u = random_fn(seed, 1.0);
        let t = &ctx().transform;
        let vals = t.synthesize_values(&u);
        let integral: f64 = vals.iter().zip(&t.quad.weights).map(|(v, w)| v * v * w).sum();
        let sum: f64 = u.coeffs.iter().map(|c| c * c).sum();
        prop_assert!((integral - sum).abs() <= 1e-8 * sum.max(1.0), "{} vs {}", integral, sum);
    }

    #[test]
    fn a2k_composes_as_a_product_of_gamma_ratios(seed in any::<u64>(), k in 0.1f64..1.9, k2 in 0.1f64..1.9) {
        let u = random_fn(seed, 1.0);
        let v = apply_a2k(&apply_a2k(&u, k).unwrap(), k2).unwrap();
        for (i, e) in u.basis.elements.iter().enumerate() {
            let (j, l) = (e.block.j, e.block.l);
            let m = lambda_oracle(j, k, 4.0) * lambda_oracle(l, k, 4.0)
                * lambda_oracle(j, k2, 4.0) * lambda_oracle(l, k2, 4.0);
            let want = m * u.coeffs[i];
            prop_assert!((v.coeffs[i] - want).abs() <= 1e-10 * want.abs().max(1.0));
        }
    }

    #[test]
    fn symmetric_projector_is_an_orthogonal_projection(seed in any::<u64>()) {
        let s = swap_space();
        let u = random_fn(seed, 1.0);
        let w = random_fn(seed ^ 0x9e37, 1.0);
        let pu = s.project(&u);
        prop_assert!(max_diff(&s.project(&pu), &pu) < 1e-12);
        // self-adjoint in the H^k inner product
        let lhs = pairing(&apply_a2k(&pu, 1.0).unwrap(), &w);
        let rhs = pairing(&apply_a2k(&u, 1.0).unwrap(), &s.project(&w));
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
        // commutes with the intertwining operator
        let a = s.project(&apply_a2k(&u, 0.7).unwrap());
        let b = apply_a2k(&pu, 0.7).unwrap();
        prop_assert!(max_diff(&a, &b) < 1e-10);
    }

    #[test]
    fn hopf_mask_is_an_exact_coefficient_projection(seed in any::<u64>()) {
        let u = random_fn(seed, 1.0);
        let g = SubgroupSpec::hopf();
        let pu = project_xg(&u, &g).unwrap();
        prop_assert_eq!(&project_xg(&pu, &g).unwrap().coeffs, &pu.coeffs);
        let a = project_xg(&apply_a2k(&u, 1.0).unwrap(), &g).unwrap();
        let b = apply_a2k(&pu, 1.0).unwrap();
        prop_assert_eq!(a.coeffs, b.coeffs);
        for (e, c) in pu.basis.elements.iter().zip(&pu.coeffs) {
            if e.block.j != e.block.l {
                prop_assert_eq!(*c, 0.0);
            }
        }
    }

    #[test]
    fn energy_is_invariant_under_unitary_rotations(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_fn(seed, 0.3).axpy(1.0, &ctx().constant_solution());
        let g = Unitary::random(&mut rng, 2);
        prop_assert!(invariance_check(&u, &g, ctx()).unwrap() <= 1e-6);
    }

    #[test]
    fn gradient_matches_energy_differences(seed in any::<u64>()) {
        let c = ctx();
        let u = random_fn(seed, 0.2).axpy(1.0, &c.constant_solution());
        let phi = random_fn(seed.wrapping_add(1), 1.0);
        let eps = 1e-4;
        let fd = (c.energy(&u.axpy(eps, &phi)) - c.energy(&u.axpy(-eps, &phi))) / (2.0 * eps);
        let an = pairing(&c.gradient(&u), &phi);
        prop_assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "{} vs {}", fd, an);
    }

    #[test]
    fn nehari_identity_holds(seed in any::<u64>(), s in 0.2f64..2.0) {
        let c = ctx();
        let u = random_fn(seed, 0.3).axpy(s, &c.constant_solution());
        prop_assert!(c.nehari_identity_defect(&u).abs() <= 1e-9 * (1.0 + c.lp_mass(&u)));
    }

    #[test]
    fn bubble_energy_constant_is_algebraic(n in 1usize..4, frac in 0.05f64..0.95) {
        let q = 2.0 * n as f64 + 2.0;
        let k = frac * q / 2.0;
        let c = YamabeConstants::new(n, k).unwrap();
        let want = (0.5 - 1.0 / c.p_star) * c.u0.powf(c.p_star) * c.total_mass;
        prop_assert!(c.c_e > 0.0);
        prop_assert!((c.c_e - want).abs() <= 1e-10 * want);
    }

    #[test]
    fn kernels_are_exactly_homogeneous(alpha in 0.1f64..3.9, seed in any::<u64>()) {
        for kind in [KernelKind::Riesz, KernelKind::Green, KernelKind::Hyper] {
            let spec = KernelSpec::new(kind, alpha, 1.0).unwrap();
            prop_assert!(homogeneity_defect(&spec, 50, seed).unwrap() <= 1e-12);
        }
    }
}

#[test]
fn phase_rotation_is_the_identity_on_hopf_invariant_functions() {
    let u = project_xg(&random_fn(5, 1.0), &SubgroupSpec::hopf()).unwrap();
    let g = Unitary::phase(2, 0.731);
    assert!(invariance_check(&u, &g, ctx()).unwrap() < 1e-12);
}
