use proptest::prelude::*;
use psmix::kernels::theory_constants;
use psmix::{Family, KernelSpec, MixingDistribution, MixturePmf};

fn kernel_strategy() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        Just(KernelSpec::poisson()),
        Just(KernelSpec::geometric()),
        (1u32..20).prop_map(|r| KernelSpec::negative_binomial(r).unwrap()),
        Just(KernelSpec::logarithmic()),
    ]
}

fn theta_for(kernel: &KernelSpec, u: f64) -> f64 {
    match kernel.family() {
        Family::Poisson => 0.01 + 40.0 * u,
        _ => 0.01 + 0.97 * u,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partial_sums_match_analytic_tail(kernel in kernel_strategy(), u in 0.0f64..1.0) {
        let theta = theta_for(&kernel, u);
        let mut h = 0u64;
        while kernel.tail_at(theta, h) >= 1e-12 {
            h += 1;
        }
        let sum: f64 = (0..=h).map(|k| kernel.pmf_at(theta, k)).sum();
        prop_assert!((sum - (1.0 - kernel.tail_at(theta, h))).abs() < 1e-10);
    }

    #[test]
    fn ratio_recursion(kernel in kernel_strategy(), u in 0.0f64..1.0) {
        let theta = theta_for(&kernel, u);
        let offset = kernel.support_offset();
        for k in offset..1000 {
            let (a, b) = (kernel.pmf_at(theta, k), kernel.pmf_at(theta, k + 1));
            if a < 1e-280 || b < 1e-280 {
                break;
            }
            let predicted = a * kernel.coeff_ratio(k) * theta;
            prop_assert!(((b - predicted) / b).abs() < 1e-12, "k = {}", k);
        }
    }

    /// Beyond W the mixture pmf is strictly decreasing; above U each kernel
    /// pmf grows with θ on [0, θ̃].
    #[test]
    fn tail_shape_beyond_u_and_w(kernel in kernel_strategy(), q in 0.05f64..0.9, seed in any::<u64>()) {
        let bound = match kernel.family() {
            Family::Poisson => 1.0 + 10.0 * q,
            _ => q,
        };
        let c = theory_constants(&kernel, bound, bound / 2.0, 0.5).unwrap();
        let atoms: Vec<f64> = (0..3).map(|i| bound * (0.2 + 0.8 * ((seed >> (8 * i)) % 100) as f64 / 99.0)).collect();
        let mix = MixturePmf::new(kernel, MixingDistribution::discrete(atoms, vec![0.5, 0.3, 0.2]).unwrap()).unwrap();
        for k in c.w..c.w + 150 {
            let (a, b) = (mix.eval(k), mix.eval(k + 1));
            if a < 1e-300 {
                break;
            }
            prop_assert!(b < a, "k = {}", k);
        }
        for k in c.u..c.u + 30 {
            let mut prev = 0.0;
            for i in 0..=200 {
                let p = kernel.pmf_at(bound * i as f64 / 200.0, k);
                prop_assert!(p >= prev * (1.0 - 1e-13), "k = {}, step {}", k, i);
                prev = p;
            }
        }
    }
}
