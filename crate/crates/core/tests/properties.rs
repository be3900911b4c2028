use num_complex::Complex64 as C64;
use proptest::prelude::*;

use spin_echo::analysis::eta_f;
use spin_echo::basis::{binomial, enumerate_sector};
use spin_echo::echo::{allocate_samples, pi11, EchoSeries};
use spin_echo::expansions::{predict, PredictionKind};
use spin_echo::hamiltonians::{
    Boundary, BoundOperator, ModelSpec, SigmaFamily, Space, SpinOperator,
};
use spin_echo::numfmt::{parse_field, sci12};
use spin_echo::propagator::{evolve_amplitudes, PropagationConfig};

fn family(n: usize, which: u8, seed: u64) -> SigmaFamily {
    match which % 5 {
        0 => SigmaFamily::NnnXxz {
            boundary: Boundary::Periodic,
        },
        1 => SigmaFamily::NnnXxz {
            boundary: Boundary::Open,
        },
        2 => SigmaFamily::IsingNnn {
            boundary: Boundary::Periodic,
        },
        3 => SigmaFamily::OnsiteDisorder {
            fields: SigmaFamily::random_fields(n, seed),
        },
        _ => SigmaFamily::GenericSecular {
            bonds: SigmaFamily::ring_nnn_bonds(n),
        },
    }
}

fn model() -> impl Strategy<Value = (ModelSpec, f64, f64)> {
    (3usize..=8, 0.0..1.0f64, -1.0..1.0f64, any::<u8>(), any::<u64>(), -1.0..1.0f64, -1.0..1.0f64)
        .prop_map(|(n, js, alpha, which, seed, a, b)| {
            let mut spec = ModelSpec::xxz_ring(n, js).with_sigma(family(n, which, seed));
            spec.alpha = alpha;
            (spec, a, b)
        })
}

fn vector(dim: usize, seed: u64) -> Vec<C64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..dim)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

fn inner(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

fn bound(spec: &ModelSpec, a: f64, b: f64, sector: Option<usize>) -> BoundOperator {
    let op = SpinOperator::h0(spec).combine(a, &SpinOperator::sigma(spec), b);
    let space = match sector {
        Some(k) => Space::sector(spec.n, k.min(spec.n)).unwrap(),
        None => Space::full(spec.n).unwrap(),
    };
    BoundOperator::new(&op, space).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sector_rank_inverts_enumeration(n in 2usize..=14, k in 0usize..=14) {
        let k = k.min(n);
        let s = enumerate_sector(n, k).unwrap();
        prop_assert_eq!(s.len() as u64, binomial(n, k));
        for (i, b) in s.states().enumerate() {
            prop_assert_eq!(b.n_up(), k);
            prop_assert_eq!(s.rank(b.bits()), Some(i));
        }
    }

    #[test]
    fn generators_are_hermitian((spec, a, b) in model(), seed in any::<u64>(), sector in proptest::option::of(0usize..=8)) {
        let op = bound(&spec, a, b, sector);
        let x = vector(op.dim(), seed);
        let y = vector(op.dim(), seed ^ 0x5555);
        let mut hx = vec![C64::new(0.0, 0.0); op.dim()];
        let mut hy = hx.clone();
        op.apply_into(&x, &mut hx);
        op.apply_into(&y, &mut hy);
        let lhs = inner(&x, &hy);
        let rhs = inner(&hx, &y);
        prop_assert!((lhs - rhs).norm() < 1e-12 * (1.0 + lhs.norm()));
    }

    #[test]
    fn generators_are_linear((spec, a, b) in model(), seed in any::<u64>(), c in -2.0..2.0f64) {
        let op = bound(&spec, a, b, None);
        let x = vector(op.dim(), seed);
        let y = vector(op.dim(), seed.wrapping_add(1));
        let z: Vec<C64> = x.iter().zip(&y).map(|(p, q)| p * c + q).collect();
        let apply = |v: &[C64]| {
            let mut out = vec![C64::new(0.0, 0.0); v.len()];
            op.apply_into(v, &mut out);
            out
        };
        let (hx, hy, hz) = (apply(&x), apply(&y), apply(&z));
        for k in 0..z.len() {
            prop_assert!((hz[k] - (hx[k] * c + hy[k])).norm() < 1e-12);
        }
    }

    #[test]
    fn evolution_preserves_norm((spec, a, b) in model(), seed in any::<u64>(), t in -15.0..15.0f64) {
        let op = bound(&spec, a, b, Some(spec.n / 2));
        let x = vector(op.dim(), seed);
        let before = inner(&x, &x).re;
        let y = evolve_amplitudes(&op, &x, t, &PropagationConfig::default()).unwrap();
        prop_assert!((inner(&y, &y).re - before).abs() < 1e-9 * before);
    }

    #[test]
    fn sample_allocation_is_proportional_and_complete(
        sizes in proptest::collection::vec(0usize..400, 1..16),
        frac in 0.0..1.0f64,
    ) {
        let total: usize = sizes.iter().sum();
        let strata = sizes.iter().filter(|&&s| s > 0).count();
        prop_assume!(total > 0);
        let k = strata + ((total - strata) as f64 * frac) as usize;
        let alloc = allocate_samples(&sizes, k).unwrap();
        prop_assert_eq!(alloc.iter().sum::<usize>(), k);
        for (a, s) in alloc.iter().zip(&sizes) {
            prop_assert!(*a <= *s);
            prop_assert_eq!(*s > 0, *a > 0);
        }
    }

    #[test]
    fn scaling_rows_reconstruct_the_many_body_echo(
        n in 4usize..=16,
        m11 in proptest::collection::vec(0.3..0.999f64, 1..30),
        expo in 0.05..0.4f64,
    ) {
        let mmb: Vec<f64> = m11.iter().map(|m| m.powf(expo * n as f64)).collect();
        let t: Vec<f64> = (0..m11.len()).map(|k| k as f64).collect();
        let s = EchoSeries { t, m11: Some(m11.clone()), m_mb: Some(mmb.clone()), ..Default::default() };
        let tab = eta_f(&s, n, 0.1).unwrap();
        for (k, r) in tab.rows.iter().enumerate() {
            if r.valid {
                prop_assert!((r.f - r.eta / n as f64).abs() < 1e-15);
                let rebuilt = m11[k].powf(n as f64 * r.f);
                prop_assert!((rebuilt - mmb[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pi11_is_a_probability(m11 in proptest::collection::vec(-1.5..1.5f64, 1..20)) {
        let t: Vec<f64> = (0..m11.len()).map(|k| k as f64).collect();
        let s = EchoSeries { t, m11: Some(m11), ..Default::default() };
        prop_assert!(pi11(&s).unwrap().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn csv_numbers_round_trip(x in proptest::num::f64::NORMAL | proptest::num::f64::ZERO) {
        let back = parse_field(&sci12(x)).unwrap();
        prop_assert!((back - x).abs() <= 1e-12 * x.abs());
    }

    #[test]
    fn quadratic_coefficients_balance(n in 4usize..=16, js in 0.0..1.0f64) {
        let spec = ModelSpec::xxz_ring(n, js);
        let c = |k| predict(k, &spec).unwrap().coefficient;
        let m11 = c(PredictionKind::M11Order2);
        prop_assert!((m11 - (c(PredictionKind::MmbOrder2) - c(PredictionKind::MxOrder2))).abs() < 1e-15);
        prop_assert!((m11 - 0.5 * js * js).abs() < 1e-15);
    }
}
