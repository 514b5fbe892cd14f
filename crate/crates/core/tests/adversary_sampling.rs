use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swapcal::{Adversary, AdversarySpec, ContextLaw, LabelLaw, Property};

const SAMPLES: usize = 100_000;

#[test]
fn bernoulli_mean_within_three_sigma() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for mu in [0.05, 0.3, 0.5, 0.9] {
        let law = LabelLaw::Bernoulli { mu };
        let mean = (0..SAMPLES).map(|_| law.sample(&mut rng)).sum::<f64>() / SAMPLES as f64;
        let band = 3.0 * (mu * (1.0 - mu) / SAMPLES as f64).sqrt();
        assert!(
            (mean - mu).abs() <= band,
            "mu {mu}: mean {mean}, band {band}"
        );
    }
}

#[test]
fn beta_samples_inside_dkw_band() {
    let alpha: f64 = 1e-3;
    let eps = ((2.0 / alpha).ln() / (2.0 * SAMPLES as f64)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for (a, b) in [(2.0, 2.0), (1.0, 3.0), (3.5, 1.5)] {
        let law = LabelLaw::Beta { a, b };
        let mut ys: Vec<f64> = (0..SAMPLES).map(|_| law.sample(&mut rng)).collect();
        ys.sort_by(f64::total_cmp);
        let n = SAMPLES as f64;
        let gap = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let f = law.cdf(y);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(gap <= eps, "beta({a}, {b}): sup gap {gap} > {eps}");
    }
}

#[test]
fn sampling_uses_one_variate() {
    use rand::Rng;
    for law in [
        LabelLaw::Bernoulli { mu: 0.4 },
        LabelLaw::Beta { a: 2.0, b: 5.0 },
        LabelLaw::PointMass { y: 0.3 },
    ] {
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(1);
        law.sample(&mut a);
        let _: f64 = b.random();
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }
    assert_eq!(LabelLaw::PointMass { y: 0.3 }.sample_with(0.9), 0.3);
    assert_eq!(LabelLaw::Bernoulli { mu: 1.0 }.sample_with(0.999), 1.0);
    assert_eq!(LabelLaw::Bernoulli { mu: 0.0 }.sample_with(0.0), 0.0);
}

#[test]
fn beta_family_laws_respect_bound() {
    let spec = AdversarySpec::Beta {
        weights: vec![1.5, -0.5, 0.25],
        concentration: 6.0,
        context: ContextLaw::Cube,
    };
    let median = Property::quantile(0.5, 1.0).unwrap();
    let rho = spec.lipschitz_bound(&median);
    let mut adv = Adversary::new(spec, median.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let laws: Vec<LabelLaw> = (0..500)
        .map(|_| {
            let x = adv.next_context(&mut rng);
            adv.next_label_law(&x)
        })
        .collect();
    for law in &laws {
        assert!(law.density_bound().unwrap() <= rho + 1e-12);
    }
    let report = median.check_assumption(&laws, 200).unwrap();
    assert!(
        report.lipschitz_estimate <= rho + 1e-9,
        "{} > {rho}",
        report.lipschitz_estimate
    );
}
