#![allow(dead_code)]

use overfit_core::{Spectrum, Target};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct Instance {
    pub label: String,
    pub spec: Spectrum,
    pub target: Target,
    pub n: u64,
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs())
}

/// Log-uniform draw on `[lo, hi]`.
fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp()
}

fn explicit_spectrum(rng: &mut ChaCha8Rng, m: usize) -> (String, Vec<f64>) {
    match rng.random_range(0..4) {
        0 => {
            let a = rng.random_range(0.3..3.0);
            (
                format!("explicit power {a:.3}"),
                (1..=m).map(|i| (i as f64).powf(-a)).collect(),
            )
        }
        1 => {
            let r = log_uniform(rng, 1e-3, 0.5);
            (
                format!("explicit geometric {r:.4}"),
                (0..m).map(|i| (-r * i as f64).exp()).collect(),
            )
        }
        2 => {
            let spikes = rng.random_range(1..=m / 4);
            let floor = log_uniform(rng, 1e-4, 0.5);
            let eig = (0..m)
                .map(|i| if i < spikes { 1.0 } else { floor })
                .collect();
            (format!("explicit spiked {spikes} {floor:.3e}"), eig)
        }
        _ => {
            let decades = rng.random_range(1.0..6.0);
            let eig = (0..m)
                .map(|_| log_uniform(rng, 10f64.powf(-decades), 1.0))
                .collect();
            (format!("explicit random {decades:.2} decades"), eig)
        }
    }
}

fn random_target(rng: &mut ChaCha8Rng, max_support: usize) -> Target {
    let support = rng.random_range(0..=max_support.min(200));
    let p = rng.random_range(0.0..3.0);
    let coeffs: Vec<f64> = (1..=support)
        .map(|i| {
            let z: f64 = rng.sample(StandardNormal);
            z * (i as f64).powf(-p / 2.0)
        })
        .collect();
    let sigma2 = if rng.random_bool(0.2) {
        0.0
    } else {
        log_uniform(rng, 1e-3, 10.0)
    };
    Target::new(coeffs, sigma2).expect("valid target")
}

/// Instance `index` of the random suite keyed by `seed`: explicit spectra of
/// several shapes and the parametric families, each with more positive modes
/// than samples. Instances are built on demand since parametric spectra hold
/// large tables.
pub fn instance(seed: u64, index: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let (label, spec, n, support) = match rng.random_range(0..10) {
        0..=5 => {
            let m = rng.random_range(20..1500);
            let n = rng.random_range(1..=(m as u64 - 1).min(300));
            let (label, eig) = explicit_spectrum(&mut rng, m);
            (label, Spectrum::explicit(eig).unwrap(), n, m)
        }
        6 => {
            let a = rng.random_range(1.2..3.0);
            let n = rng.random_range(1..=300);
            (
                format!("power_law {a:.3}"),
                Spectrum::power_law(a).unwrap(),
                n,
                1000,
            )
        }
        7 => {
            let a = rng.random_range(1.5..3.0);
            let n = rng.random_range(1..=300);
            (
                format!("log_power {a:.3}"),
                Spectrum::log_power(a).unwrap(),
                n,
                1000,
            )
        }
        8 => {
            let d_s = rng.random_range(1..=50);
            let n = rng.random_range(1..=300);
            let d_j = rng.random_range(2 * n..=20_000);
            (
                format!("junk {d_s} {d_j}"),
                Spectrum::junk(d_s, d_j).unwrap(),
                n,
                (d_s + d_j) as usize,
            )
        }
        _ => {
            let n = rng.random_range(1..=60);
            (
                "exponential".to_string(),
                Spectrum::exponential().unwrap(),
                n,
                30,
            )
        }
    };
    let target = random_target(&mut rng, support);
    Instance {
        label: format!("#{index} {label} n={n}"),
        spec,
        target,
        n,
    }
}

pub fn instances(seed: u64, count: u64) -> impl Iterator<Item = Instance> {
    (0..count).map(move |i| instance(seed, i))
}
