use mecop::copula::CopulaSpec;
use mecop::model::{Dataset, Design, TauGrid};
use mecop::montecarlo::{generate, outcome_intercept, outcome_slope, McDesign};
use mecop::qr::{fit_process, QrFitConfig};
use mecop::rng::seeded_rng;
use nalgebra::Matrix2;
use rand::Rng;

fn latent_sample(n: usize, seed: u64) -> Dataset {
    let design = McDesign {
        n,
        copula: CopulaSpec::clayton(1.5).unwrap(),
        sigma: 1e-8,
        replications: 1,
    };
    generate(&design, seed, 0).unwrap().0
}

/// Asymptotic standard errors of (intercept, slope) at `tau` from the
/// sandwich `tau (1 - tau) H^-1 J H^-1 / n`, with the conditional density
/// `1 / dQ(tau | x) / dtau` known from the design.
fn sandwich_se(xs: &[f64], tau: f64) -> [f64; 2] {
    let n = xs.len() as f64;
    let (mut h, mut j) = (Matrix2::zeros(), Matrix2::zeros());
    for &x in xs {
        let f = 1.0 / (3.0 - 2.0 * tau + tau.exp() * x);
        let xx = Matrix2::new(1.0, x, x, x * x) / n;
        h += xx * f;
        j += xx;
    }
    let hi = h.try_inverse().unwrap();
    let v = hi * j * hi * (tau * (1.0 - tau) / n);
    [v[(0, 0)].sqrt(), v[(1, 1)].sqrt()]
}

#[test]
fn recovers_design_coefficients_within_sampling_error() {
    let data = latent_sample(5000, 21);
    let xs: Vec<f64> = (0..data.len()).map(|i| data.x.row(i)[1]).collect();
    let qp = fit_process(&data.y, &data.x, &QrFitConfig::default()).unwrap();
    for &tau in qp.grid().knots() {
        let b = qp.interpolate_beta(tau);
        let se = sandwich_se(&xs, tau);
        let err = [b[0] - outcome_intercept(tau), b[1] - outcome_slope(tau)];
        for k in 0..2 {
            assert!(err[k].abs() < 4.0 * se[k], "coefficient {k} at {tau}: error {} vs se {}", err[k], se[k]);
        }
    }
}

#[test]
fn median_fit_is_close_to_analytic_median_coefficients() {
    let data = latent_sample(5000, 21);
    let xs: Vec<f64> = (0..data.len()).map(|i| data.x.row(i)[1]).collect();
    let qp = fit_process(&data.y, &data.x, &QrFitConfig::default()).unwrap();
    let mid = qp.interpolate_beta(0.5);
    let se = sandwich_se(&xs, 0.5);
    assert!((mid[0] - 2.25).abs() < 0.05f64.max(3.0 * se[0]), "median intercept {}", mid[0]);
    assert!((mid[1] - 0.5f64.exp()).abs() < 0.05f64.max(3.0 * se[1]), "median slope {}", mid[1]);
}

#[test]
fn intercept_only_fit_is_a_sample_quantile() {
    let mut rng = seeded_rng(22, "qr-sample-quantile");
    let n = 801;
    let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 1.0).collect();
    let mut sorted = y.clone();
    sorted.sort_by(f64::total_cmp);
    let config = QrFitConfig {
        grid: TauGrid::new(vec![0.1, 0.3, 0.5, 0.8]).unwrap(),
        ..QrFitConfig::default()
    };
    let qp = fit_process(&y, &Design::intercept(n), &config).unwrap();
    for &tau in config.grid.knots() {
        // the check loss is minimised anywhere between these order statistics
        let k = (n as f64 * tau).ceil() as usize;
        let (lo, hi) = (sorted[k - 1], sorted[k.min(n - 1)]);
        let b = qp.interpolate_beta(tau)[0];
        assert!(b >= lo - 1e-6 && b <= hi + 1e-6, "tau {tau}: {b} outside [{lo}, {hi}]");
    }
}
