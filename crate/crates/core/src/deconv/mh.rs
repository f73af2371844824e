//! Random-walk Metropolis–Hastings draws of one observation's measurement error.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::{GaussianMixture, QuantileProcess};
use crate::qr::QuantileCurve;

/// Unnormalized log posterior of the error `u` given the observed value:
/// `log f(y_obs - u | x) + log f_U(u)`.
pub fn error_posterior_logpdf(
    u: f64,
    y_obs: f64,
    x: &[f64],
    qp: &QuantileProcess,
    mix: &GaussianMixture,
) -> f64 {
    posterior_logpdf(u, y_obs, &QuantileCurve::new(qp, x), mix)
}

#[inline]
pub(crate) fn posterior_logpdf(u: f64, y_obs: f64, curve: &QuantileCurve, mix: &GaussianMixture) -> f64 {
    let ld = curve.ln_density(y_obs - u);
    if ld == f64::NEG_INFINITY {
        return ld;
    }
    ld + mix.ln_pdf(u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhSettings {
    pub burn_in: usize,
    pub draws: usize,
    pub initial_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhChain {
    /// States after burn-in, in chain order.
    pub draws: Vec<f64>,
    /// Acceptance rate over the kept part of the chain.
    pub acceptance_rate: f64,
    /// Proposal scale frozen at the end of burn-in.
    pub scale: f64,
}

const ADAPT_BATCH: usize = 20;

/// Random-walk chain targeting `logpdf` from `init`.
///
/// The Gaussian proposal scale is tuned in batches during burn-in toward a
/// 20–40% acceptance rate and frozen afterwards.
pub fn mh_chain<F, R>(logpdf: F, init: f64, settings: MhSettings, rng: &mut R) -> MhChain
where
    F: Fn(f64) -> f64,
    R: Rng + ?Sized,
{
    let mut scale = if settings.initial_scale > 0.0 && settings.initial_scale.is_finite() {
        settings.initial_scale
    } else {
        1.0
    };
    let mut state = init;
    let mut current = logpdf(state);
    let step = |scale: f64, state: &mut f64, current: &mut f64, rng: &mut R| -> bool {
        let z: f64 = StandardNormal.sample(rng);
        let proposal = *state + scale * z;
        let lp = logpdf(proposal);
        let log_u = rng.random::<f64>().ln();
        // a -inf current state accepts any finite proposal
        if lp > f64::NEG_INFINITY && (log_u < lp - *current || *current == f64::NEG_INFINITY) {
            *state = proposal;
            *current = lp;
            true
        } else {
            false
        }
    };

    let mut batch_accepts = 0usize;
    for b in 0..settings.burn_in {
        if step(scale, &mut state, &mut current, rng) {
            batch_accepts += 1;
        }
        if (b + 1) % ADAPT_BATCH == 0 {
            let rate = batch_accepts as f64 / ADAPT_BATCH as f64;
            if rate < 0.2 {
                scale *= 0.6;
            } else if rate > 0.4 {
                scale *= 1.6;
            }
            batch_accepts = 0;
        }
    }

    let mut draws = Vec::with_capacity(settings.draws);
    let mut accepted = 0usize;
    for _ in 0..settings.draws {
        if step(scale, &mut state, &mut current, rng) {
            accepted += 1;
        }
        draws.push(state);
    }
    let acceptance_rate = if settings.draws == 0 {
        0.0
    } else {
        accepted as f64 / settings.draws as f64
    };
    MhChain {
        draws,
        acceptance_rate,
        scale,
    }
}

/// Starting state: no error when the observed value is inside the conditional
/// support, otherwise the error that moves it to the conditional median.
pub(crate) fn chain_start(y_obs: f64, curve: &QuantileCurve) -> f64 {
    if curve.density(y_obs) > 0.0 {
        0.0
    } else {
        y_obs - curve.quantile(0.5)
    }
}

/// Posterior error draws for one observation under the current reduced form and
/// error law.
pub fn mh_sample_errors<R: Rng + ?Sized>(
    y_obs: f64,
    x: &[f64],
    qp: &QuantileProcess,
    mix: &GaussianMixture,
    settings: MhSettings,
    rng: &mut R,
) -> MhChain {
    let curve = QuantileCurve::new(qp, x);
    let chain = mh_chain(
        |u| posterior_logpdf(u, y_obs, &curve, mix),
        chain_start(y_obs, &curve),
        settings,
        rng,
    );
    if chain.acceptance_rate == 0.0 && settings.draws > 0 {
        log::warn!("metropolis chain rejected every proposal (y={y_obs})");
    }
    chain
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TauGrid;
    use crate::numeric::{normal, stats};
    use crate::rng::seeded_rng;

    fn settings(draws: usize) -> MhSettings {
        MhSettings {
            burn_in: 200,
            draws,
            initial_scale: 1.0,
        }
    }

    /// Normal prior and normal likelihood: the posterior of `u` given `y` is
    /// N(y/2, 1/2).
    fn conjugate_logpdf(y: f64) -> impl Fn(f64) -> f64 {
        move |u: f64| normal::ln_pdf(y - u) + normal::ln_pdf(u)
    }

    #[test]
    fn conjugate_fixture_moments() {
        let y = 1.3;
        let mut rng = seeded_rng(1, "mh-moments");
        let chain = mh_chain(conjugate_logpdf(y), 0.0, settings(100_000), &mut rng);
        let m = stats::mean(&chain.draws);
        let v = stats::sample_sd(&chain.draws).powi(2);
        // generous effective-sample-size allowance for autocorrelation
        let se = (0.5f64 / 100_000.0).sqrt() * 4.0;
        assert!((m - y / 2.0).abs() < 3.0 * se, "mean {m}");
        assert!((v - 0.5).abs() < 0.025, "var {v}");
        assert!(chain.acceptance_rate > 0.15 && chain.acceptance_rate < 0.5);
    }

    #[test]
    fn conjugate_fixture_ks() {
        let y = -0.7;
        let mut rng = seeded_rng(2, "mh-ks");
        let chain = mh_chain(conjugate_logpdf(y), 0.0, settings(100_000), &mut rng);
        let sd = 0.5f64.sqrt();
        let d = stats::ks_distance(&chain.draws, |u| normal::cdf((u - y / 2.0) / sd));
        assert!(d < 0.02, "{d}");
    }

    #[test]
    fn symmetric_about_half_observation() {
        let y = 2.0;
        let lp = conjugate_logpdf(y);
        for d in [0.1, 0.5, 1.3] {
            assert!((lp(1.0 + d) - lp(1.0 - d)).abs() < 1e-12);
        }
    }

    fn uniform_process() -> QuantileProcess {
        let g = TauGrid::default();
        let rows = g.knots().iter().map(|&t| vec![t]).collect();
        QuantileProcess::new(g, rows).unwrap()
    }

    #[test]
    fn point_mass_error_keeps_draws_at_zero() {
        let qp = uniform_process();
        let mix = GaussianMixture::point_mass();
        let mut rng = seeded_rng(3, "mh-point");
        let chain = mh_sample_errors(0.5, &[1.0], &qp, &mix, settings(500), &mut rng);
        assert!(chain.draws.iter().all(|u| u.abs() < 1e-9));
    }

    #[test]
    fn posterior_is_minus_infinity_off_support() {
        let qp = uniform_process();
        let mix = GaussianMixture::single(1.0).unwrap();
        assert_eq!(error_posterior_logpdf(-2.0, 0.5, &[1.0], &qp, &mix), f64::NEG_INFINITY);
        assert!(error_posterior_logpdf(0.0, 0.5, &[1.0], &qp, &mix).is_finite());
    }

    #[test]
    fn start_outside_support_moves_to_median() {
        let qp = uniform_process();
        let curve = QuantileCurve::new(&qp, &[1.0]);
        assert_eq!(chain_start(0.5, &curve), 0.0);
        assert!((chain_start(3.0, &curve) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn deterministic_chains() {
        let qp = uniform_process();
        let mix = GaussianMixture::single(0.2).unwrap();
        let a = mh_sample_errors(0.4, &[1.0], &qp, &mix, settings(300), &mut seeded_rng(4, "c"));
        let b = mh_sample_errors(0.4, &[1.0], &qp, &mix, settings(300), &mut seeded_rng(4, "c"));
        assert_eq!(a, b);
    }
}
