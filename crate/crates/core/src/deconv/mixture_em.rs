//! EM for a finite normal mixture fitted to completed error draws.

use crate::error::{Error, Result};
use crate::model::{GaussianMixture, MIN_SD};
use crate::numeric::normal;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureEmTrace {
    /// Log-likelihood after each internal iteration (restarted after a reset).
    pub log_likelihood: Vec<f64>,
    /// Components re-initialized after collapsing.
    pub resets: usize,
}

const MAX_INNER: usize = 200;
const INNER_TOL: f64 = 1e-10;

fn pooled_moments(draws: &[f64]) -> (f64, f64) {
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|u| (u - mean) * (u - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Refit an `m`-component mixture to `draws`, starting from `init`.
///
/// The result is re-centred to mean zero and sorted by component mean.
pub fn mixture_em_update(draws: &[f64], m: usize, init: &GaussianMixture) -> Result<(GaussianMixture, MixtureEmTrace)> {
    if m == 0 || draws.len() < m {
        return Err(Error::InvalidMixture(format!(
            "{} draws cannot support {} components",
            draws.len(),
            m
        )));
    }
    let (pooled_mean, pooled_sd) = pooled_moments(draws);
    let pooled_sd = pooled_sd.max(MIN_SD);
    if m == 1 {
        let mix = GaussianMixture::new(vec![1.0], vec![pooled_mean], vec![pooled_sd])?;
        let ll = draws.iter().map(|&u| mix.ln_pdf(u - pooled_mean)).sum();
        return Ok((
            mix,
            MixtureEmTrace {
                log_likelihood: vec![ll],
                resets: 0,
            },
        ));
    }

    let (mut w, mut mu, mut sd) = if init.components() == m {
        (init.weights().to_vec(), init.means().to_vec(), init.sds().to_vec())
    } else {
        let fresh = GaussianMixture::initial(m, pooled_sd)?;
        (fresh.weights().to_vec(), fresh.means().to_vec(), fresh.sds().to_vec())
    };
    // the draws are not centred; shift the starting means onto them
    for v in &mut mu {
        *v += pooled_mean;
    }

    let n = draws.len();
    let mut resp = vec![0.0; n * m];
    let mut trace = MixtureEmTrace {
        log_likelihood: Vec::new(),
        resets: 0,
    };
    let mut logw = vec![0.0; m];
    for _ in 0..MAX_INNER {
        // E step
        for j in 0..m {
            logw[j] = if w[j] > 0.0 { w[j].ln() - sd[j].ln() } else { f64::NEG_INFINITY };
        }
        let mut ll = 0.0;
        for (i, &u) in draws.iter().enumerate() {
            let r = &mut resp[i * m..(i + 1) * m];
            let mut top = f64::NEG_INFINITY;
            for j in 0..m {
                r[j] = logw[j] + normal::ln_pdf((u - mu[j]) / sd[j]);
                top = top.max(r[j]);
            }
            let mut s = 0.0;
            for v in r.iter_mut() {
                *v = (*v - top).exp();
                s += *v;
            }
            for v in r.iter_mut() {
                *v /= s;
            }
            ll += top + s.ln();
        }
        if let Some(&prev) = trace.log_likelihood.last() {
            let done = (ll - prev).abs() <= INNER_TOL * (1.0 + ll.abs());
            trace.log_likelihood.push(ll);
            if done {
                break;
            }
        } else {
            trace.log_likelihood.push(ll);
        }

        // M step
        let mut collapsed = false;
        for j in 0..m {
            let nj: f64 = (0..n).map(|i| resp[i * m + j]).sum();
            if nj <= 1e-12 * n as f64 {
                w[j] = 0.0;
                collapsed = true;
                continue;
            }
            let mj = (0..n).map(|i| resp[i * m + j] * draws[i]).sum::<f64>() / nj;
            let vj = (0..n)
                .map(|i| resp[i * m + j] * (draws[i] - mj) * (draws[i] - mj))
                .sum::<f64>()
                / nj;
            w[j] = nj / n as f64;
            mu[j] = mj;
            sd[j] = vj.sqrt();
            if !(sd[j] > 1e-6 * pooled_sd) {
                collapsed = true;
            }
        }
        if collapsed {
            log::warn!("mixture component collapsed; restarting it at the pooled scale");
            for j in 0..m {
                if w[j] <= 0.0 || !(sd[j] > 1e-6 * pooled_sd) {
                    w[j] = 1.0 / m as f64;
                    sd[j] = pooled_sd;
                    trace.resets += 1;
                }
            }
            let total: f64 = w.iter().sum();
            for v in &mut w {
                *v /= total;
            }
            trace.log_likelihood.clear();
        }
    }
    let sd: Vec<f64> = sd.into_iter().map(|s| s.max(MIN_SD)).collect();
    Ok((GaussianMixture::new(w, mu, sd)?, trace))
}
