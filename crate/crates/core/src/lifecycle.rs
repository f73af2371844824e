//! Age-specific loading factors: observed income at age `a` is the latent
//! income scaled by `lambda(a)`, normalized to one at a reference age. Each
//! factor is a ratio of age-cell means.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifecycleProfile {
    pub reference_age: i64,
    pub lambdas: BTreeMap<i64, f64>,
    pub counts: BTreeMap<i64, usize>,
}

impl LifecycleProfile {
    pub fn lambda(&self, age: i64) -> Option<f64> {
        self.lambdas.get(&age).copied()
    }
}

/// `lambda(a) = mean(values | age = a) / mean(values | age = reference_age)`.
pub fn estimate_lambdas(values: &[f64], ages: &[i64], reference_age: i64) -> Result<LifecycleProfile> {
    if values.len() != ages.len() {
        return Err(Error::Lifecycle("values and ages differ in length".into()));
    }
    let mut sums: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for (&v, &a) in values.iter().zip(ages) {
        let e = sums.entry(a).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    let (ref_sum, ref_n) = sums
        .get(&reference_age)
        .copied()
        .ok_or_else(|| Error::Lifecycle(format!("no observations at reference age {reference_age}")))?;
    let ref_mean = ref_sum / ref_n as f64;
    if ref_mean == 0.0 || !ref_mean.is_finite() {
        return Err(Error::Lifecycle(format!(
            "mean at reference age {reference_age} is {ref_mean}; ratios undefined"
        )));
    }
    let mut lambdas = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for (&a, &(s, n)) in &sums {
        let lambda = if a == reference_age { 1.0 } else { (s / n as f64) / ref_mean };
        if !(lambda > 0.0) {
            return Err(Error::Lifecycle(format!("non-positive loading {lambda} at age {a}")));
        }
        lambdas.insert(a, lambda);
        counts.insert(a, n);
    }
    Ok(LifecycleProfile {
        reference_age,
        lambdas,
        counts,
    })
}

/// `values[i] / lambda(ages[i])`.
pub fn rescale(values: &[f64], ages: &[i64], profile: &LifecycleProfile) -> Result<Vec<f64>> {
    if values.len() != ages.len() {
        return Err(Error::Lifecycle("values and ages differ in length".into()));
    }
    values
        .iter()
        .zip(ages)
        .map(|(&v, &a)| {
            profile
                .lambda(a)
                .map(|l| v / l)
                .ok_or_else(|| Error::Lifecycle(format!("no loading estimated for age {a}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::stats;
    use crate::rng::seeded_rng;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn two_age_sample(n: usize) -> (Vec<f64>, Vec<i64>) {
        let mut rng = seeded_rng(4, "lifecycle");
        let latent = Normal::new(40.0, 8.0).unwrap();
        let noise = Normal::new(0.0, 3.0).unwrap();
        let mut values = Vec::with_capacity(n);
        let mut ages = Vec::with_capacity(n);
        for _ in 0..n {
            let young = rng.random::<bool>();
            let (age, lambda) = if young { (28, 0.8) } else { (35, 1.0) };
            values.push(lambda * latent.sample(&mut rng) + noise.sample(&mut rng));
            ages.push(age);
        }
        (values, ages)
    }

    #[test]
    fn single_reference_age() {
        let p = estimate_lambdas(&[1.0, 2.0, 3.0], &[30, 30, 30], 30).unwrap();
        assert_eq!(p.lambdas.len(), 1);
        assert_eq!(p.lambda(30), Some(1.0));
        assert_eq!(rescale(&[1.0, 2.0, 3.0], &[30, 30, 30], &p).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn recovers_loading_and_equalizes_means() {
        let (values, ages) = two_age_sample(100_000);
        let p = estimate_lambdas(&values, &ages, 35).unwrap();
        assert!((p.lambda(28).unwrap() - 0.8).abs() < 0.02);
        let r = rescale(&values, &ages, &p).unwrap();
        let cell = |a: i64| -> Vec<f64> { r.iter().zip(&ages).filter(|(_, &g)| g == a).map(|(v, _)| *v).collect() };
        let (young, old) = (cell(28), cell(35));
        let se = (stats::sample_sd(&young).powi(2) / young.len() as f64
            + stats::sample_sd(&old).powi(2) / old.len() as f64)
            .sqrt();
        assert!((stats::mean(&young) - stats::mean(&old)).abs() < 3.0 * se);
    }

    #[test]
    fn ratios_are_scale_invariant() {
        let (values, ages) = two_age_sample(1_000);
        let p = estimate_lambdas(&values, &ages, 35).unwrap();
        let scaled: Vec<f64> = values.iter().map(|v| v * 7.5).collect();
        let q = estimate_lambdas(&scaled, &ages, 35).unwrap();
        for (a, l) in &p.lambdas {
            assert!((l - q.lambdas[a]).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_data_round_trip() {
        // equal latent cell means make the ratio exactly the loading
        let latent = [10.0, 30.0, 10.0, 30.0];
        let ages = [25, 25, 30, 30];
        let obs: Vec<f64> = latent.iter().zip(&ages).map(|(v, &a)| if a == 25 { 0.5 * v } else { *v }).collect();
        let p = estimate_lambdas(&obs, &ages, 30).unwrap();
        assert_eq!(p.lambda(25), Some(0.5));
        assert_eq!(rescale(&obs, &ages, &p).unwrap(), latent.to_vec());
    }

    #[test]
    fn errors() {
        assert!(estimate_lambdas(&[1.0], &[20], 30).is_err());
        assert!(estimate_lambdas(&[0.0, 1.0], &[30, 31], 30).is_err());
        let p = estimate_lambdas(&[1.0, 2.0], &[30, 31], 30).unwrap();
        let err = rescale(&[1.0], &[44], &p).unwrap_err();
        assert!(err.to_string().contains("44"));
    }
}
