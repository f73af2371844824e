use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{normal, quadrature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CopulaFamily {
    Clayton,
    Gaussian,
    Frank,
}

impl CopulaFamily {
    pub fn name(self) -> &'static str {
        match self {
            Self::Clayton => "clayton",
            Self::Gaussian => "gaussian",
            Self::Frank => "frank",
        }
    }

    pub fn admits(self, p: f64) -> bool {
        match self {
            Self::Clayton => p > 0.0 && p.is_finite(),
            Self::Gaussian => p > -1.0 && p < 1.0,
            Self::Frank => p != 0.0 && p.is_finite(),
        }
    }
}

impl std::str::FromStr for CopulaFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clayton" => Ok(Self::Clayton),
            "gaussian" | "normal" => Ok(Self::Gaussian),
            "frank" => Ok(Self::Frank),
            other => Err(Error::InvalidConfig(format!("unknown copula family '{other}'"))),
        }
    }
}

impl std::fmt::Display for CopulaFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct RawSpec {
    family: CopulaFamily,
    parameter: f64,
}

/// Parametric copula: Clayton (`delta > 0`), Gaussian (`-1 < rho < 1`) or
/// Frank (`theta != 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct CopulaSpec {
    family: CopulaFamily,
    parameter: f64,
}

impl TryFrom<RawSpec> for CopulaSpec {
    type Error = Error;
    fn try_from(r: RawSpec) -> Result<Self> {
        Self::new(r.family, r.parameter)
    }
}

impl From<CopulaSpec> for RawSpec {
    fn from(c: CopulaSpec) -> Self {
        Self {
            family: c.family,
            parameter: c.parameter,
        }
    }
}

/// Frank parameters this close to zero are evaluated as independence.
const FRANK_TINY: f64 = 1e-10;

#[inline]
fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

impl CopulaSpec {
    pub fn new(family: CopulaFamily, parameter: f64) -> Result<Self> {
        if !family.admits(parameter) {
            return Err(Error::CopulaDomain {
                family: family.name(),
                value: parameter,
            });
        }
        Ok(Self { family, parameter })
    }

    pub fn clayton(delta: f64) -> Result<Self> {
        Self::new(CopulaFamily::Clayton, delta)
    }

    pub fn gaussian(rho: f64) -> Result<Self> {
        Self::new(CopulaFamily::Gaussian, rho)
    }

    pub fn frank(theta: f64) -> Result<Self> {
        Self::new(CopulaFamily::Frank, theta)
    }

    /// The product copula, represented as a Gaussian copula with `rho = 0`.
    pub fn independence() -> Self {
        Self {
            family: CopulaFamily::Gaussian,
            parameter: 0.0,
        }
    }

    pub fn family(&self) -> CopulaFamily {
        self.family
    }

    pub fn parameter(&self) -> f64 {
        self.parameter
    }

    fn is_independence(&self) -> bool {
        match self.family {
            CopulaFamily::Gaussian => self.parameter == 0.0,
            CopulaFamily::Frank => self.parameter.abs() < FRANK_TINY,
            CopulaFamily::Clayton => false,
        }
    }

    /// `C(u, v)`.
    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        let (u, v) = (clamp01(u), clamp01(v));
        if u == 0.0 || v == 0.0 {
            return 0.0;
        }
        if u == 1.0 {
            return v;
        }
        if v == 1.0 {
            return u;
        }
        if self.is_independence() {
            return u * v;
        }
        let c = match self.family {
            CopulaFamily::Clayton => {
                let d = self.parameter;
                let a = (-d * u.ln()).exp_m1();
                let b = (-d * v.ln()).exp_m1();
                (-(a + b).ln_1p() / d).exp()
            }
            CopulaFamily::Gaussian => gaussian_cdf(u, v, self.parameter),
            CopulaFamily::Frank => {
                let t = self.parameter;
                -((frank_den(t, u, v) / (-t).exp_m1()).ln()) / t
            }
        };
        c.clamp((u + v - 1.0).max(0.0), u.min(v))
    }

    /// Copula density `d^2 C / du dv` on the open unit square.
    pub fn pdf(&self, u: f64, v: f64) -> f64 {
        if !(u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0) {
            return 0.0;
        }
        if self.is_independence() {
            return 1.0;
        }
        match self.family {
            CopulaFamily::Clayton => {
                let d = self.parameter;
                let (lu, lv) = (u.ln(), v.ln());
                let ln_a = ((-d * lu).exp_m1() + (-d * lv).exp_m1()).ln_1p();
                ((1.0 + d).ln() - (d + 1.0) * (lu + lv) - (1.0 / d + 2.0) * ln_a).exp()
            }
            CopulaFamily::Gaussian => {
                let r = self.parameter;
                let (a, b) = (normal::inv_cdf(u), normal::inv_cdf(v));
                let s2 = 1.0 - r * r;
                (-(r * r * (a * a + b * b) - 2.0 * r * a * b) / (2.0 * s2)).exp() / s2.sqrt()
            }
            CopulaFamily::Frank => {
                let t = self.parameter;
                let den = frank_den(t, u, v);
                -t * (-t).exp_m1() * (-t * (u + v)).exp() / (den * den)
            }
        }
    }

    /// `C_2(u, v) = dC/dv`, the distribution of the first rank given the second.
    pub fn conditional(&self, u: f64, v: f64) -> f64 {
        let u = clamp01(u);
        if u == 0.0 {
            return 0.0;
        }
        if u == 1.0 {
            return 1.0;
        }
        if self.is_independence() {
            return u;
        }
        let v = v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
        let p = match self.family {
            CopulaFamily::Clayton => {
                let d = self.parameter;
                let t = (d * v.ln()).exp() * (-d * u.ln()).exp_m1();
                (-(1.0 + d) / d * t.ln_1p()).exp()
            }
            CopulaFamily::Gaussian => {
                let r = self.parameter;
                let (a, b) = (normal::inv_cdf(u), normal::inv_cdf(v));
                normal::cdf((a - r * b) / (1.0 - r * r).sqrt())
            }
            CopulaFamily::Frank => {
                let t = self.parameter;
                (-t * v).exp() * (-t * u).exp_m1() / frank_den(t, u, v)
            }
        };
        clamp01(p)
    }

    /// `u` solving `C_2(u, v) = p`.
    pub fn conditional_inverse(&self, p: f64, v: f64) -> f64 {
        let p = clamp01(p);
        if p == 0.0 || p == 1.0 || self.is_independence() {
            return p;
        }
        let v = v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
        match self.family {
            CopulaFamily::Clayton => {
                let d = self.parameter;
                let t = (-d / (1.0 + d) * p.ln()).exp_m1();
                clamp01((-(t * (-d * v.ln()).exp()).ln_1p() / d).exp())
            }
            CopulaFamily::Gaussian => {
                let r = self.parameter;
                normal::cdf(r * normal::inv_cdf(v) + (1.0 - r * r).sqrt() * normal::inv_cdf(p))
            }
            CopulaFamily::Frank => {
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.conditional(mid, v) < p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    /// Draw `(u, v)` with `v` uniform and `u = C_2^{-1}(p; v)` for uniform `p`.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let v: f64 = open01(rng);
        let p: f64 = open01(rng);
        (self.conditional_inverse(p, v), v)
    }

    /// Kendall's tau implied by the parameter.
    pub fn kendall_tau(&self) -> f64 {
        let p = self.parameter;
        match self.family {
            CopulaFamily::Clayton => p / (p + 2.0),
            CopulaFamily::Gaussian => 2.0 / std::f64::consts::PI * p.asin(),
            CopulaFamily::Frank => {
                if self.is_independence() {
                    return 0.0;
                }
                let debye = quadrature::integrate(
                    |t| if t == 0.0 { 1.0 } else { t / t.exp_m1() },
                    0.0,
                    p.abs(),
                    1e-13,
                ) / p.abs();
                let tau = 1.0 - 4.0 / p.abs() * (1.0 - debye);
                tau.copysign(p)
            }
        }
    }
}

/// `(e^{-t} - 1) + (e^{-tu} - 1)(e^{-tv} - 1)`, arranged to avoid cancellation.
fn frank_den(t: f64, u: f64, v: f64) -> f64 {
    if t.abs() <= 1.0 {
        (-t).exp_m1() + (-t * u).exp_m1() * (-t * v).exp_m1()
    } else {
        (-t * (u + v)).exp() + (-t).exp() - (-t * u).exp() - (-t * v).exp()
    }
}

#[inline]
fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let x: f64 = rng.random();
        if x > 0.0 {
            return x;
        }
    }
}

/// `P(Z1 <= a, Z2 <= b)` for a standard bivariate normal with correlation `rho`,
/// written as `int_0^v C_2(u, w) dw`.
fn gaussian_cdf(u: f64, v: f64, rho: f64) -> f64 {
    upper_bivariate_normal(-normal::inv_cdf(u), -normal::inv_cdf(v), rho)
}

/// `P(X > h, Y > k)` for standard bivariate normals with correlation `r`,
/// by Genz's Gauss-Legendre scheme (absolute error near 1e-15).
#[allow(clippy::excessive_precision)]
fn upper_bivariate_normal(h: f64, k: f64, r: f64) -> f64 {
    const W6: [f64; 3] = [0.1713244923791705, 0.3607615730481384, 0.4679139345726904];
    const X6: [f64; 3] = [0.9324695142031522, 0.6612093864662647, 0.2386191860831970];
    const W12: [f64; 6] = [
        0.04717533638651177,
        0.1069393259953183,
        0.1600783285433464,
        0.2031674267230659,
        0.2334925365383547,
        0.2491470458134029,
    ];
    const X12: [f64; 6] = [
        0.9815606342467191,
        0.9041172563704750,
        0.7699026741943050,
        0.5873179542866171,
        0.3678314989981802,
        0.1252334085114692,
    ];
    const W20: [f64; 10] = [
        0.01761400713915212,
        0.04060142980038694,
        0.06267204833410906,
        0.08327674157670475,
        0.1019301198172404,
        0.1181945319615184,
        0.1316886384491766,
        0.1420961093183821,
        0.1491729864726037,
        0.1527533871307259,
    ];
    const X20: [f64; 10] = [
        0.9931285991850949,
        0.9639719272779138,
        0.9122344282513259,
        0.8391169718222188,
        0.7463319064601508,
        0.6360536807265150,
        0.5108670019508271,
        0.3737060887154196,
        0.2277858511416451,
        0.07652652113349733,
    ];
    let phi = normal::cdf;
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY { 1.0 } else { phi(-k) };
    }
    if k == f64::NEG_INFINITY {
        return phi(-h);
    }
    if r == 0.0 {
        return phi(-h) * phi(-k);
    }
    let (w, x): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&W6, &X6)
    } else if r.abs() < 0.75 {
        (&W12, &X12)
    } else {
        (&W20, &X20)
    };
    // nodes on (0, 2): 1 - x and 1 + x share a weight
    let nodes = || w.iter().zip(x).flat_map(|(&wi, &xi)| [(wi, 1.0 - xi), (wi, 1.0 + xi)]);
    let tp = 2.0 * std::f64::consts::PI;
    let mut hk = h * k;
    let p = if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin() / 2.0;
        let sum: f64 = nodes()
            .map(|(wi, xi)| {
                let sn = (asr * xi).sin();
                wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp()
            })
            .sum();
        sum * asr / tp + phi(-h) * phi(-k)
    } else {
        let k = if r < 0.0 {
            hk = -hk;
            -k
        } else {
            k
        };
        let mut bvn = 0.0;
        if r.abs() < 1.0 {
            let a_s = 1.0 - r * r;
            let a = a_s.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 80.0;
            let asr = -(bs / a_s + hk) / 2.0;
            if asr > -100.0 {
                bvn = a * asr.exp() * (1.0 - c * (bs - a_s) * (1.0 - d * bs) / 3.0 + c * d * a_s * a_s);
            }
            if hk > -100.0 {
                let b = bs.sqrt();
                let sp = tp.sqrt() * phi(-b / a);
                bvn -= (-hk / 2.0).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
            }
            let a = a / 2.0;
            let sum: f64 = nodes()
                .filter_map(|(wi, xi)| {
                    let xs = (a * xi) * (a * xi);
                    let asr = -(bs / xs + hk) / 2.0;
                    if asr <= -100.0 {
                        return None;
                    }
                    let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                    let rs = (1.0 - xs).sqrt();
                    let ep = (-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))).exp() / rs;
                    Some(wi * asr.exp() * (sp - ep))
                })
                .sum();
            bvn = (a * sum - bvn) / tp;
        }
        if r > 0.0 {
            bvn + phi(-h.max(k))
        } else if h >= k {
            -bvn
        } else {
            let l = if h < 0.0 { phi(k) - phi(h) } else { phi(-h) - phi(-k) };
            l - bvn
        }
    };
    p.clamp(0.0, 1.0)
}

/// Draw `n` rank pairs from the copula.
pub fn copula_sample<R: Rng + ?Sized>(spec: &CopulaSpec, n: usize, rng: &mut R) -> Vec<(f64, f64)> {
    (0..n).map(|_| spec.sample_pair(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    fn specs() -> Vec<CopulaSpec> {
        vec![
            CopulaSpec::clayton(0.5).unwrap(),
            CopulaSpec::clayton(1.5).unwrap(),
            CopulaSpec::clayton(5.0).unwrap(),
            CopulaSpec::gaussian(-0.8).unwrap(),
            CopulaSpec::gaussian(0.0).unwrap(),
            CopulaSpec::gaussian(0.5).unwrap(),
            CopulaSpec::frank(-5.0).unwrap(),
            CopulaSpec::frank(3.0).unwrap(),
            CopulaSpec::frank(0.5).unwrap(),
            CopulaSpec::frank(40.0).unwrap(),
        ]
    }

    #[test]
    fn gaussian_cdf_matches_integrated_conditional() {
        for rho in [-0.97, -0.8, -0.5, -0.1, 0.2, 0.6, 0.9, 0.97] {
            let s = (1.0f64 - rho * rho).sqrt();
            for (u, v) in [(0.03, 0.5), (0.4, 0.7), (0.9, 0.2), (0.6, 0.6), (0.99, 0.995)] {
                let a = normal::inv_cdf(u);
                let oracle = quadrature::integrate(
                    |w| if w <= 0.0 { 0.0 } else { normal::cdf((a - rho * normal::inv_cdf(w)) / s) },
                    0.0,
                    v,
                    1e-14,
                );
                let got = gaussian_cdf(u, v, rho);
                assert!((got - oracle).abs() < 1e-12, "rho {rho} ({u}, {v}): {got} vs {oracle}");
            }
        }
    }

    #[test]
    fn domain_checks() {
        assert!(CopulaSpec::clayton(0.0).is_err());
        assert!(CopulaSpec::clayton(-1.0).is_err());
        assert!(CopulaSpec::gaussian(1.0).is_err());
        assert!(CopulaSpec::frank(0.0).is_err());
        assert!(CopulaSpec::frank(f64::NAN).is_err());
    }

    #[test]
    fn boundary_values() {
        let c = CopulaSpec::clayton(1.5).unwrap();
        assert_eq!(c.cdf(0.3, 1.0), 0.3);
        assert_eq!(c.cdf(0.3, 0.0), 0.0);
        let g = CopulaSpec::independence();
        assert_eq!(g.cdf(0.3, 0.7), 0.3 * 0.7);
        assert_eq!(g.pdf(0.2, 0.9), 1.0);
        assert_eq!(CopulaSpec::gaussian(0.5).unwrap().conditional(0.5, 0.5), 0.5);
        assert_eq!(CopulaSpec::gaussian(0.5).unwrap().conditional_inverse(0.5, 0.5), 0.5);
    }

    #[test]
    fn clayton_closed_form_value() {
        // (2^1.5 + 2^1.5 - 1)^(-1/1.5), evaluated independently
        let expected = (2.0 * 2f64.powf(1.5) - 1.0).powf(-1.0 / 1.5);
        let c = CopulaSpec::clayton(1.5).unwrap().cdf(0.5, 0.5);
        assert!((c - expected).abs() < 1e-15);
    }

    #[test]
    fn conditional_matches_finite_difference() {
        let h = 1e-6;
        for spec in specs() {
            for i in 1..20 {
                for j in 1..20 {
                    let (u, v) = (i as f64 / 20.0, j as f64 / 20.0);
                    let fd = (spec.cdf(u, v + h) - spec.cdf(u, v - h)) / (2.0 * h);
                    let c2 = spec.conditional(u, v);
                    assert!((fd - c2).abs() < 1e-5, "{spec:?} ({u},{v}): {fd} vs {c2}");
                }
            }
        }
    }

    #[test]
    fn pdf_matches_finite_difference() {
        let h = 1e-5;
        for spec in specs() {
            for i in 1..15 {
                for j in 1..15 {
                    let (u, v) = (i as f64 / 15.0, j as f64 / 15.0);
                    let fd = (spec.conditional(u + h, v) - spec.conditional(u - h, v)) / (2.0 * h);
                    let c = spec.pdf(u, v);
                    assert!((fd - c).abs() < 1e-5 * c.max(1.0), "{spec:?} ({u},{v}): {fd} vs {c}");
                }
            }
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        let (x, w) = quadrature::gauss_legendre_unit(200);
        for spec in specs().into_iter().filter(|s| s.family() != CopulaFamily::Clayton || s.parameter() < 2.0) {
            let mut total = 0.0;
            for (a, wa) in x.iter().zip(&w) {
                for (b, wb) in x.iter().zip(&w) {
                    total += wa * wb * spec.pdf(*a, *b);
                }
            }
            assert!((total - 1.0).abs() < 1e-3, "{spec:?}: {total}");
        }
    }

    #[test]
    fn inverse_round_trip() {
        let mut rng = seeded_rng(17, "inverse");
        for spec in specs() {
            for _ in 0..300 {
                let p: f64 = rng.random::<f64>() * 0.998 + 0.001;
                let v: f64 = rng.random::<f64>() * 0.998 + 0.001;
                let u = spec.conditional_inverse(p, v);
                assert!((spec.conditional(u, v) - p).abs() < 1e-8, "{spec:?} p={p} v={v}");
            }
        }
    }

    #[test]
    fn clayton_sample_kendall_tau() {
        let spec = CopulaSpec::clayton(1.5).unwrap();
        let mut rng = seeded_rng(21, "kendall");
        let pairs = copula_sample(&spec, 20_000, &mut rng);
        let (u, v): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let tau = crate::numeric::stats::kendall_tau(&u, &v);
        assert!((tau - 1.5 / 3.5).abs() < 0.02, "{tau}");
    }

    #[test]
    fn frank_kendall_tau_matches_sample() {
        let spec = CopulaSpec::frank(3.0).unwrap();
        let mut rng = seeded_rng(22, "frank-kendall");
        let (u, v): (Vec<f64>, Vec<f64>) = copula_sample(&spec, 20_000, &mut rng).into_iter().unzip();
        let tau = crate::numeric::stats::kendall_tau(&u, &v);
        assert!((tau - spec.kendall_tau()).abs() < 0.02, "{tau} vs {}", spec.kendall_tau());
        // tabulated value for theta = 3
        assert!((spec.kendall_tau() - 0.3071).abs() < 1e-3);
    }

    #[test]
    fn serde_rejects_invalid_parameter() {
        assert!(serde_json::from_str::<CopulaSpec>(r#"{"family":"clayton","parameter":-2.0}"#).is_err());
        let ok: CopulaSpec = serde_json::from_str(r#"{"family":"frank","parameter":3.0}"#).unwrap();
        assert_eq!(ok, CopulaSpec::frank(3.0).unwrap());
    }
}
