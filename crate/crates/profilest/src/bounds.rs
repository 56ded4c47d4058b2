//! Analytic certificates on any probability-maximizing distribution of a
//! nontrivial profile: support-size brackets, a cap on the continuous
//! mass, forced discreteness, and a cap on the number of distinct atom
//! probabilities. All of these follow from how merging or splitting atoms
//! changes the induced pattern probability; none require computing the
//! maximizer itself.

use num_bigint::BigUint;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::patterns::{is_trivial, Profile};
use crate::{Error, Result};

/// A support-size bound that may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Finite(u64),
    Infinite,
}

impl Bound {
    pub fn is_finite(&self) -> bool {
        matches!(self, Bound::Finite(_))
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            Bound::Finite(v) => *v as f64,
            Bound::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bound::Finite(v) => write!(f, "{v}"),
            Bound::Infinite => f.write_str("inf"),
        }
    }
}

/// An exact nonnegative rational, kept to avoid tolerance disputes in
/// certificate checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rational {
    pub num: u64,
    pub den: u64,
}

impl Rational {
    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn require_nontrivial(f: &Profile) -> Result<()> {
    if is_trivial(f) {
        return Err(Error::InvalidInput(
            "trivial profile: every distribution attains probability 1".into(),
        ));
    }
    Ok(())
}

/// Upper bound on the total support size: m + (m−1)/(2^μ_min − 2), floored
/// (support sizes are integers). Vacuous (infinite) as soon as any symbol
/// appears exactly once.
pub fn support_upper_bound(f: &Profile) -> Result<Bound> {
    require_nontrivial(f)?;
    let m = f.m();
    let mu_min = f.mu_min().expect("nontrivial profile is nonempty");
    if mu_min == 1 {
        return Ok(Bound::Infinite);
    }
    // floor(m + (m-1)/(2^mu_min - 2)) = m + (m-1) div (2^mu_min - 2)
    let denom = BigUint::from(2u32).pow(mu_min as u32) - BigUint::from(2u32);
    let extra = BigUint::from(m - 1) / denom;
    let extra: u64 = extra.try_into().unwrap_or(u64::MAX);
    Ok(Bound::Finite(m + extra))
}

/// Lower bound on the total support size:
/// m − 1 + (Σ_{j≠i*} 2^{−μ_j}) / (2^{μ_max} − 2), the sum running over all
/// symbols except one of maximum multiplicity. Infinite for all-distinct
/// profiles.
pub fn support_lower_bound(f: &Profile) -> Result<f64> {
    require_nontrivial(f)?;
    match lower_bound_fraction(f) {
        None => Ok(f64::INFINITY),
        Some((m, num, den)) => Ok((m - 1) as f64 + big_to_f64(&num) / big_to_f64(&den)),
    }
}

/// Smallest integer support size consistent with [`support_lower_bound`],
/// computed exactly. `Bound::Infinite` for all-distinct profiles.
pub fn support_lower_ceil(f: &Profile) -> Result<Bound> {
    require_nontrivial(f)?;
    match lower_bound_fraction(f) {
        None => Ok(Bound::Infinite),
        Some((m, num, den)) => {
            let ceil = (num + &den - BigUint::from(1u32)) / den;
            let ceil: u64 = ceil.try_into().unwrap_or(u64::MAX);
            Ok(Bound::Finite(m - 1 + ceil))
        }
    }
}

/// (m, numerator, denominator) of the fractional part of the lower bound:
/// Σ_{j≠i*} 2^{μ_max−μ_j} over 2^{μ_max}·(2^{μ_max}−2). None when
/// μ_max = 1 (the bound is infinite).
fn lower_bound_fraction(f: &Profile) -> Option<(u64, BigUint, BigUint)> {
    let m = f.m();
    let mu_max = f.mu_max().expect("nontrivial profile is nonempty");
    if mu_max == 1 {
        return None;
    }
    let two = BigUint::from(2u32);
    let mut num = BigUint::from(0u32);
    let mut skipped_max = false;
    for (&mu, &phi) in f.prevalences() {
        let mut count = phi;
        if mu == mu_max && !skipped_max {
            count -= 1;
            skipped_max = true;
        }
        if count > 0 {
            num += BigUint::from(count) * two.pow((mu_max - mu) as u32);
        }
    }
    let pow_max = two.pow(mu_max as u32);
    let den = &pow_max * (&pow_max - &two);
    Some((m, num, den))
}

fn big_to_f64(x: &BigUint) -> f64 {
    // Good enough for reporting; exact comparisons use the integers.
    x.to_string().parse::<f64>().unwrap_or(f64::INFINITY)
}

/// Cap on the continuous mass of any high-profile distribution: the
/// fraction of symbols appearing exactly once, φ₁/n.
pub fn continuous_mass_cap(f: &Profile) -> Result<Rational> {
    require_nontrivial(f)?;
    Ok(Rational {
        num: f.phi1(),
        den: f.n(),
    })
}

/// True when any high-profile distribution must be purely discrete:
/// length ≥ 2 with at most one singleton.
pub fn is_discrete_forced(f: &Profile) -> bool {
    f.n() >= 2 && f.phi1() <= 1
}

/// Cap on the number of distinct atom probabilities in any high-profile
/// distribution: min(2^m, n−1).
pub fn distinct_values_cap(f: &Profile) -> u64 {
    let m = f.m();
    let n_minus_1 = f.n().saturating_sub(1);
    if m >= 63 {
        n_minus_1
    } else {
        (1u64 << m).min(n_minus_1)
    }
}

/// The two threshold corollaries, evaluated exactly:
/// `k_equals_m` iff 2^μ_min > m + 1 (the maximizer uses no extra symbols);
/// `s_exceeds_m` iff 2^μ_max < √m + 1 (its support strictly exceeds m).
pub fn corollary_flags(f: &Profile) -> (bool, bool) {
    let m = f.m();
    let mu_min = f.mu_min().unwrap_or(0);
    let mu_max = f.mu_max().unwrap_or(0);
    // mu_min > log2(m+1)  <=>  2^mu_min > m+1
    let k_equals_m = mu_min >= 64 || (mu_min > 0 && (1u128 << mu_min) > (m as u128 + 1));
    // mu_max < log2(sqrt(m)+1)  <=>  2^mu_max - 1 < sqrt(m)  <=>  (2^mu_max - 1)^2 < m
    let s_exceeds_m = if mu_max == 0 || mu_max >= 32 {
        false
    } else {
        let t = (1u128 << mu_max) - 1;
        t * t < m as u128
    };
    (k_equals_m, s_exceeds_m)
}

/// The full certificate bundle for a nontrivial profile.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub support_upper: Bound,
    pub support_lower: f64,
    pub support_lower_ceil: Bound,
    pub continuous_cap: Rational,
    pub discrete_forced: bool,
    pub distinct_values_cap: u64,
    pub k_equals_m: bool,
    pub s_exceeds_m: bool,
}

impl BoundsReport {
    pub fn of(f: &Profile) -> Result<Self> {
        require_nontrivial(f)?;
        let (k_equals_m, s_exceeds_m) = corollary_flags(f);
        Ok(Self {
            support_upper: support_upper_bound(f)?,
            support_lower: support_lower_bound(f)?,
            support_lower_ceil: support_lower_ceil(f)?,
            continuous_cap: continuous_mass_cap(f)?,
            discrete_forced: is_discrete_forced(f),
            distinct_values_cap: distinct_values_cap(f),
            k_equals_m,
            s_exceeds_m,
        })
    }

    /// Checks a concrete distribution against every certificate. Returns
    /// the violated certificates (empty when all hold).
    pub fn violations(&self, d: &crate::probability::Distribution) -> Vec<String> {
        use crate::probability::SupportSize;
        let mut out = Vec::new();
        let q = d.continuous_mass();
        match d.total_size() {
            SupportSize::Infinite => {
                if let Bound::Finite(upper) = self.support_upper {
                    out.push(format!(
                        "support is infinite but the upper bound is {upper}"
                    ));
                }
            }
            SupportSize::Finite(s) => {
                if let Bound::Finite(upper) = self.support_upper {
                    if s as u64 > upper {
                        out.push(format!("support {s} exceeds upper bound {upper}"));
                    }
                }
                match self.support_lower_ceil {
                    Bound::Finite(lower) => {
                        if (s as u64) < lower {
                            out.push(format!("support {s} below lower bound {lower}"));
                        }
                    }
                    Bound::Infinite => {
                        out.push(format!(
                            "support {s} is finite but the lower bound is infinite"
                        ));
                    }
                }
            }
        }
        if q > self.continuous_cap.value() + 1e-12 {
            out.push(format!(
                "continuous mass {q} exceeds cap {}/{}",
                self.continuous_cap.num, self.continuous_cap.den
            ));
        }
        if self.discrete_forced && q > 0.0 {
            out.push(format!("continuous mass {q} but discreteness is forced"));
        }
        // Atoms a numeric optimizer drove to a common value agree only to
        // rounding; merge before counting.
        let distinct = crate::probability::distinct_count(d.atoms(), 1e-6) as u64;
        if distinct > self.distinct_values_cap {
            out.push(format!(
                "{distinct} distinct atom values exceed cap {}",
                self.distinct_values_cap
            ));
        }
        out
    }
}

impl Serialize for BoundsReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("BoundsReport", 7)?;
        match self.support_upper {
            Bound::Finite(v) => st.serialize_field("support_upper", &v)?,
            Bound::Infinite => st.serialize_field("support_upper", "inf")?,
        }
        if self.support_lower.is_finite() {
            st.serialize_field("support_lower", &self.support_lower)?;
        } else {
            st.serialize_field("support_lower", "inf")?;
        }
        st.serialize_field("continuous_cap", &self.continuous_cap.value())?;
        st.serialize_field("discrete_forced", &self.discrete_forced)?;
        st.serialize_field("distinct_values_cap", &self.distinct_values_cap)?;
        st.serialize_field("k_equals_m", &self.k_equals_m)?;
        st.serialize_field("s_exceeds_m", &self.s_exceeds_m)?;
        st.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(pairs: &[(u64, u64)]) -> Profile {
        Profile::new(pairs.iter().copied().collect()).unwrap()
    }

    #[test]
    fn upper_bound_examples() {
        // 2^m: m + (m-1)/2 floored
        assert_eq!(
            support_upper_bound(&profile(&[(2, 10)])).unwrap(),
            Bound::Finite(14)
        );
        assert_eq!(
            support_upper_bound(&profile(&[(2, 3)])).unwrap(),
            Bound::Finite(4)
        );
        assert_eq!(
            support_upper_bound(&profile(&[(1, 2), (2, 1)])).unwrap(),
            Bound::Infinite
        );
        assert_eq!(
            support_upper_bound(&profile(&[(3, 4)])).unwrap(),
            Bound::Finite(4)
        );
        assert!(support_upper_bound(&profile(&[(1, 1)])).is_err());
    }

    #[test]
    fn lower_bound_examples() {
        let lb = support_lower_bound(&profile(&[(2, 10)])).unwrap();
        assert!((lb - 1.125 * 9.0).abs() < 1e-12, "got {lb}");
        assert_eq!(
            support_lower_bound(&profile(&[(1, 5)])).unwrap(),
            f64::INFINITY
        );
        let lb = support_lower_bound(&profile(&[(1, 1), (2, 1)])).unwrap();
        assert!((lb - 1.25).abs() < 1e-12);
        assert_eq!(
            support_lower_ceil(&profile(&[(1, 1), (2, 1)])).unwrap(),
            Bound::Finite(2)
        );
        assert!(support_lower_bound(&Profile::empty()).is_err());
    }

    #[test]
    fn lower_bound_huge_multiplicity_is_exact() {
        // {100:1, 2:1}: the fraction is tiny but positive, so the ceiling
        // adds one.
        let f = profile(&[(100, 1), (2, 1)]);
        assert_eq!(support_lower_ceil(&f).unwrap(), Bound::Finite(2));
        // the f64 view rounds the 2^-102 fraction away; the ceiling above
        // is the exact statement
        let lb = support_lower_bound(&f).unwrap();
        assert!((1.0..1.0 + 1e-6).contains(&lb));
    }

    #[test]
    fn continuous_cap_examples() {
        let cap = continuous_mass_cap(&profile(&[(1, 5)])).unwrap();
        assert_eq!((cap.num, cap.den), (5, 5));
        let cap = continuous_mass_cap(&profile(&[(7, 1)])).unwrap();
        assert_eq!((cap.num, cap.den), (0, 7));
        let cap = continuous_mass_cap(&profile(&[(1, 2), (2, 1)])).unwrap();
        assert_eq!((cap.num, cap.den), (2, 4));
    }

    #[test]
    fn discreteness_examples() {
        assert!(is_discrete_forced(&profile(&[(2, 2)])));
        assert!(!is_discrete_forced(&profile(&[(1, 2), (2, 1)])));
        assert!(is_discrete_forced(&profile(&[(1, 1), (3, 1)])));
        assert!(!is_discrete_forced(&profile(&[(1, 1)])));
    }

    #[test]
    fn distinct_values_cap_examples() {
        assert_eq!(distinct_values_cap(&profile(&[(1, 2), (2, 1)])), 3);
        assert_eq!(distinct_values_cap(&profile(&[(2, 10)])), 19);
        assert_eq!(distinct_values_cap(&profile(&[(50, 2)])), 4);
    }

    #[test]
    fn corollary_flag_examples() {
        let abracadabra = profile(&[(1, 2), (2, 2), (5, 1)]);
        assert_eq!(corollary_flags(&abracadabra), (false, false));
        assert_eq!(corollary_flags(&profile(&[(4, 3)])), (true, false));
        let all_distinct_100 = profile(&[(1, 100)]);
        assert_eq!(corollary_flags(&all_distinct_100), (false, true));
    }

    #[test]
    fn corollaries_consistent_with_bounds() {
        for n in 2..=12u64 {
            for f in crate::enumerate::profiles_of_size(n) {
                let (k_eq, s_gt) = corollary_flags(&f);
                if k_eq {
                    assert_eq!(
                        support_upper_bound(&f).unwrap(),
                        Bound::Finite(f.m()),
                        "{f}"
                    );
                }
                if s_gt {
                    assert!(support_lower_bound(&f).unwrap() > f.m() as f64, "{f}");
                }
                if let (Bound::Finite(up), lo) = (
                    support_upper_bound(&f).unwrap(),
                    support_lower_bound(&f).unwrap(),
                ) {
                    assert!(lo <= up as f64, "{f}: lower {lo} > upper {up}");
                }
            }
        }
    }

    #[test]
    fn report_serializes_flat_with_inf_strings() {
        let report = BoundsReport::of(&profile(&[(1, 2), (2, 1)])).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        let obj = json.as_object().unwrap();
        assert_eq!(obj.len(), 7);
        assert_eq!(obj["support_upper"], serde_json::json!("inf"));
        assert!((obj["continuous_cap"].as_f64().unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(obj["discrete_forced"], serde_json::json!(false));
        assert_eq!(obj["distinct_values_cap"], serde_json::json!(3));

        let report = BoundsReport::of(&profile(&[(2, 10)])).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["support_upper"], serde_json::json!(14));
        assert!((json["support_lower"].as_f64().unwrap() - 10.125).abs() < 1e-12);
    }
}
