//! EM on a pattern of length over a thousand: the assignment space is far
//! past exact enumeration, so the Metropolis E-step carries the run. The
//! fitted distribution's exact probability (computed in log space) must
//! come out close to, and never above, the known optimum.

use profilest::patterns::{canonical_pattern, Profile};
use profilest::pml_em::{em_pml, EmConfig};
use profilest::pml_exact::pml_uniform_profile;

#[test]
fn em_handles_length_1002_pattern() {
    // profile 2^501: n = 1002, closed-form optimum is uniform over k̂
    let profile = Profile::new([(2u64, 501u64)].into_iter().collect()).unwrap();
    let pattern = canonical_pattern(&profile);
    let optimum = pml_uniform_profile(2, 501).unwrap();
    let k_hat = optimum.distribution.k() as u64;

    let cfg = EmConfig {
        k: k_hat,
        q_enabled: false,
        iterations: 15,
        chains: 2,
        mcmc_steps_per_estep: 20000,
        burn_in: 2000,
        seed: 41,
        ..EmConfig::default()
    };
    let r = em_pml(&pattern, &cfg).unwrap();
    // sampling noise can starve a few slots permanently; nearly all must
    // survive
    let k_kept = r.distribution.k() as u64;
    assert!(
        k_kept >= k_hat - 15,
        "only {k_kept} of {k_hat} slots survived"
    );
    assert!(r.ln_probability.is_finite());
    // never above the true maximum, and within one nat of it
    assert!(
        r.ln_probability <= optimum.ln_probability + 1e-9,
        "em {} above optimum {}",
        r.ln_probability,
        optimum.ln_probability
    );
    assert!(
        r.ln_probability >= optimum.ln_probability - 1.0,
        "em {} too far below optimum {}",
        r.ln_probability,
        optimum.ln_probability
    );
    // the linear-space probability underflows at this length; the log
    // carries the information
    assert!(optimum.ln_probability < -2000.0);
}
