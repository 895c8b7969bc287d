mod support;

use support::anchors::*;

#[test]
fn overlaps_match_toolbox_states() {
    let d = overlap_deviation(11);
    assert!(d < 1e-9, "worst overlap deviation {d:e}");
}

#[test]
fn sign_posteriors_match_direct_bayes() {
    let d = posterior_deviation(12);
    assert!(d < 1e-10, "worst posterior deviation {d:e}");
}

#[test]
fn noise_scalars_match_toolbox_variances() {
    let d = variance_deviation(14);
    assert!(d < 1e-9, "worst variance deviation {d:e}");
}

#[test]
fn gamma_densities_match_toolbox_marginals() {
    let d = gamma_density_deviation(15);
    assert!(d < 1e-9, "worst density deviation {d:e}");
}

#[test]
fn bob_outcome_density_matches_toolbox_heterodyne() {
    let d = heterodyne_deviation(16);
    assert!(d < 1e-9, "worst density deviation {d:e}");
}

#[test]
fn conditional_eigenvalues_match_numeric_eigensolve() {
    let d = eigenvalue_deviation(17);
    assert!(d < 1e-10, "worst eigenvalue deviation {d:e}");
}
