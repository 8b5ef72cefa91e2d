//! `rank_ssd` against brute-force least-squares fits.

#[path = "support/oracle.rs"]
mod oracle;

#[test]
fn rank_ssd_matches_brute_force_fits() {
    match oracle::check_random_sets(2024, 200, 1e-6) {
        Ok(worst) => eprintln!("worst relative deviation {worst:e}"),
        Err(case) => panic!("{case}"),
    }
}
