//! Cross-checks the factored posterior against dense reference computations
//! on small random problems and prints the per-fixture errors.

use hdsa::oracle::{compare_fixture, fixture_grid, gsvd_identities, TinyFixture};

fn main() -> hdsa::Result<()> {
    println!("{:>2} {:>2} {:>2}  {:>9} {:>9} {:>9} {:>9} {:>9}", "m", "n", "N", "theta", "delta", "cov", "B theta", "gsvd");
    for (k, (m, n, count)) in fixture_grid().into_iter().enumerate() {
        let fx = TinyFixture::random(m, n, count, k as u64)?;
        let e = compare_fixture(&fx, k as u64)?;
        let g = gsvd_identities(&fx)?;
        println!(
            "{m:>2} {n:>2} {count:>2}  {:9.1e} {:9.1e} {:9.1e} {:9.1e} {:9.1e}",
            e.theta,
            e.delta,
            e.covariance,
            e.b_theta,
            g.max()
        );
    }
    Ok(())
}
