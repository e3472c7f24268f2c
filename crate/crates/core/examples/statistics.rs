//! Rank statistics used throughout: Spearman, Kruskal-Wallis with Dunn
//! post-hoc, and Welch's t-test.
//!
//!     cargo run --example statistics

use vcpa::stats::{dunn_posthoc, kruskal_wallis, spearman, welch_t};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // power scores against "accepts tracked location" (0/1), with ties
    let power = [7.0, 8.0, 3.0, 5.0, 9.0, 2.0, 6.0, 8.0, 4.0, 3.0];
    let accepts = [1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
    let rho = spearman(&power, &accepts)?;
    println!("spearman rho = {:.4}, p = {:.4}", rho.statistic, rho.p_value);

    let clusters = [
        vec![8.0, 7.0, 9.0, 8.0, 7.0, 8.0],
        vec![4.0, 5.0, 3.0, 4.0, 5.0, 4.0],
        vec![2.0, 3.0, 2.0, 4.0, 3.0, 2.0],
    ];
    let kw = kruskal_wallis(&clusters)?;
    println!("kruskal-wallis H = {:.4}, df = {}, p = {:.5}", kw.statistic, kw.df_or_groups, kw.p_value);

    let dunn = dunn_posthoc(&clusters)?;
    for c in &dunn.pairs {
        println!(
            "  dunn {} vs {}: z = {:+.3}, p = {:.5}, bonferroni p = {:.5}",
            c.i, c.j, c.result.statistic, c.result.p_value, c.p_bonferroni
        );
    }

    let entry = [6.0, 7.0, 5.0, 8.0, 6.0, 7.0, 7.0];
    let exit = [5.0, 6.0, 5.0, 6.0, 4.0];
    let t = welch_t(&entry, &exit)?;
    println!("welch t = {:.4}, df = {:.2}, p = {:.4}", t.statistic, t.df_or_groups, t.p_value);
    Ok(())
}
