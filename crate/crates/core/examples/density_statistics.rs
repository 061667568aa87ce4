//! Significance tests and density estimates on effective densities.

use densitometer::stats::{
    anova_oneway, kde, regularized_incomplete_beta, silverman_bandwidth, t_test_unpaired, Bandwidth,
};

fn main() -> densitometer::Result<()> {
    let small = [0.70, 0.74, 0.68, 0.72, 0.71, 0.69];
    let medium = [0.52, 0.49, 0.50, 0.53, 0.48, 0.51];
    let large = [0.44, 0.42, 0.45, 0.41, 0.43, 0.44];

    let anova = anova_oneway(&[&small, &medium, &large])?;
    println!(
        "ANOVA: F = {:.2}, df = {:?}, p = {:.3e}",
        anova.statistic, anova.df, anova.p
    );
    let t = t_test_unpaired(&small, &large)?;
    println!("t-test 0.1x vs 1x: t = {:.2}, p = {:.3e}", t.statistic, t.p);

    let h = silverman_bandwidth(&small)?;
    let grid: Vec<f64> = (0..=20).map(|i| 0.6 + 0.01 * i as f64).collect();
    let density = kde(&small, &grid, Bandwidth::Auto)?;
    println!("KDE bandwidth {h:.4}");
    for (x, y) in grid.iter().zip(&density).step_by(4) {
        println!("  {x:.2}  {}", "#".repeat((y * 2.0).round() as usize));
    }

    println!(
        "I_0.3(2, 5) = {:.6}",
        regularized_incomplete_beta(2.0, 5.0, 0.3)?
    );
    Ok(())
}
