//! Traces R(D) for a fair bit under Hamming distortion and prints it next
//! to the closed form `1 - Hb(D)`.

use layerrd::{rate_at, solve_rd_curve, DistortionMatrix, FiniteDistribution, SolverConfig};

fn hb(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

fn main() -> layerrd::Result<()> {
    let source = FiniteDistribution::uniform(2)?;
    let d = DistortionMatrix::hamming(2)?;
    let curve = solve_rd_curve(&source, &d, &SolverConfig::default())?;
    println!("{} points", curve.len());
    println!("{:>6}  {:>10}  {:>10}", "D", "solved", "1-Hb(D)");
    for i in 0..=10 {
        let at = 0.05 * i as f64;
        println!(
            "{at:>6.2}  {:>10.6}  {:>10.6}",
            rate_at(&curve, at)?,
            1.0 - hb(at)
        );
    }
    Ok(())
}
