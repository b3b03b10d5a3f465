//! Malware fixed at the first corpus year, benign drawn from later and later
//! years. A classifier that keys on era features looks better as the gap
//! grows.

use tempaudit::corpus::{generate_synthetic, Label, SynthSpec};
use tempaudit::harness::{run_year_sweep, ExperimentConfig, SweepParams};
use tempaudit::learners::ModelKind;
use tempaudit::variants::Ratio;

fn main() -> tempaudit::Result<()> {
    let corpus = generate_synthetic(&SynthSpec::preset_default(42))?;
    let cfg = ExperimentConfig {
        models: vec![ModelKind::Svm],
        ..ExperimentConfig::default()
    };
    let sweep = SweepParams {
        ratios: vec![Ratio::new(1, 1)],
        ..SweepParams::default()
    };
    let mut records = run_year_sweep(&cfg, &corpus, &sweep)?;
    records.sort_by_key(|r| r.sweep.map(|p| p.gap()));
    println!("gap  benign_year  f1     added-in-top10 (predicted benign)");
    for r in &records {
        let p = r.sweep.expect("sweep record");
        println!(
            "{:>3}  {:>11}  {:.3}  {:.3}",
            p.gap(),
            p.benign_year,
            r.pooled.f1,
            r.containment_added(Label::Benign, 10).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
