//! Emit one audit as versioned JSON, flat CSV and the plain-text table, then
//! parse the JSON back.

use tempaudit::audit::report::{emit_csv, emit_json, parse_json, render_time_bias_table};
use tempaudit::corpus::{generate_synthetic, SynthSpec};
use tempaudit::harness::{run_experiment, ExperimentConfig, VariantRef};
use tempaudit::learners::ModelKind;
use tempaudit::variants::BuiltinVariant;

fn main() -> tempaudit::Result<()> {
    let corpus = generate_synthetic(&SynthSpec::preset_default(7))?;
    let window = corpus.year_range().expect("non-empty");
    let cfg = ExperimentConfig {
        variants: vec![VariantRef::Builtin(BuiltinVariant::V3)],
        models: vec![ModelKind::Svm],
        k: 5,
        ..ExperimentConfig::default()
    };
    let reports: Vec<_> = run_experiment(&cfg, &corpus)?
        .iter()
        .map(|r| r.to_report(&corpus, window))
        .collect();

    let json = emit_json(&reports)?;
    assert_eq!(parse_json(&json)?.runs, reports);
    println!("json: {} bytes, top malware feature {:?}", json.len(), reports[0].top_features.malware.first().map(|f| &f.name));
    print!("{}", emit_csv(&reports)?);
    let rows: Vec<_> = reports.iter().map(|r| (format!("{}/{}", r.variant, r.model), r.time_bias.clone())).collect();
    print!("{}", render_time_bias_table(&rows, &cfg.top_t));
    Ok(())
}
