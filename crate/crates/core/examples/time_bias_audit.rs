//! Cross-validated audit of one variant with the SVM: classification metrics
//! and the added/removed containment table.

use tempaudit::audit::report::render_time_bias_table;
use tempaudit::corpus::{generate_synthetic, Label, SynthSpec};
use tempaudit::harness::{run_experiment, write_outputs, ExperimentConfig, VariantRef};
use tempaudit::learners::ModelKind;
use tempaudit::variants::BuiltinVariant;

fn main() -> tempaudit::Result<()> {
    let corpus = generate_synthetic(&SynthSpec::preset_default(42))?;
    let cfg = ExperimentConfig {
        variants: vec![VariantRef::Builtin(BuiltinVariant::V1), VariantRef::Builtin(BuiltinVariant::V4)],
        models: vec![ModelKind::Svm],
        ..ExperimentConfig::default()
    };
    let records = run_experiment(&cfg, &corpus)?;
    for r in &records {
        println!("{}", r.summary_line());
        let g = r.importance.group(Label::Malware).expect("both groups are present");
        println!("  malware group: {} apps", g.n);
    }

    let rows: Vec<_> = records.iter().map(|r| (r.variant.clone(), r.time_bias.clone())).collect();
    print!("{}", render_time_bias_table(&rows, &cfg.top_t));

    let dir = std::env::temp_dir().join("tempaudit-example-audit");
    let files = write_outputs(&records, &corpus, &dir)?;
    println!("wrote {} files under {}", files.len(), dir.display());
    Ok(())
}
