use tempaudit::corpus::{generate_synthetic, Label, SynthSpec};
use tempaudit::variants::{build_variant, builtin_specs, stratified_kfold};

fn main() -> tempaudit::Result<()> {
    let corpus = generate_synthetic(&SynthSpec::preset_default(42))?;
    let years = corpus.year_range().expect("preset has samples");

    for spec in builtin_specs(years, 200, 7)? {
        let v = build_variant(&corpus, &spec)?;
        println!(
            "{:<8} malware {}-{} benign {}-{} consistent={:<5} malware={} benign={}",
            spec.name,
            spec.malware_years.start,
            spec.malware_years.end,
            spec.benign_years.start,
            spec.benign_years.end,
            spec.is_temporally_consistent(),
            v.count(Label::Malware),
            v.count(Label::Benign)
        );
        let folds = stratified_kfold(&v, 10, 1)?;
        println!("         fold sizes {:?}", folds.fold_sizes());
    }
    Ok(())
}
