//! Generate the default synthetic corpus, print its cell counts and write it
//! to a JSON-lines file.
//!
//! ```text
//! cargo run --example generate_corpus -- /tmp/corpus.jsonl
//! ```

use tempaudit::corpus::{generate_synthetic, load_corpus, save_corpus, Label, SynthSpec};

fn main() -> tempaudit::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "corpus.jsonl".to_string());
    let corpus = generate_synthetic(&SynthSpec::preset_default(42))?;

    let years = corpus.year_range().expect("preset has samples");
    println!("{} samples, {} features, years {}-{}", corpus.samples.len(), corpus.n_features(), years.start, years.end);
    for year in years.years() {
        println!(
            "  {year}: malware={} benign={}",
            corpus.cell_count(year, Label::Malware),
            corpus.cell_count(year, Label::Benign)
        );
    }

    let added = corpus.catalog.features.iter().filter(|f| f.added_year.is_some()).count();
    let removed = corpus.catalog.features.iter().filter(|f| f.removed_year.is_some()).count();
    let malice = corpus.catalog.features.iter().filter(|f| f.is_malice_signal()).count();
    println!("lifecycle: {added} added, {removed} removed; {malice} malice-signal features");

    save_corpus(&corpus, &out)?;
    assert_eq!(load_corpus(&out)?, corpus);
    println!("wrote {out}");
    Ok(())
}
