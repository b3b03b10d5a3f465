//! Linear SVM explanations: each present feature's weight, signed towards
//! the predicted class.

use tempaudit::corpus::{generate_synthetic, SynthSpec};
use tempaudit::explainers::svm_explain;
use tempaudit::learners::{fit_svm, SvmParams};
use tempaudit::variants::{build_variant, BuiltinVariant};

fn main() -> tempaudit::Result<()> {
    let corpus = generate_synthetic(&SynthSpec::preset_default(42))?;
    let spec = BuiltinVariant::V4.spec(corpus.year_range().expect("non-empty"), 200, 3)?;
    let v = build_variant(&corpus, &spec)?;
    let train: Vec<_> = v.samples.iter().collect();
    let model = fit_svm(corpus.n_features(), &train, SvmParams::default(), 1)?;

    println!("objective per epoch (first, last): {:.3}, {:.3}", model.epoch_objective[0], model.epoch_objective.last().unwrap());
    for x in v.samples.iter().step_by(150).take(4) {
        let e = svm_explain(&model, x)?;
        println!("{} ({} {}, predicted {})", x.sample_id, x.label, x.year, e.predicted_label);
        for j in e.top(5) {
            println!("    {:+.3}  {}", e.values[j], corpus.catalog.name(j));
        }
    }
    Ok(())
}
