use tempaudit::corpus::{generate_synthetic, SynthSpec};
use tempaudit::explainers::attention_explain;
use tempaudit::learners::{fit, Hyperparams, ModelKind, TrainedModel};
use tempaudit::variants::{build_variant, BuiltinVariant};

fn main() -> tempaudit::Result<()> {
    let corpus = generate_synthetic(&SynthSpec::preset_default(42))?;
    let spec = BuiltinVariant::V3.spec(corpus.year_range().expect("non-empty"), 200, 3)?;
    let v = build_variant(&corpus, &spec)?;
    let train: Vec<_> = v.samples.iter().collect();
    let TrainedModel::AttentionMlp(model) =
        fit(ModelKind::AttentionMlp, corpus.n_features(), &train, &Hyperparams::default(), 2)?
    else {
        unreachable!()
    };

    for x in v.samples.iter().step_by(200).take(3) {
        let e = attention_explain(&model, x)?;
        // attention weights over present features; they sum to at most one
        let mass: f64 = e.values.iter().sum();
        println!("{} ({}, predicted {}) attention mass on present features {mass:.3}", x.sample_id, x.label, e.predicted_label);
        for j in e.top(5) {
            println!("    {:.3}  {}", e.values[j], corpus.catalog.name(j));
        }
    }
    Ok(())
}
