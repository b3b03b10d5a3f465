//! Train every model kind on Variant 4 and score a held-out split.

use tempaudit::corpus::{generate_synthetic, SynthSpec};
use tempaudit::learners::{fit, predict, Hyperparams, ModelKind, TrainedModel};
use tempaudit::variants::{build_variant, split_holdout, BuiltinVariant};

fn main() -> tempaudit::Result<()> {
    let corpus = generate_synthetic(&SynthSpec::preset_default(42))?;
    let spec = BuiltinVariant::V4.spec(corpus.year_range().expect("non-empty"), 200, 3)?;
    let (train, test) = split_holdout(&build_variant(&corpus, &spec)?, 0.2, 5)?;
    let train: Vec<_> = train.samples.iter().collect();

    for kind in ModelKind::ALL {
        let model = fit(kind, corpus.n_features(), &train, &Hyperparams::default(), 11)?;
        let mut correct = 0;
        for s in &test.samples {
            correct += usize::from(predict(&model, s)?.label == s.label);
        }
        // models serialize to JSON and reload with bit-identical scores
        let reloaded = TrainedModel::from_json(&model.to_json()?)?;
        let x = &test.samples[0];
        assert_eq!(model.score_present(&x.present).to_bits(), reloaded.score_present(&x.present).to_bits());
        println!("{kind:<14} holdout accuracy {:.3}", correct as f64 / test.samples.len() as f64);
    }
    Ok(())
}
