use tempaudit::corpus::{generate_synthetic, SynthSpec};
use tempaudit::harness::{resolve_variant, run_cross_test, run_holdout, ExperimentConfig, VariantRef};
use tempaudit::learners::ModelKind;
use tempaudit::variants::{build_variant, BuiltinVariant};

fn main() -> tempaudit::Result<()> {
    let corpus = generate_synthetic(&SynthSpec::preset_default(42))?;
    let cfg = ExperimentConfig::default();
    let build = |v| -> tempaudit::Result<_> { build_variant(&corpus, &resolve_variant(&VariantRef::Builtin(v), &corpus, &cfg)?) };
    let v3 = build(BuiltinVariant::V3)?;
    let v4 = build(BuiltinVariant::V4)?;

    for kind in [ModelKind::Svm, ModelKind::RandomForest] {
        let own = run_holdout(&cfg, &corpus, &v4, kind, 0.2)?;
        let (swapped, _) = run_cross_test(&cfg, &corpus, &v4, &v3, kind, false)?;
        println!(
            "{kind:<14} v4->v4 holdout accuracy {:.3}   v4->v3 accuracy {:.3} f1 {:.3}",
            own.metrics.accuracy, swapped.metrics.accuracy, swapped.metrics.f1
        );
    }
    Ok(())
}
