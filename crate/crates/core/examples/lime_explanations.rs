//! LIME on a random forest. Prints the surrogate coefficients next to its
//! local fidelity, and checks that exhaustive masks agree with sampling on a
//! small app.

use tempaudit::corpus::{generate_synthetic, Sample, SynthSpec};
use tempaudit::explainers::{lime_fit, LimeConfig, MaskSampling};
use tempaudit::learners::{fit, Hyperparams, ModelKind};
use tempaudit::variants::{build_variant, BuiltinVariant};

fn main() -> tempaudit::Result<()> {
    let corpus = generate_synthetic(&SynthSpec::preset_default(42))?;
    let spec = BuiltinVariant::V4.spec(corpus.year_range().expect("non-empty"), 200, 3)?;
    let v = build_variant(&corpus, &spec)?;
    let train: Vec<&Sample> = v.samples.iter().skip(10).collect();
    let model = fit(ModelKind::RandomForest, corpus.n_features(), &train, &Hyperparams::default(), 4)?;

    let cfg = LimeConfig {
        seed: 9,
        ..LimeConfig::default()
    };
    for x in &v.samples[..3] {
        let fit = lime_fit(&model, x, &cfg)?;
        println!("{} ({}): weighted R^2 {:.3}, intercept {:.3}", x.sample_id, x.label, fit.weighted_r2, fit.intercept);
        let mut order: Vec<usize> = (0..fit.features.len()).collect();
        order.sort_by(|&a, &b| fit.coefficients[b].abs().total_cmp(&fit.coefficients[a].abs()));
        for &i in order.iter().take(4) {
            println!("    {:+.4}  {}", fit.coefficients[i], corpus.catalog.name(fit.features[i] as usize));
        }
    }

    let small = Sample::new("small", 2015, v.samples[0].label, v.samples[0].present.iter().copied().take(8).collect());
    let exhaustive = lime_fit(
        &model,
        &small,
        &LimeConfig {
            sampling: MaskSampling::Exhaustive,
            ..cfg
        },
    )?;
    println!("exhaustive masks over {} features: R^2 {:.3}", small.present.len(), exhaustive.weighted_r2);
    Ok(())
}
