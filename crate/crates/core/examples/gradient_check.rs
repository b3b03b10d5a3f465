use tempaudit::corpus::{generate_synthetic, Sample, SynthSpec};
use tempaudit::learners::{gradient_check, softmax, AttentionMlpModel, MlpModel, MlpParams, TrainedModel};
use tempaudit::seed::rng;

fn main() -> tempaudit::Result<()> {
    let corpus = generate_synthetic(&SynthSpec::preset_default(42))?;
    let batch: Vec<&Sample> = corpus.samples.iter().step_by(101).take(16).collect();
    let d = corpus.n_features();

    for seed in 0..5 {
        let mut r = rng(seed);
        let mlp = TrainedModel::Mlp(MlpModel::init(d, MlpParams::default(), &mut r));
        let att = TrainedModel::AttentionMlp(AttentionMlpModel::init(d, MlpParams::default(), &mut r));
        println!(
            "seed {seed}: max relative error mlp {:.2e}, attention {:.2e}",
            gradient_check(&mlp, &batch, 1e-5)?,
            gradient_check(&att, &batch, 1e-5)?
        );
    }

    let a = softmax(&[1000.0, 999.0, -1000.0]);
    println!("softmax of large energies: {a:?} (sum {})", a.iter().sum::<f64>());
    Ok(())
}
