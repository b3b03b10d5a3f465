#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;
use tempaudit::corpus::{
    generate_synthetic, Category, Corpus, FeatureCatalog, FeatureDescriptor, Label, Sample, SynthSpec, YearRange,
};

/// A small corpus with the default preset's structure.
pub fn small_spec(seed: u64, years: (i32, i32), per_cell: usize, per_category: usize) -> SynthSpec {
    SynthSpec {
        seed,
        years: YearRange::new(years.0, years.1),
        per_cell_count: per_cell,
        benign_per_cell_count: None,
        n_features_per_category: Category::ALL.iter().map(|&c| (c, per_category)).collect::<BTreeMap<_, _>>(),
        lifecycle_fraction_added: 0.3,
        lifecycle_fraction_removed: 0.3,
        base_presence_prob: 0.25,
        malice_features: 2 * per_category,
        p_malware: 0.4,
        p_benign: 0.2,
    }
}

pub fn small_corpus(seed: u64, per_cell: usize) -> Corpus {
    generate_synthetic(&small_spec(seed, (2010, 2020), per_cell, 3)).unwrap()
}

pub fn default_corpus() -> Corpus {
    generate_synthetic(&SynthSpec::preset_default(42)).unwrap()
}

fn category() -> impl Strategy<Value = Category> {
    proptest::sample::select(Category::ALL.to_vec())
}

fn label() -> impl Strategy<Value = Label> {
    prop_oneof![Just(Label::Malware), Just(Label::Benign)]
}

pub fn catalog(max_features: usize) -> impl Strategy<Value = FeatureCatalog> {
    proptest::collection::vec(
        (category(), proptest::option::of((2000i32..2030, 0i32..10)), proptest::option::of(any::<bool>())),
        1..=max_features,
    )
    .prop_map(|raw| {
        let features = raw
            .into_iter()
            .enumerate()
            .map(|(id, (category, life, malice))| {
                let mut f = FeatureDescriptor::new(id, format!("{}.{id}", category.as_str()), category);
                if let Some((added, span)) = life {
                    f.added_year = Some(added);
                    f.removed_year = Some(added + span);
                }
                f.malice_signal = malice.filter(|&m| m);
                f
            })
            .collect();
        FeatureCatalog::new(features).unwrap()
    })
}

pub fn corpus(max_features: usize, max_samples: usize) -> impl Strategy<Value = Corpus> {
    catalog(max_features).prop_flat_map(move |cat| {
        let d = cat.len() as u32;
        let sample = (2010i32..2021, label(), proptest::collection::vec(0..d, 0..=d as usize));
        proptest::collection::vec(sample, 0..=max_samples).prop_map(move |raw| {
            let samples = raw
                .into_iter()
                .enumerate()
                .map(|(i, (year, label, present))| Sample::new(format!("s{i}"), year, label, present))
                .collect();
            Corpus::new(cat.clone(), samples).unwrap()
        })
    })
}

/// Dense random explanation vectors with small integer-valued entries, so
/// ties are common.
pub fn explanation_values(max_features: usize, max_samples: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_features, 1..=max_samples).prop_flat_map(|(d, n)| {
        proptest::collection::vec(proptest::collection::vec((-3i32..=3).prop_map(|v| v as f64 * 0.5), d), n)
    })
}
