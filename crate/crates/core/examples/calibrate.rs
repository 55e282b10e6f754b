//! Mean held-out logistic balanced accuracy of the synthetic data for one
//! ERP amplitude, across several master seeds.
//!
//! `cargo run --release --example calibrate -- 0.28 8`

use rayon::prelude::*;
use rsvp_bayes::config::RunConfig;
use rsvp_bayes::models::{labels_of, train_model, ConversionPrior, EvidenceModel, ModelKind};
use rsvp_bayes::sim::balanced_accuracy;
use rsvp_bayes::synth::{generate, split};

fn held_out_ba(amplitude: f64, seed: u64) -> f64 {
    let config = RunConfig::parse(&format!("seed = {seed}\nsynth.erp_amplitude = {amplitude}\n")).unwrap();
    let data = generate(&config.synth).unwrap();
    let labels = labels_of(&data.epochs);
    let splits = split(
        &labels,
        config.eval.splits,
        config.eval.test_fraction,
        config.split_seed(),
    )
    .unwrap();
    let total: f64 = splits
        .iter()
        .map(|s| {
            let (model, _) = train_model(ModelKind::LogReg, &data.select(&s.train), &config.model).unwrap();
            let test = data.select(&s.test);
            let pred: Vec<_> = test
                .iter()
                .map(|e| model.classify(e, ConversionPrior::Uniform).unwrap())
                .collect();
            balanced_accuracy(&pred, &labels_of(&test)).unwrap()
        })
        .sum();
    total / splits.len() as f64
}

fn main() {
    let mut args = std::env::args().skip(1);
    let amplitude: f64 = args.next().map_or(0.28, |s| s.parse().expect("amplitude"));
    let seeds: u64 = args.next().map_or(8, |s| s.parse().expect("seed count"));
    let bas: Vec<f64> = (0..seeds)
        .into_par_iter()
        .map(|seed| held_out_ba(amplitude, seed))
        .collect();
    for (seed, ba) in bas.iter().enumerate() {
        println!("seed {seed}: {ba:.3}");
    }
    println!(
        "amplitude {amplitude}: mean {:.3}",
        bas.iter().sum::<f64>() / bas.len() as f64
    );
}
