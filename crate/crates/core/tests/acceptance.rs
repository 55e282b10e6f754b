//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.
//!
//! `cargo test -p rsvp-bayes --test acceptance`

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use common::{
    brute_force_posterior, butterworth_bandpass_gain, db, fft_gain, impulse, max_abs_diff, random_instance, RawEvidence,
};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsvp_bayes::dsp::{design_bandpass, design_notch, filter_cascade, filter_forward};
use rsvp_bayes::models::{
    fit_kde, generative_to_discriminative, kde_eval, labels_of, train_model, weighted_loss_and_grad, ConversionPrior,
    EvidenceModel, ModelHyperparams, ModelKind,
};
use rsvp_bayes::sim::{balanced_accuracy, itr};
use rsvp_bayes::synth::{generate, split, SynthConfig};
use rsvp_bayes::{
    init_posterior, update_discriminative, update_generative, Alphabet, Label, LabelPrior, LikelihoodPair,
    PosteriorState, QueryEvent,
};
use serde_json::Value;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn update(state: &PosteriorState, q: usize, ev: &RawEvidence, prior: LabelPrior) -> PosteriorState {
    let event = QueryEvent::new(q, ev.pair());
    match ev {
        RawEvidence::Disc { .. } => update_discriminative(state, &event, prior).unwrap(),
        RawEvidence::Gen { .. } => update_generative(state, &event).unwrap(),
    }
}

fn replay(prior: &[f64], events: &[(usize, RawEvidence)], label_prior: LabelPrior) -> PosteriorState {
    let alphabet = Alphabet::with_size(prior.len()).unwrap();
    let mut state = init_posterior(&alphabet, Some(prior)).unwrap();
    for (q, ev) in events {
        state = update(&state, *q, ev, label_prior);
    }
    state
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let inst = random_instance(&mut rng, 2..=6, 6);
        let got = replay(&inst.prior, &inst.events, inst.label_prior()).probs();
        worst = worst.max(max_abs_diff(
            &got,
            &brute_force_posterior(&inst.prior, &inst.events, inst.p_pos),
        ));
    }
    let took = start.elapsed();
    check(
        worst <= 1e-9 && took < Duration::from_secs(5),
        format!("200 instances, max abs diff {worst:.2e}, {took:.2?}"),
    )
}

fn bridge_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let a = rng.random_range(2..=28);
        let q = rng.random_range(0..a);
        let p_pos = rng.random_range(0.01..0.99);
        let pair = LikelihoodPair::generative(rng.random_range(1e-4..5.0), rng.random_range(1e-4..5.0)).unwrap();
        let start = init_posterior(&Alphabet::with_size(a).unwrap(), None).unwrap();
        let g = update_generative(&start, &QueryEvent::new(q, pair)).unwrap();
        let converted = generative_to_discriminative(&pair, ConversionPrior::Empirical(p_pos)).unwrap();
        let d = update_discriminative(&start, &QueryEvent::new(q, converted), LabelPrior::new(p_pos).unwrap()).unwrap();
        worst = worst.max(max_abs_diff(&g.probs(), &d.probs()));
    }
    check(worst <= 1e-9, format!("200 pairs, max abs diff {worst:.2e}"))
}

fn normalization_and_order() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut norm, mut order): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let inst = random_instance(&mut rng, 2..=28, 30);
        let prior = inst.label_prior();
        let mut state = init_posterior(&Alphabet::with_size(inst.prior.len()).unwrap(), Some(&inst.prior)).unwrap();
        for (q, ev) in &inst.events {
            state = update(&state, *q, ev, prior);
            norm = norm.max((state.probs().iter().sum::<f64>() - 1.0).abs());
        }
        let mut shuffled = inst.events.clone();
        shuffled.shuffle(&mut rng);
        order = order.max(max_abs_diff(
            &state.probs(),
            &replay(&inst.prior, &shuffled, prior).probs(),
        ));
    }
    check(
        norm <= 1e-12 && order <= 1e-12,
        format!("1000 sequences, |sum - 1| <= {norm:.2e}, order diff {order:.2e}"),
    )
}

fn itr_spots() -> Outcome {
    let top = itr(28, 1.0);
    let chance = [2usize, 10, 28, 100]
        .iter()
        .map(|&a| itr(a, 1.0 / a as f64).abs())
        .fold(0.0, f64::max);
    let monotone = [2usize, 10, 28, 100].iter().all(|&a| {
        let lo = 1.0 / a as f64;
        let grid: Vec<f64> = (0..=200).map(|i| itr(a, lo + (1.0 - lo) * i as f64 / 200.0)).collect();
        grid.windows(2).all(|w| w[1] > w[0])
    });
    check(
        (top - 4.807355).abs() <= 1e-6 && chance <= 1e-9 && monotone,
        format!("ITR(28,1) = {top:.6}, max |ITR(A,1/A)| = {chance:.1e}, monotone = {monotone}"),
    )
}

fn dsp_response() -> Outcome {
    let (rate, n) = (250.0, 5000);
    let h = filter_forward(&design_notch(rate, 50.0, 30.0).unwrap(), &impulse(n));
    let (at50, at5) = (db(fft_gain(&h, rate, 50.0)), db(fft_gain(&h, rate, 5.0)));
    let bp = filter_cascade(&design_bandpass(rate, 1.0, 20.0, 2).unwrap(), &impulse(n));
    let edge_err = [1.0, 20.0]
        .iter()
        .map(|&f| (db(fft_gain(&bp, rate, f)) - db(butterworth_bandpass_gain(f, 1.0, 20.0, 2, rate))).abs())
        .fold(0.0, f64::max);
    check(
        at50 <= -20.0 && at5.abs() <= 1.0 && edge_err <= 0.5,
        format!("notch {at50:.1} dB at 50 Hz, {at5:.3} dB at 5 Hz; bandpass edge error {edge_err:.4} dB"),
    )
}

fn kde_values() -> Outcome {
    let peak = kde_eval(&fit_kde(&[0.0], 1.0).unwrap(), 0.0);
    let mid = kde_eval(&fit_kde(&[-1.0, 1.0], 1.0).unwrap(), 0.0);
    check(
        (peak - 0.398942).abs() <= 1e-6 && (mid - 0.241971).abs() <= 1e-6,
        format!("peak {peak:.6}, midpoint {mid:.6}"),
    )
}

fn classifier_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(rand_distr::StandardNormal) };
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (n, d) = (rng.random_range(5..40), rng.random_range(1..6));
        let x = DMatrix::from_fn(n, d, |_, _| normal(&mut rng));
        let y = DVector::from_fn(n, |_, _| if rng.random_bool(0.3) { 1.0 } else { 0.0 });
        let sw = DVector::from_fn(n, |_, _| rng.random_range(0.1..5.0));
        let w = DVector::from_fn(d, |_, _| normal(&mut rng));
        let b = normal(&mut rng);
        let (_, grad) = weighted_loss_and_grad(&x, &y, &sw, &w, b);
        let step = 1e-6;
        for j in 0..=d {
            let loss = |delta: f64| {
                let (mut w2, mut b2) = (w.clone(), b);
                if j < d {
                    w2[j] += delta;
                } else {
                    b2 += delta;
                }
                weighted_loss_and_grad(&x, &y, &sw, &w2, b2).0
            };
            let fd = (loss(step) - loss(-step)) / (2.0 * step);
            worst = worst.max((fd - grad[j]).abs() / grad[j].abs().max(1e-3));
        }
    }

    let data = generate(&SynthConfig {
        noise_std: 0.0,
        n_epochs: 500,
        ..SynthConfig::default()
    })
    .unwrap();
    let labels: Vec<Label> = data.epochs.iter().map(|e| e.label).collect();
    let s = &split(&labels, 1, 0.2, 1).unwrap()[0];
    let (model, _) = train_model(ModelKind::LogReg, &data.select(&s.train), &ModelHyperparams::default()).unwrap();
    let test = data.select(&s.test);
    let pred: Vec<Label> = test
        .iter()
        .map(|e| model.classify(e, ConversionPrior::Uniform).unwrap())
        .collect();
    let ba = balanced_accuracy(&pred, &labels_of(&test)).unwrap();
    check(
        worst <= 1e-5 && ba == 1.0,
        format!("gradient relative error {worst:.2e}; separable held-out balanced accuracy {ba:.3}"),
    )
}

fn cli(args: &[&str]) -> (i32, Vec<u8>) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = rsvp_bayes::cli::main_with_args(
        std::iter::once("rsvp-bayes").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    if code != 0 {
        eprintln!("{}", String::from_utf8_lossy(&err));
    }
    (code, out)
}

fn load(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn model_row<'a>(doc: &'a Value, name: &str) -> &'a Value {
    doc["models"]
        .as_array()
        .unwrap()
        .iter()
        .find(|m| m["name"] == name)
        .unwrap()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

/// Runs the full default report once; criteria 8 and 9 both read it.
struct DefaultRun {
    report: Value,
    uninformative_itr: f64,
    elapsed: Duration,
}

fn default_run(dir: &Path) -> Result<DefaultRun, String> {
    let start = Instant::now();
    let out = dir.join("report.json");
    let (code, _) = cli(&["report", "--out", out.to_str().unwrap()]);
    if code != 0 {
        return Err(format!("report exited with {code}"));
    }
    let elapsed = start.elapsed();
    let control = dir.join("uninformative.json");
    let (code, _) = cli(&[
        "simulate",
        "--control",
        "uninformative",
        "--out",
        control.to_str().unwrap(),
    ]);
    if code != 0 {
        return Err(format!("simulate exited with {code}"));
    }
    Ok(DefaultRun {
        report: load(&out),
        uninformative_itr: num(&model_row(&load(&control), "Uninformative")["itr"]["mean"]),
        elapsed,
    })
}

fn table_ordering(run: &Result<DefaultRun, String>) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    let disc = model_row(&run.report, "Disc LogR");
    let generative = model_row(&run.report, "Gen LogR (Emp)");
    let ba = num(&disc["balanced_accuracy"]["mean"]);
    let (d, g) = (num(&disc["itr"]["mean"]), num(&generative["itr"]["mean"]));
    let u = run.uninformative_itr;
    check(
        (0.72..=0.80).contains(&ba) && d > g && g > u && u == 0.0 && run.elapsed < Duration::from_secs(300),
        format!(
            "logreg BA {ba:.3}; ITR disc {d:.3} ± {:.3}, gen {g:.3} ± {:.3}, uninformative {u:.3}; {:.1?}",
            num(&disc["itr"]["std"]),
            num(&generative["itr"]["std"]),
            run.elapsed
        ),
    )
}

fn controls(run: &Result<DefaultRun, String>) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    let mut ok = true;
    let mut detail = Vec::new();
    for name in ["Always Class 0", "Always Class 1"] {
        let row = model_row(&run.report, name);
        let stats = [
            num(&row["balanced_accuracy"]["mean"]),
            num(&row["balanced_accuracy"]["std"]),
            num(&row["itr"]["mean"]),
            num(&row["itr"]["std"]),
        ];
        ok &= stats == [0.5, 0.0, 0.0, 0.0];
        detail.push(format!(
            "{name}: BA {:.3} ± {:.3}, ITR {:.3} ± {:.3}",
            stats[0], stats[1], stats[2], stats[3]
        ));
    }
    check(ok, detail.join("; "))
}

fn determinism(dir: &Path) -> Outcome {
    let cfg = dir.join("small.txt");
    std::fs::write(
        &cfg,
        "seed = 3\nsynth.epochs = 560\ntyping.attempts = 100\neval.splits = 2\n",
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let files = [
        "data.bin",
        "raw.bin",
        "epochs.bin",
        "model.bin",
        "sim.json",
        "sim.csv",
        "report.json",
        "report.csv",
    ];
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let run = || -> Result<Vec<Vec<u8>>, String> {
        let data = p("data.bin");
        let commands: Vec<Vec<String>> = vec![
            vec!["synth".into(), "--out".into(), data.clone()],
            vec!["synth".into(), "--raw".into(), "--out".into(), p("raw.bin")],
            vec![
                "preprocess".into(),
                "--raw".into(),
                p("raw.bin"),
                "--out".into(),
                p("epochs.bin"),
            ],
            vec![
                "train".into(),
                "--data".into(),
                data.clone(),
                "--kind".into(),
                "gen-lda".into(),
                "--out".into(),
                p("model.bin"),
            ],
            vec![
                "simulate".into(),
                "--data".into(),
                data.clone(),
                "--model".into(),
                p("model.bin"),
                "--out".into(),
                p("sim.json"),
            ],
            vec!["report".into(), "--data".into(), data, "--out".into(), p("report.json")],
        ];
        let mut outputs = Vec::new();
        for args in commands {
            let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
            full.extend(["--config", c]);
            let (code, stdout) = cli(&full);
            if code != 0 {
                return Err(format!("{} exited with {code}", args[0]));
            }
            outputs.push(stdout);
        }
        for name in files {
            outputs.push(std::fs::read(p(name)).unwrap());
            std::fs::remove_file(p(name)).unwrap();
        }
        Ok(outputs)
    };
    let (a, b) = (run()?, run()?);
    let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    check(
        same == a.len(),
        format!("{same}/{} outputs byte-identical across six commands", a.len()),
    )
}

fn main() {
    let dir = tempfile::TempDir::new().expect("temporary directory");
    let run = default_run(dir.path());
    let results: Vec<(&str, Outcome)> = vec![
        ("recursive posterior matches the enumerated joint", oracle_equivalence()),
        (
            "generative update equals converted discriminative update",
            bridge_identity(),
        ),
        ("normalization and order invariance", normalization_and_order()),
        ("ITR spot checks", itr_spots()),
        ("notch and bandpass frequency response", dsp_response()),
        ("KDE analytic values", kde_values()),
        ("classifier sanity", classifier_sanity()),
        (
            "discriminative ITR beats generative ITR beats uninformative",
            table_ordering(&run),
        ),
        ("control models", controls(&run)),
        ("byte-identical reruns", determinism(dir.path())),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
