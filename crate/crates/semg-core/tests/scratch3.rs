// Temporary diagnostics; not part of the suite.

use semg_core::data::{synth_recording, DatasetSpec};
use semg_core::dsp::{FilterSpec, SmootherSpec};
use semg_core::model::{build, backward, forward, AblationVariant, ModelConfig};
use semg_core::pipeline;
use semg_core::rng::seed_rng;
use semg_core::train::{evaluate_windows, focal_loss, train_loop, TrainConfig};
use semg_core::windowing::WindowSet;

fn splits(scale: f64) -> (WindowSet, WindowSet, WindowSet, usize) {
    let spec = DatasetSpec::synthetic(4, 16);
    let mut rec = synth_recording(&spec, 4, 6, 42).unwrap();
    for v in rec.samples.as_mut_slice() {
        *v *= scale;
    }
    let filter = FilterSpec::default();
    let smoother = SmootherSpec::auto_for(spec.sample_rate_hz, spec.window_samples());
    let (train, val, test) =
        pipeline::prepare_splits(&rec, &spec, &filter, &smoother, 3, 5).unwrap();
    (train, val, test, spec.num_classes)
}

#[test]
#[ignore]
fn gradient_norms_at_init() {
    let (train, _, _, num_classes) = splits(1.0);
    let mut cfg = ModelConfig::full(38, 16, num_classes);
    cfg.expanded_channels = 32;
    let mut params = build(&cfg, 7).unwrap();

    params.zero_grads();
    let mut rng = seed_rng(0);
    for w in train.windows.iter().take(128) {
        let (probs, cache) = forward(&params, &w.data, true, &mut rng).unwrap();
        let (_, mut dlogits, _) = focal_loss(&probs, w.label, 2.0).unwrap();
        for v in dlogits.as_mut_slice() {
            *v /= 128.0;
        }
        backward(&mut params, &cache, &dlogits).unwrap();
    }
    params.for_each_tensor_mut(&mut |name, _, value, grad| {
        let gnorm = (grad.as_slice().iter().map(|v| v * v).sum::<f64>()
            / grad.len() as f64)
            .sqrt();
        let vnorm = (value.as_slice().iter().map(|v| v * v).sum::<f64>()
            / value.len() as f64)
            .sqrt();
        println!("{name:22} rms value {vnorm:.2e} rms grad {gnorm:.2e}");
    });
}

fn quick_train(label: &str, train: &WindowSet, val: &WindowSet, test: &WindowSet, num_classes: usize, variant: AblationVariant, epochs: usize) {
    let mut base = ModelConfig::full(38, 16, num_classes);
    base.expanded_channels = 32;
    let cfg = variant.apply(&base);
    let mut params = build(&cfg, 7).unwrap();
    let tc = TrainConfig {
        epochs,
        ..TrainConfig::paper(7)
    };
    let history = train_loop(&mut params, train, val, &tc, None).unwrap();
    let last = history.epochs.last().unwrap();
    let report = evaluate_windows(&params, test).unwrap();
    println!(
        "{label}: loss {:.4} val acc {:.4} | TEST acc {:.4} bal {:.4} mcc {:.4}",
        last.train_loss, last.val_accuracy, report.accuracy, report.balanced_accuracy, report.mcc
    );
}

#[test]
#[ignore]
fn scaled_signal_experiment() {
    for scale in [1.0, 10.0, 100.0] {
        let (train, val, test, k) = splits(scale);
        quick_train(
            &format!("scale {:>5}", scale),
            &train,
            &val,
            &test,
            k,
            AblationVariant::FullyConnected,
            8,
        );
    }
}

#[test]
#[ignore]
fn no_classifier_probe() {
    let (train, val, test, k) = splits(1.0);
    quick_train("no-classifier", &train, &val, &test, k, AblationVariant::NoClassifier, 8);
    quick_train("no-expansion ", &train, &val, &test, k, AblationVariant::NoExpansion, 8);
}
