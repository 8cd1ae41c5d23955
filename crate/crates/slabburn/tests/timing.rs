// Temporary convergence probe (deleted before finishing).
use slabburn::augment::Augmenter;
use slabburn::img::Interp;
use slabburn::synth::{generate_benchmark_sequences, BenchmarkConfig};
use slabburn::unet::{train, Sample, TrainConfig, UNetConfig};

#[test]
#[ignore]
fn convergence_probe() {
    let mut config = BenchmarkConfig {
        width_px: 384,
        height_px: 128,
        initial_fill: 0.72,
        seed: 77,
        ..Default::default()
    };
    for f in &mut config.fluxes {
        f.frames = 12;
    }
    let sequences = generate_benchmark_sequences(&config).unwrap();
    let to_samples = |labels: &[&str]| -> Vec<Sample> {
        labels
            .iter()
            .flat_map(|l| {
                let seq = &sequences[*l];
                seq.frames
                    .iter()
                    .zip(seq.truth_masks.as_slice())
                    .map(|(f, m)| Sample {
                        image: f.resized(128, 128, Interp::Bilinear).unwrap(),
                        mask: m.resized(128, 128).unwrap(),
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    let train_set = to_samples(&["A", "B", "D"]);
    let val_set = to_samples(&["C"]);
    let cfg = UNetConfig {
        depth: 4,
        base_channels: 8,
        in_channels: 3,
        input_h: 128,
        input_w: 128,
        dropout_p: 0.5,
        dropout_sites: None,
        seed: 5,
    };
    let tcfg = TrainConfig {
        max_epochs: 15,
        patience: 15,
        ..Default::default()
    };
    let t0 = std::time::Instant::now();
    let out = train(&train_set, &val_set, &cfg, &tcfg, &Augmenter::default()).unwrap();
    for e in &out.history {
        eprintln!(
            "epoch {:2}: loss {:.4} val_acc {:.4}",
            e.epoch, e.train_loss, e.val_accuracy
        );
    }
    eprintln!("total {:.1}s (36 train, 12 val)", t0.elapsed().as_secs_f64());
}
