use spatialprobe::interventions::{normalize_vision, NormCalibration};
use spatialprobe::probes::norm_profile;
use spatialprobe::scene2ds::lite::{generate_lite, LiteConfig};
use spatialprobe::tensor::rms;
use spatialprobe::toy::{Tokenizer, ToyConfig, ToyModel};
use spatialprobe::TokenGroup;

fn input(model: &ToyModel, seed: u64) -> (spatialprobe::Matrix, spatialprobe::TokenPartition) {
    let lite = generate_lite(&LiteConfig {
        seed,
        questions: 1,
        ..LiteConfig::default()
    })
    .unwrap();
    let item = &lite.items[0];
    let text = Tokenizer::default().encode_padded(&item.question.text, model.config().n_text);
    model.embed(&item.features, &text).unwrap()
}

#[test]
fn skewed_vision_stays_dominant_through_the_first_quarter() {
    for seed in 0..5 {
        let cfg = ToyConfig {
            layers: 8,
            vision_norm_skew: 10.0,
            seed,
            ..ToyConfig::default()
        };
        let model = ToyModel::build(&cfg).unwrap();
        let (emb, p) = input(&model, seed);
        let rec = model.forward(&emb, &p).unwrap();
        let profile = norm_profile(&rec.hidden, &p).unwrap();
        for l in &profile.layers[..cfg.layers / 4] {
            assert!(l.ratio.unwrap() >= 2.0, "seed {seed}: {l:?}");
        }
    }
}

#[test]
fn normalizing_sets_layer_zero_ratio_to_target_over_text_rms() {
    let model = ToyModel::build(&ToyConfig {
        vision_norm_skew: 100.0,
        ..ToyConfig::default()
    })
    .unwrap();
    let (emb, p) = input(&model, 3);
    let cal = NormCalibration::default();
    let fixed = normalize_vision(&emb, &p, &cal).unwrap();
    let text = p.indices(TokenGroup::Text);
    let text_rms = text.iter().map(|&i| rms(emb.row(i))).sum::<f64>() / text.len() as f64;
    let before = norm_profile(&[emb], &p).unwrap().layers[0].ratio.unwrap();
    let after = norm_profile(&[fixed], &p).unwrap().layers[0].ratio.unwrap();
    assert!((before - 100.0).abs() < 1e-9);
    assert!((after - cal.target_rms() / text_rms).abs() < 1e-9, "{after}");
}

#[test]
fn forward_is_reproducible_from_seed() {
    let cfg = ToyConfig {
        layers: 3,
        seed: 11,
        vision_norm_skew: 4.0,
        ..ToyConfig::default()
    };
    let a = ToyModel::build(&cfg).unwrap();
    let b = ToyModel::build(&cfg).unwrap();
    let (ea, pa) = input(&a, 1);
    let (eb, pb) = input(&b, 1);
    assert_eq!(ea, eb);
    assert_eq!(a.forward(&ea, &pa).unwrap(), b.forward(&eb, &pb).unwrap());
}
