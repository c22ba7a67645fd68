use emplite::bundle;
use emplite::corpus::{make_batches, Batch};
use emplite::model::{init_model, ModelConfig, Variant};
use emplite::nn::AttentionMode;
use emplite::synth::{generate, SynthConfig};

fn corpus() -> emplite::synth::SynthCorpus {
    generate(&SynthConfig::small(11)).unwrap()
}

#[test]
fn padding_does_not_change_predictions() {
    let c = corpus();
    let v = c.vectors().unwrap();
    for variant in Variant::ALL {
        let (model, _) = init_model(&ModelConfig::for_variant(variant), &c.train, Some(&v)).unwrap();
        let sents: Vec<_> = c.test.iter().take(12).collect();
        let batch = Batch::from_sentences(&model.vocab, &sents, 0.4, (0..sents.len()).collect()).unwrap();
        assert!(batch.lengths.iter().any(|&l| l < batch.t_max));
        let together = model.predict_batch(&batch).unwrap();
        for (s, joint) in sents.iter().zip(&together) {
            let alone = model.predict(&s.tokens, s.pos.as_deref()).unwrap().probs;
            for (a, b) in alone.iter().zip(joint) {
                assert!((a - b).abs() < 1e-6, "{variant}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn batch_order_does_not_change_predictions() {
    let c = corpus();
    let v = c.vectors().unwrap();
    let cfg = ModelConfig {
        attention_mode: AttentionMode::ConcatContext,
        ..ModelConfig::default()
    };
    let (model, _) = init_model(&cfg, &c.train, Some(&v)).unwrap();
    let sents: Vec<_> = c.dev.iter().take(9).collect();
    let fwd = Batch::from_sentences(&model.vocab, &sents, 0.4, (0..9).collect()).unwrap();
    let rev_sents: Vec<_> = sents.iter().rev().copied().collect();
    let rev = Batch::from_sentences(&model.vocab, &rev_sents, 0.4, (0..9).rev().collect()).unwrap();
    let a = model.predict_batch(&fwd).unwrap();
    let mut b = model.predict_batch(&rev).unwrap();
    b.reverse();
    for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
        assert!((x - y).abs() < 1e-6);
    }
}

#[test]
fn save_and_load_keep_predictions_bit_exact() {
    let c = corpus();
    let v = c.vectors().unwrap();
    let sentences: Vec<_> = c.dev.iter().chain(&c.test).take(100).cloned().collect();
    assert_eq!(sentences.len(), 100);
    let dir = tempfile::tempdir().unwrap();
    for variant in Variant::ALL {
        let (model, _) = init_model(&ModelConfig::for_variant(variant), &c.train, Some(&v)).unwrap();
        let path = dir.path().join(format!("{variant}.empl"));
        let written = bundle::save(&model, &path).unwrap();
        assert_eq!(written as u64, std::fs::metadata(&path).unwrap().len());
        let loaded = bundle::load(&path).unwrap();
        assert_eq!(loaded.config, model.config);
        assert_eq!(loaded.trainable_params(), model.trainable_params());
        let a = model.predict_sentences(&sentences).unwrap();
        let b = loaded.predict_sentences(&sentences).unwrap();
        assert!(a.iter().flatten().map(|p| p.to_bits()).eq(b.iter().flatten().map(|p| p.to_bits())));
        assert_eq!(bundle::to_bytes(&loaded).unwrap(), std::fs::read(&path).unwrap());
    }
}

#[test]
fn one_probability_per_real_token() {
    let c = corpus();
    let v = c.vectors().unwrap();
    let (model, _) = init_model(&ModelConfig::default(), &c.train, Some(&v)).unwrap();
    for batch in make_batches(&c.test, &model.vocab, 32, 0.4, None).unwrap() {
        let preds = model.predict_batch(&batch).unwrap();
        for (p, &len) in preds.iter().zip(&batch.lengths) {
            assert_eq!(p.len(), len);
            assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }
}
