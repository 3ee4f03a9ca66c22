mod common;

use dvit_core::checkpoint::{load_checkpoint, save_checkpoint};
use dvit_core::model::{linspace_rates, Dvit, ModelConfig};
use dvit_core::CoreError;
use dvit_nn::{cross_entropy, param_count, AdamW, AdamWConfig, Ctx, Module};
use dvit_tensor::dump::{read_dump, write_dump, DType};
use dvit_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn input(n: usize, size: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * 3 * size * size).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(data, &[n, 3, size, size]).unwrap()
}

#[test]
fn tiny_shapes() {
    let cfg = ModelConfig::tiny(8);
    let m = Dvit::new(&cfg, 0).unwrap();
    let t = m.forward_traced(&input(2, 32, 1), &mut Ctx::eval()).unwrap();
    let shapes: Vec<Vec<usize>> = t.layers.iter().map(|(_, a)| a.shape().to_vec()).collect();
    assert_eq!(
        shapes,
        vec![vec![2, 16, 8, 8], vec![2, 16, 8, 8], vec![2, 32, 4, 4], vec![2, 64, 2, 2], vec![2, 128, 1, 1]]
    );
    assert_eq!(t.tokens.shape(), &[2, 2, 64]);
    assert_eq!(t.logits.shape(), &[2, 8]);
}

#[test]
fn larger_tiny_input_gives_more_tokens() {
    let cfg = ModelConfig { input_size: 64, ..ModelConfig::tiny(3) };
    let m = Dvit::new(&cfg, 0).unwrap();
    let t = m.forward_traced(&input(1, 64, 2), &mut Ctx::eval()).unwrap();
    assert_eq!(t.layer("stage4").unwrap().shape(), &[1, 128, 2, 2]);
    assert_eq!(t.tokens.shape(), &[1, 5, 64]);
    assert_eq!(t.logits.shape(), &[1, 3]);
}

#[test]
fn param_count_matches_layer_arithmetic() {
    for cfg in [
        ModelConfig::tiny(8),
        ModelConfig { layer_scale_init: None, ..ModelConfig::tiny(5) },
        ModelConfig { input_size: 64, dcn_group_channels: 8, ..ModelConfig::tiny(2) },
    ] {
        let m = Dvit::new(&cfg, 0).unwrap();
        assert_eq!(param_count(&m), common::expected_params(&cfg));
    }
}

#[test]
fn wrong_input_size_rejected() {
    let m = Dvit::new(&ModelConfig::tiny(8), 0).unwrap();
    assert!(m.forward(&input(1, 64, 0), &mut Ctx::eval()).is_err());
}

#[test]
fn config_validation() {
    let bad = [
        ModelConfig { heads: 3, ..ModelConfig::tiny(8) },
        ModelConfig { input_size: 48, ..ModelConfig::tiny(8) },
        ModelConfig { stage_depths: vec![1, 1, 1], ..ModelConfig::tiny(8) },
        ModelConfig { attn_dropout: 1.0, ..ModelConfig::tiny(8) },
        ModelConfig { dcn_kernel_points: 8, ..ModelConfig::tiny(8) },
        ModelConfig { num_classes: 0, ..ModelConfig::tiny(8) },
    ];
    for cfg in bad {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
    ModelConfig::paper(8).validate().unwrap();
    let err = serde_json::from_str::<ModelConfig>(r#"{"embed_dims": 3}"#).unwrap_err();
    assert!(err.to_string().contains("embed_dims"));
    let partial: ModelConfig = serde_json::from_str(r#"{"num_classes": 30}"#).unwrap();
    assert_eq!(partial, ModelConfig::paper(30));
}

#[test]
fn droppath_rates_are_linear() {
    assert_eq!(linspace_rates(0.2, 5), vec![0.0, 0.05, 0.1, 0.15000000000000002, 0.2]);
    assert_eq!(linspace_rates(0.2, 1), vec![0.0]);
    let m = Dvit::new(&ModelConfig::paper(8), 0).unwrap();
    let rates: Vec<f64> = m.encoder.iter().map(|b| b.droppath_rate).collect();
    assert_eq!(rates.len(), 7);
    assert!((rates[6] - 0.15).abs() < 1e-15 && rates[0] == 0.0);
    let last = m.stages[3].blocks.last().unwrap();
    assert!((last.droppath_rate - 0.2).abs() < 1e-15);
}

#[test]
fn eval_is_deterministic_and_train_mode_is_stochastic() {
    let cfg = ModelConfig { attn_dropout: 0.3, embed_dropout: 0.3, ..ModelConfig::tiny(4) };
    let m = Dvit::new(&cfg, 5).unwrap();
    let x = input(2, 32, 9);
    let a = m.forward(&x, &mut Ctx::eval()).unwrap();
    let b = m.forward(&x, &mut Ctx::eval()).unwrap();
    assert_eq!(a.to_vec(), b.to_vec());
    let t1 = m.forward(&x, &mut Ctx::train(1)).unwrap();
    let t1b = m.forward(&x, &mut Ctx::train(1)).unwrap();
    let t2 = m.forward(&x, &mut Ctx::train(2)).unwrap();
    assert_eq!(t1.to_vec(), t1b.to_vec());
    assert_ne!(t1.to_vec(), t2.to_vec());
}

#[test]
fn untrained_loss_near_uniform() {
    let m = Dvit::new(&ModelConfig::tiny(8), 11).unwrap();
    let loss = cross_entropy(&m.forward(&input(16, 32, 3), &mut Ctx::train(0)).unwrap(), &[0, 1, 2, 3, 4, 5, 6, 7, 0, 1, 2, 3, 4, 5, 6, 7]).unwrap();
    assert!((loss.item() - 8f64.ln()).abs() <= 0.7, "{}", loss.item());
}

#[test]
fn zero_head_blocks_gradients_below_it() {
    let mut m = Dvit::new(&ModelConfig::tiny(8), 2).unwrap();
    m.head.weight = Tensor::param(vec![0.0; m.head.weight.numel()], m.head.weight.shape()).unwrap();
    let loss = cross_entropy(&m.forward(&input(4, 32, 1), &mut Ctx::train(0)).unwrap(), &[0, 1, 2, 3]).unwrap();
    loss.backward().unwrap();
    m.visit("", &mut |name, t, _| {
        let g = t.grad().unwrap_or_default();
        let nonzero = g.iter().any(|v| *v != 0.0);
        if name.starts_with("head.") {
            assert!(nonzero, "{name} should get a gradient");
        } else {
            assert!(!nonzero, "{name} got a gradient through a zero head");
        }
    });
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ModelConfig::tiny(8);
    let mut m = Dvit::new(&cfg, 4).unwrap();
    let x = input(2, 32, 5);
    let mut opt = AdamW::new(AdamWConfig::default());
    cross_entropy(&m.forward(&x, &mut Ctx::train(0)).unwrap(), &[1, 2]).unwrap().backward().unwrap();
    opt.step(&mut m).unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &m, 3, 99, Some(&opt), &[("note", "hello")]).unwrap();
    let ck = load_checkpoint(&path, Some(&cfg)).unwrap();
    assert_eq!((ck.epoch, ck.seed, ck.extra("note")), (3, 99, Some("hello")));
    let a = m.forward(&x, &mut Ctx::eval()).unwrap();
    let b = ck.model.forward(&x, &mut Ctx::eval()).unwrap();
    assert_eq!(a.to_vec(), b.to_vec());
    let mut opt2 = AdamW::new(AdamWConfig::default());
    ck.restore_optimizer(&mut opt2).unwrap();
    assert_eq!(opt2.step_count(), 1);
    let (s1, s2) = (opt.export_state(&m).unwrap(), opt2.export_state(&ck.model).unwrap());
    for ((n1, t1), (n2, t2)) in s1.iter().zip(&s2) {
        assert_eq!(n1, n2);
        assert_eq!(t1.to_vec(), t2.to_vec());
    }
    assert!(save_checkpoint(&path, &m, 3, 99, None, &[("epoch", "x")]).is_err());
}

#[test]
fn checkpoint_rejects_mismatch_and_missing_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ModelConfig::tiny(8);
    let m = Dvit::new(&cfg, 4).unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &m, 1, 0, None, &[]).unwrap();
    let other = ModelConfig::tiny(4);
    assert!(matches!(load_checkpoint(&path, Some(&other)), Err(CoreError::ConfigMismatch(_))));

    let dump = read_dump(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    let meta: Vec<(&str, &str)> = dump.meta.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    let kept: Vec<(&str, &Tensor)> =
        dump.tensors.iter().filter(|(n, _)| n != "param.head.bias").map(|(n, t)| (n.as_str(), t)).collect();
    let cut = dir.path().join("cut.ckpt");
    write_dump(&mut std::fs::File::create(&cut).unwrap(), &meta, &kept, DType::F64).unwrap();
    match load_checkpoint(&cut, None) {
        Err(CoreError::MissingParam(n)) => assert_eq!(n, "head.bias"),
        other => panic!("expected MissingParam, got {other:?}"),
    }
    std::fs::write(dir.path().join("junk.ckpt"), b"not a dump").unwrap();
    assert!(load_checkpoint(&dir.path().join("junk.ckpt"), None).is_err());
    assert!(load_checkpoint(&dir.path().join("absent.ckpt"), None).is_err());
}
