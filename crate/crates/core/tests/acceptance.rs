//! The nine acceptance gates for the toolkit. Each test prints exactly
//! one `ACCEPTANCE <n>: PASS` or `ACCEPTANCE <n>: FAIL` line (visible
//! under `--nocapture`) and fails loudly on any violated property. The
//! heavy experiments share a lock so their wall-clock budgets are
//! measured unconfounded.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use common::op_suite;
use common::rng_for;
use nitcg::autodiff::{Bind, Graph, NodeId, Result as AdResult, Tensor};
use nitcg::conditioning::{append_label, DomainLabel, ExtendedFeature};
use nitcg::data::{
    generate_demo_corpus, synthesize_corpus, validate_manifest_entries, CorpusManifest, DemoSpec,
    Split, SplitMode, SynthesisOptions, UtteranceRecord,
};
use nitcg::dsp::{istft_trimmed, mix_at_snr, read_wav, snr_db, stft, StftConfig, Waveform, Window};
use nitcg::losses::{
    adv1_discriminator_loss, adv2_discriminator_loss, cycle_loss, identity_loss, nit_cycle_loss,
};
use nitcg::metrics::{composite_scores, llr, seg_snr, wss};
use nitcg::models::{
    load_checkpoint, Critic, Discriminator, DiscriminatorSpec, FeatureMap, Generator, GeneratorSpec,
};
use nitcg::training::{log_spectral_l1, train, Enhancer, TrainConfig, TrainMode};
use rand::{Rng, RngExt};

static HEAVY: Mutex<()> = Mutex::new(());

fn criterion(n: usize, body: impl FnOnce()) {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(()) => println!("ACCEPTANCE {n}: PASS"),
        Err(payload) => {
            println!("ACCEPTANCE {n}: FAIL");
            resume_unwind(payload);
        }
    }
}

fn rt(rng: &mut impl Rng, shape: Vec<usize>, lo: f32, hi: f32) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

#[test]
fn acceptance_1_gradient_suite() {
    criterion(1, || {
        let _lock = HEAVY.lock().unwrap();
        let start = Instant::now();
        for (name, case) in op_suite::ALL {
            for seed in 0..20 {
                case(seed);
            }
            let _ = name;
        }
        let elapsed = start.elapsed();
        assert!(
            elapsed < Duration::from_secs(120),
            "gradient suite took {elapsed:?}, budget is 2 minutes"
        );
    });
}

#[test]
fn acceptance_2_dsp_suite() {
    criterion(2, || {
        let cfg = StftConfig::default();
        for seed in 0..50u64 {
            let mut rng = rng_for(seed);
            let n = rng.random_range(4000..20000);
            let samples: Vec<f64> = (0..n).map(|_| rng.random_range(-0.8..0.8)).collect();
            let wave = Waveform::new(samples, 16_000);
            let rec = istft_trimmed(&stft(&wave, &cfg)).unwrap();
            assert_eq!(rec.samples.len(), wave.samples.len(), "seed {seed} length");
            let snr = snr_db(&wave.samples, &rec.samples);
            assert!(snr > 50.0, "seed {seed}: round-trip SNR {snr:.2} dB");
        }

        let tone: Vec<f64> = (0..16_000)
            .map(|i| {
                let t = i as f64 / 16_000.0;
                (2.0 * std::f64::consts::PI * 311.0 * t).sin()
                    + 0.5 * (2.0 * std::f64::consts::PI * 977.0 * t).sin()
            })
            .collect();
        let clean = Waveform::new(tone, 16_000);
        let mut rng = rng_for(1234);
        let noise = Waveform::new((0..9000).map(|_| rng.random_range(-1.0..1.0)).collect(), 16_000);
        for &target in &[-5.0f64, 0.0, 5.0] {
            let mix = mix_at_snr(&clean, &noise, target).unwrap();
            let p_clean: f64 = clean.samples.iter().map(|s| s * s).sum();
            let p_added: f64 =
                mix.samples.iter().zip(&clean.samples).map(|(m, c)| (m - c) * (m - c)).sum();
            let measured = 10.0 * (p_clean / p_added).log10();
            assert!(
                (measured - target).abs() < 1e-6,
                "requested {target} dB, measured {measured} dB"
            );
        }
    });
}

struct IdentityMap;

impl FeatureMap for IdentityMap {
    fn forward(&self, _g: &mut Graph, x: NodeId, _bind: Bind) -> AdResult<NodeId> {
        Ok(x)
    }
}

struct ConstantCritic(f32);

impl Critic for ConstantCritic {
    fn forward(&self, g: &mut Graph, x: NodeId, _bind: Bind) -> AdResult<NodeId> {
        Ok(g.affine(x, 0.0, self.0))
    }
}

#[test]
fn acceptance_3_loss_identities() {
    criterion(3, || {
        let mut rng = rng_for(3);
        let n_noise = 2;
        let feat_s = rt(&mut rng, vec![6, 5], -1.0, 1.0);
        let feat_y = rt(&mut rng, vec![6, 5], -1.0, 1.0);
        let clean = DomainLabel::clean(n_noise);
        let noise = DomainLabel::new(2, n_noise).unwrap();
        let target = DomainLabel::new(1, n_noise).unwrap();
        let s_tc = append_label(&feat_s, &clean).unwrap().into_matrix();
        let s_tn = append_label(&feat_s, &target).unwrap().into_matrix();
        let y_tc = append_label(&feat_y, &clean).unwrap().into_matrix();
        let y_tn = append_label(&feat_y, &noise).unwrap().into_matrix();

        // Identity generators: both cycle conventions and the identity
        // mapping objective must be exactly zero.
        let id = IdentityMap;
        let mut g = Graph::new();
        let s = g.constant(feat_s.clone());
        let y = g.constant(feat_y.clone());
        let plain = cycle_loss(&mut g, &id, &id, &[s], &[y], Bind::Frozen).unwrap();
        assert_eq!(g.value(plain.loss).data(), &[0.0], "plain cycle loss");
        let idm = identity_loss(&mut g, &id, &id, &[s], &[y], Bind::Frozen).unwrap();
        assert_eq!(g.value(idm).data(), &[0.0], "plain identity loss");

        let mut g = Graph::new();
        let stc = g.constant(s_tc.clone());
        let stn = g.constant(s_tn.clone());
        let ytc = g.constant(y_tc.clone());
        let ytn = g.constant(y_tn.clone());
        let nit = nit_cycle_loss(
            &mut g,
            &id,
            &id,
            &[stc],
            &[stn],
            &[ytc],
            &[ytn],
            n_noise + 1,
            Bind::Frozen,
        )
        .unwrap();
        assert_eq!(g.value(nit.loss).data(), &[0.0], "conditioned cycle loss");
        let idm = identity_loss(&mut g, &id, &id, &[stc], &[ytn], Bind::Frozen).unwrap();
        assert_eq!(g.value(idm).data(), &[0.0], "conditioned identity loss");

        // A critic pinned at one half scores 2 ln 2 on both sides.
        let half = ConstantCritic(0.5);
        for (name, real, fake) in [("s side", &s_tc, &y_tc), ("y side", &y_tn, &s_tn)] {
            let mut g = Graph::new();
            let r = g.constant(real.clone());
            let f = g.constant(fake.clone());
            let loss = adv1_discriminator_loss(&mut g, &half, &[r], &[f], Bind::Frozen).unwrap();
            let got = g.value(loss).data()[0];
            assert!((got - 1.3863f32).abs() <= 1e-4, "{name}: D == 0.5 loss {got}, want 1.3863");
        }

        // The second adversarial pass sees only detached fakes, so a
        // generator bound trainable in the same graph accumulates exactly
        // zero gradient from it.
        let mut rng = rng_for(31);
        let gen = Generator::init(
            GeneratorSpec {
                in_rows: 9,
                base_channels: 4,
                n_residual_blocks: 1,
                downsample_factor: 4,
            },
            "g",
            &mut rng,
        )
        .unwrap();
        let disc = Discriminator::init(
            DiscriminatorSpec { in_rows: 9, base_channels: 4, n_layers: 2 },
            "d",
            &mut rng,
        )
        .unwrap();
        let real_feat = rt(&mut rng, vec![9, 6], -1.0, 1.0);
        let gen_in = rt(&mut rng, vec![9, 6], -1.0, 1.0);
        let cycled_host = gen.eval(&gen_in).unwrap();

        let mut g = Graph::new();
        let live_in = g.constant(gen_in.clone());
        let live_fake = gen.forward(&mut g, live_in, Bind::Trainable).unwrap();
        let _ = live_fake;
        let real = g.constant(real_feat);
        let cycled = g.constant(cycled_host);
        let loss =
            adv2_discriminator_loss(&mut g, &disc, &[real], &[cycled], Bind::Trainable).unwrap();
        g.backward(loss).unwrap();
        for p in gen.params() {
            let grad = g.export_grad(p.id()).expect("generator bound in this graph");
            assert!(
                grad.data().iter().all(|&v| v == 0.0),
                "adv2 leaked gradient into generator parameter {}",
                p.name()
            );
        }
        let critic_touched = disc
            .params()
            .iter()
            .any(|p| g.export_grad(p.id()).is_some_and(|t| t.data().iter().any(|&v| v != 0.0)));
        assert!(critic_touched, "adv2 backward left the critic untouched");
    });
}

#[test]
fn acceptance_4_conditioning_algebra() {
    criterion(4, || {
        let mut rng = rng_for(4);
        let features = rt(&mut rng, vec![257, 11], -3.0, 3.0);
        let label = DomainLabel::new(3, 5).unwrap();
        let ext = append_label(&features, &label).unwrap();
        assert_eq!(ext.matrix().shape(), &[263, 11], "extended dimension for F=257, N=5");

        let (feat_back, label_rows) = ext.split_label();
        assert_eq!(feat_back.data(), features.data(), "features round-trip bit-exact");
        assert_eq!(label_rows.shape(), &[6, 11], "label block keeps N+1 rows");
        let reappended = append_label(&feat_back, &label).unwrap();
        assert_eq!(reappended.matrix().data(), ext.matrix().data(), "append round-trip");

        let swapped = ext.replace_label(&DomainLabel::clean(5)).unwrap();
        let restored = swapped.replace_label(&label).unwrap();
        assert_eq!(restored.matrix().data(), ext.matrix().data(), "replace round-trip");

        let rebuilt = ExtendedFeature::from_matrix(ext.matrix().clone(), 5).unwrap();
        assert_eq!(rebuilt.matrix().data(), ext.matrix().data());
    });
}

#[test]
fn acceptance_5_corpus_arithmetic() {
    criterion(5, || {
        let fake = |prefix: &str, n: usize| -> Vec<PathBuf> {
            (0..n).map(|i| PathBuf::from(format!("{prefix}{i:04}.wav"))).collect()
        };
        let clean = fake("utt", 1194);
        let noise = fake("noise", 5);
        let base = SynthesisOptions {
            snrs: vec![-5.0, 0.0, 5.0],
            render_audio: false,
            ..Default::default()
        };
        let paired = synthesize_corpus(&clean, &noise, Path::new("unused"), &base).unwrap();
        assert_eq!(paired.noisy_pool(Split::Train).len(), 17_910, "paired count law");

        let opts = SynthesisOptions { split_mode: SplitMode::DisjointContent, ..base };
        let disjoint = synthesize_corpus(&clean, &noise, Path::new("unused"), &opts).unwrap();
        assert_eq!(disjoint.noisy_pool(Split::Train).len(), 8_955, "disjoint count law");
        let report = validate_manifest_entries(&disjoint);
        assert!(report.passed(), "disjoint invariant: {:?}", report.failures);

        // Toy scale with audio on disk: 2 clean x 1 noise x 3 SNRs.
        let dir = tempfile::tempdir().unwrap();
        let (clean, noise) = generate_demo_corpus(
            dir.path(),
            &DemoSpec { n_clean: 2, n_noise: 1, duration_secs: 0.3, seed: 5 },
        )
        .unwrap();
        let opts = SynthesisOptions {
            snrs: vec![-5.0, 0.0, 5.0],
            stft: StftConfig { frame_ms: 8, hop_ms: 4, fft_size: 128, window: Window::default() },
            threads: 1,
            ..Default::default()
        };
        let toy = synthesize_corpus(&clean, &noise, dir.path(), &opts).unwrap();
        assert_eq!(toy.noisy_pool(Split::Train).len(), 6, "toy count law");
        for record in toy.noisy_pool(Split::Train) {
            assert!(toy.resolve(record).exists(), "{} missing", record.path);
        }
    });
}

/// The smoke corpus both experiment criteria share: 8 multi-tone clean
/// utterances, 2 filtered-noise types, 0 and 5 dB, narrow STFT.
fn smoke_corpus(dir: &Path) -> (CorpusManifest, StftConfig) {
    let stft_cfg = StftConfig { frame_ms: 8, hop_ms: 4, fft_size: 128, window: Window::default() };
    let (clean, noise) = generate_demo_corpus(
        dir,
        &DemoSpec { n_clean: 8, n_noise: 2, duration_secs: 0.5, seed: 7 },
    )
    .unwrap();
    let opts = SynthesisOptions {
        snrs: vec![0.0, 5.0],
        seed: 7,
        stft: stft_cfg,
        threads: 1,
        ..Default::default()
    };
    let manifest = synthesize_corpus(&clean, &noise, dir, &opts).unwrap();
    (manifest, stft_cfg)
}

fn smoke_config(mode: TrainMode) -> TrainConfig {
    TrainConfig {
        seed: 7,
        mode,
        base_channels: 16,
        crop_frames: 32,
        epochs: 600,
        max_steps: Some(300),
        ..Default::default()
    }
}

#[test]
fn acceptance_6_smoke_experiment() {
    criterion(6, || {
        let _lock = HEAVY.lock().unwrap();
        let start = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        let corpus_dir = dir.path().join("corpus");
        fs::create_dir_all(&corpus_dir).unwrap();
        let (manifest, stft_cfg) = smoke_corpus(&corpus_dir);
        let config = smoke_config(TrainMode::Nit);

        let run_a = dir.path().join("run-a");
        let outcome = train(&config, &manifest, &run_a).unwrap();
        let history = &outcome.state.history;
        assert_eq!(history.len(), 300, "step count");

        // (a) The cycle term falls by at least half, step 1 against the
        // mean of the last ten steps.
        let first = history[0].terms.cyc as f64;
        let last10 = history[290..].iter().map(|r| r.terms.cyc as f64).sum::<f64>() / 10.0;
        assert!(
            last10 <= 0.5 * first,
            "cycle loss fell to {last10:.4} from {first:.4}, less than half"
        );

        // (b) Enhancing the noisy training utterances moves them strictly
        // closer to clean in mean log-spectral L1 distance.
        let ckpt = load_checkpoint(&outcome.final_checkpoint).unwrap();
        let enhancer = Enhancer::from_checkpoint(&ckpt).unwrap();
        let by_id: BTreeMap<&str, &UtteranceRecord> =
            manifest.records.iter().filter(|r| r.is_clean()).map(|r| (r.id.as_str(), r)).collect();
        let (mut d_noisy, mut d_enh, mut n) = (0.0f64, 0.0f64, 0usize);
        for record in manifest.noisy_pool(Split::Train) {
            let src = record.source_clean_id.as_deref().unwrap();
            let clean_wav = read_wav(manifest.resolve(by_id[src])).unwrap();
            let noisy_wav = read_wav(manifest.resolve(record)).unwrap();
            let enhanced = enhancer.enhance(&noisy_wav).unwrap();
            d_noisy += log_spectral_l1(&clean_wav, &noisy_wav, &stft_cfg);
            d_enh += log_spectral_l1(&clean_wav, &enhanced, &stft_cfg);
            n += 1;
        }
        assert_eq!(n, 32);
        let (mean_noisy, mean_enh) = (d_noisy / n as f64, d_enh / n as f64);
        assert!(
            mean_enh < mean_noisy,
            "enhanced distance {mean_enh:.4} not below noisy {mean_noisy:.4}"
        );

        // (c) The rerun reproduces the loss CSV byte for byte.
        let run_b = dir.path().join("run-b");
        train(&config, &manifest, &run_b).unwrap();
        assert_eq!(
            fs::read(run_a.join("losses.csv")).unwrap(),
            fs::read(run_b.join("losses.csv")).unwrap(),
            "loss CSV differs between identical runs"
        );

        let elapsed = start.elapsed();
        assert!(
            elapsed < Duration::from_secs(900),
            "smoke experiment took {elapsed:?}, budget is 15 minutes"
        );
    });
}

#[test]
fn acceptance_7_baseline_ab() {
    criterion(7, || {
        let _lock = HEAVY.lock().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let corpus_dir = dir.path().join("corpus");
        fs::create_dir_all(&corpus_dir).unwrap();
        let (manifest, _) = smoke_corpus(&corpus_dir);

        let outcome =
            train(&smoke_config(TrainMode::Baseline), &manifest, &dir.path().join("run")).unwrap();
        assert_eq!(outcome.state.history.len(), 300, "baseline run completes");
        assert!(outcome.state.history.iter().all(|r| r.is_finite()));

        // With no label rows the conditioned cycle objective degenerates
        // to the plain one on the same feature content.
        let mut rng = rng_for(7);
        let spec = GeneratorSpec {
            in_rows: 8,
            base_channels: 4,
            n_residual_blocks: 1,
            downsample_factor: 4,
        };
        let gys = Generator::init(spec, "gys", &mut rng).unwrap();
        let gsy = Generator::init(spec, "gsy", &mut rng).unwrap();
        let feat_s = rt(&mut rng, vec![8, 12], -1.0, 1.0);
        let feat_y = rt(&mut rng, vec![8, 12], -1.0, 1.0);

        let mut g = Graph::new();
        let s = g.constant(feat_s.clone());
        let y = g.constant(feat_y.clone());
        let nit =
            nit_cycle_loss(&mut g, &gys, &gsy, &[s], &[s], &[y], &[y], 0, Bind::Frozen).unwrap();
        let nit_value = g.value(nit.loss).data()[0];

        let mut g = Graph::new();
        let s = g.constant(feat_s);
        let y = g.constant(feat_y);
        let plain = cycle_loss(&mut g, &gys, &gsy, &[s], &[y], Bind::Frozen).unwrap();
        let plain_value = g.value(plain.loss).data()[0];

        assert!(
            (nit_value - plain_value).abs() <= 1e-6,
            "stripped-label conditioned cycle {nit_value} vs plain {plain_value}"
        );
    });
}

#[test]
fn acceptance_8_metrics_suite() {
    criterion(8, || {
        let mut rng = rng_for(8);
        let samples: Vec<f64> = (0..16_000)
            .map(|i| {
                let t = i as f64 / 16_000.0;
                (2.0 * std::f64::consts::PI * 220.0 * t).sin()
                    + 0.4 * (2.0 * std::f64::consts::PI * 1330.0 * t).sin()
                    + 0.05 * rng.random_range(-1.0..1.0)
            })
            .collect();
        let x = Waveform::new(samples, 16_000);

        assert_eq!(seg_snr(&x, &x).unwrap(), 35.0, "identity segmental SNR pins the ceiling");
        let llr_self = llr(&x, &x).unwrap().value;
        assert!(llr_self.abs() <= 1e-6, "identity LLR {llr_self}");
        assert_eq!(wss(&x, &x).unwrap().value, 0.0, "identity WSS");

        // Composite arithmetic against a literal recomputation, plus the
        // clamp at both ends.
        for seed in 0..1000u64 {
            let mut rng = rng_for(seed);
            let l = rng.random_range(0.0..3.0f64);
            let w = rng.random_range(0.0..120.0f64);
            let s = rng.random_range(-10.0..35.0f64);
            let p = rng.random_range(-0.5..4.5f64);
            let (csig, cbak, covl) = composite_scores(l, w, s, p);
            let want_csig = (3.093 - 1.029 * l + 0.603 * p - 0.009 * w).clamp(1.0, 5.0);
            let want_cbak = (1.634 + 0.478 * p - 0.007 * w + 0.063 * s).clamp(1.0, 5.0);
            let want_covl = (1.594 + 0.805 * p - 0.512 * l - 0.007 * w).clamp(1.0, 5.0);
            assert!((csig - want_csig).abs() < 1e-9, "csig seed {seed}");
            assert!((cbak - want_cbak).abs() < 1e-9, "cbak seed {seed}");
            assert!((covl - want_covl).abs() < 1e-9, "covl seed {seed}");
        }
        let (lo, _, _) = composite_scores(10.0, 500.0, -10.0, -0.5);
        assert_eq!(lo, 1.0, "lower clamp");
        let (hi, _, _) = composite_scores(0.0, 0.0, 35.0, 4.5);
        assert_eq!(hi, 5.0, "upper clamp");
    });
}

fn run_cli(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_nitcg"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary should launch");
    assert!(
        out.status.code() == Some(0),
        "{args:?} exited {:?}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// One full command-line pass over the toy corpus; returns the artifact
/// files whose bytes must be stable across identical runs.
fn cli_pipeline(root: &Path, tag: &str) -> Vec<PathBuf> {
    let base = root.join(tag);
    fs::create_dir_all(&base).unwrap();
    let path = |s: &str| base.join(s).to_str().unwrap().to_owned();

    run_cli(
        root,
        &[
            "synth-data",
            "--demo",
            "--demo-clean",
            "3",
            "--demo-noise",
            "1",
            "--demo-secs",
            "0.3",
            "--snrs",
            "0,5",
            "--seed",
            "9",
            "--set",
            "stft.frame_ms=8",
            "--set",
            "stft.hop_ms=4",
            "--set",
            "stft.fft_size=128",
            "--out",
            &path("corpus"),
        ],
    );
    run_cli(
        root,
        &[
            "train",
            "--manifest",
            &path("corpus/manifest.jsonl"),
            "--out",
            &path("run"),
            "--epochs",
            "1",
            "--mode",
            "nit",
            "--seed",
            "7",
            "--set",
            "base_channels=4",
            "--set",
            "n_residual_blocks=1",
            "--set",
            "disc_layers=2",
            "--set",
            "crop_frames=16",
        ],
    );
    run_cli(
        root,
        &[
            "enhance",
            "--checkpoint",
            &path("run/checkpoint-final.bin"),
            "--input",
            &path("corpus/noisy"),
            "--out",
            &path("enhanced"),
        ],
    );
    run_cli(
        root,
        &[
            "eval",
            "--manifest",
            &path("corpus/manifest.jsonl"),
            "--enhanced",
            &path("enhanced"),
            "--out",
            &path("eval"),
        ],
    );
    run_cli(
        root,
        &[
            "plot",
            "--conditions",
            &path("eval/eval_conditions.csv"),
            "--metric",
            "seg_snr",
            "--out",
            &path("figs"),
        ],
    );

    vec![
        base.join("run/losses.csv"),
        base.join("eval/eval_per_utterance.csv"),
        base.join("eval/eval_conditions.csv"),
        base.join("eval/eval_tables.csv"),
        base.join("figs/plot_seg_snr.csv"),
        base.join("figs/plot_seg_snr.svg"),
    ]
}

/// Every artifact CSV: consistent column counts under its header. SVG:
/// well-formed frame.
fn assert_schemas(files: &[PathBuf]) {
    for file in files {
        let text = fs::read_to_string(file).unwrap();
        assert!(!text.trim().is_empty(), "{} is empty", file.display());
        match file.extension().and_then(|e| e.to_str()) {
            Some("csv") => {
                let mut lines = text.lines();
                let header = lines.next().unwrap();
                let cols = header.split(',').count();
                assert!(cols >= 2, "{}: header {header:?}", file.display());
                for (i, line) in lines.enumerate() {
                    assert_eq!(
                        line.split(',').count(),
                        cols,
                        "{} line {}: {line:?}",
                        file.display(),
                        i + 2
                    );
                }
            }
            Some("svg") => {
                assert!(text.starts_with("<svg"), "{}: not an svg", file.display());
                assert!(text.trim_end().ends_with("</svg>"), "{}: unterminated", file.display());
                assert!(text.contains("<rect"), "{}: no bars drawn", file.display());
            }
            other => panic!("unexpected artifact type {other:?}"),
        }
    }
}

#[test]
fn acceptance_9_cli_end_to_end() {
    criterion(9, || {
        let dir = tempfile::tempdir().unwrap();
        let first = cli_pipeline(dir.path(), "a");
        assert_schemas(&first);
        let second = cli_pipeline(dir.path(), "b");
        for (a, b) in first.iter().zip(&second) {
            assert_eq!(
                fs::read(a).unwrap(),
                fs::read(b).unwrap(),
                "{} differs between identical runs",
                a.display()
            );
        }
    });
}
