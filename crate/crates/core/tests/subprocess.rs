use std::time::{Duration, Instant};

use lognormal_bbo::attack::{
    attack_dataset, attack_one, AttackConfig, AttackStatus, Detector, DetectorSpec, Image, SubprocessDetector,
};
use lognormal_bbo::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STUB: &str = env!("CARGO_BIN_EXE_bbo-detector-stub");

fn stub(mode: &str) -> String {
    format!("'{STUB}' {mode}")
}

fn noise(w: usize, h: usize, c: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::new(w, h, c, (0..w * h * c).map(|_| rng.random()).collect()).unwrap()
}

/// Same decision rule as the stub's `mean-threshold` mode, evaluated in-process.
struct ThresholdDetector(u64);

impl Detector for ThresholdDetector {
    fn score(&mut self, image: &Image) -> lognormal_bbo::Result<f64> {
        self.0 += 1;
        let m = image.pixels().iter().map(|&v| f64::from(v as f32)).sum::<f64>() / image.len() as f64;
        Ok(if m > 0.5 { 1.0 } else { 0.0 })
    }

    fn query_count(&self) -> u64 {
        self.0
    }
}

#[test]
fn const_stub_returns_its_value() {
    let mut d = SubprocessDetector::spawn(&stub("const 0.25")).unwrap();
    for seed in 0..5 {
        assert_eq!(d.score(&noise(3, 2, 1, seed)).unwrap(), 0.25);
    }
    assert_eq!(d.query_count(), 5);
}

#[test]
fn mean_stub_matches_f32_mean() {
    let mut d = SubprocessDetector::spawn(&stub("mean")).unwrap();
    let img = Image::new(2, 1, 1, vec![0.25, 0.75]).unwrap();
    assert_eq!(d.score(&img).unwrap(), 0.5);
    let img = Image::new(1, 1, 3, vec![0.0, 0.0, 0.3]).unwrap();
    assert_eq!(d.score(&img).unwrap(), f64::from((f64::from(0.3f32) / 3.0) as f32));
}

#[test]
fn threshold_attack_matches_in_process_detector() {
    // Mean slightly above 0.5 so the attack has something to do.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pixels: Vec<f64> = (0..8 * 8 * 3).map(|_| rng.random_range(0.02..1.0)).collect();
    let image = Image::new(8, 8, 3, pixels).unwrap();
    let mut config = AttackConfig::new("algo1", 300, 0.03).unwrap();
    config.kernel_sigma = Some(1.0);
    let mut remote = SubprocessDetector::spawn(&stub("mean-threshold")).unwrap();
    let mut local = ThresholdDetector(0);
    let a = attack_one(&image, &mut remote, &config, 11).unwrap();
    let b = attack_one(&image, &mut local, &config, 11).unwrap();
    assert_eq!(a, b);
    assert_eq!(remote.query_count(), local.query_count());
}

#[test]
fn dead_detector_errors_one_image_then_reconnects() {
    let images: Vec<(String, Image)> = (0..5).map(|i| (format!("im{i}"), noise(4, 4, 3, i))).collect();
    // Each image costs 1 screening query plus a full budget of 10 at score 0.5,
    // so the 26th query, inside the third image, finds the process gone.
    let spec = DetectorSpec::Subprocess(stub("die-after 25"));
    let config = AttackConfig::new("rs", 10, 0.03).unwrap();
    let summary = attack_dataset(&images, &spec, &config, 0, 1).unwrap();
    let kinds: Vec<&str> = summary
        .rows
        .iter()
        .map(|r| match r.status {
            AttackStatus::Attacked(_) => "ok",
            AttackStatus::Errored { .. } => "error",
            AttackStatus::Skipped { .. } => "skipped",
        })
        .collect();
    assert_eq!(kinds, ["ok", "ok", "error", "ok", "ok"]);
    assert_eq!((summary.attacked, summary.errored), (4, 1));
    assert_eq!(summary.success_rate(), Some(0.0));
}

#[test]
fn hanging_detector_times_out() {
    let mut d = SubprocessDetector::with_timeout(&stub("hang"), Duration::from_millis(200)).unwrap();
    let start = Instant::now();
    assert!(matches!(d.score(&noise(2, 2, 1, 0)), Err(Error::Evaluation(_))));
    assert!(start.elapsed() < Duration::from_secs(5));
    // Stays failed rather than waiting again.
    assert!(d.score(&noise(2, 2, 1, 1)).is_err());
}

#[test]
fn out_of_range_reply_is_a_protocol_error() {
    let mut d = SubprocessDetector::spawn(&stub("garbage")).unwrap();
    match d.score(&noise(2, 2, 3, 0)) {
        Err(Error::Protocol(msg)) => assert!(msg.contains("61 62 63 64"), "{msg}"),
        other => panic!("expected protocol error, got {other:?}"),
    }
}

#[test]
fn missing_program_fails_on_first_query() {
    let mut d = SubprocessDetector::spawn("exec /nonexistent/detector").unwrap();
    assert!(d.score(&noise(1, 1, 1, 0)).is_err());
}

#[test]
fn golden_frame_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("frames.bin");
    let mut d = SubprocessDetector::spawn(&format!("'{STUB}' dump-frames '{}'", dump.display())).unwrap();
    let img = Image::new(2, 1, 1, vec![0.0, 1.0]).unwrap();
    assert_eq!(d.score(&img).unwrap(), 0.5);
    drop(d);
    let expected: Vec<u8> = [
        b"BBAT".as_slice(),
        &[2, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0],
        &[0x00, 0x00, 0x00, 0x00],
        &[0x00, 0x00, 0x80, 0x3f],
    ]
    .concat();
    assert_eq!(std::fs::read(&dump).unwrap(), expected);
}
