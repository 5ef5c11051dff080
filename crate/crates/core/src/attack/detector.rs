use std::io::{Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::image::Image;
use crate::error::{Error, Result};

pub const FRAME_MAGIC: &[u8; 4] = b"BBAT";
pub const DEFAULT_QUERY_TIMEOUT: Duration = Duration::from_secs(30);

/// Black-box probability that an image is fake.
pub trait Detector: Send {
    fn score(&mut self, image: &Image) -> Result<f64>;

    /// Queries issued so far, failed ones included.
    fn query_count(&self) -> u64;
}

/// Request frame: magic, little-endian u32 width/height/channels, then the
/// pixels as little-endian f32.
pub fn encode_request(image: &Image) -> Vec<u8> {
    let mut frame = Vec::with_capacity(16 + 4 * image.len());
    frame.extend_from_slice(FRAME_MAGIC);
    for d in [image.width(), image.height(), image.channels()] {
        frame.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in image.pixels() {
        frame.extend_from_slice(&(v as f32).to_le_bytes());
    }
    frame
}

pub fn decode_response(bytes: [u8; 4]) -> Result<f64> {
    let v = f32::from_le_bytes(bytes);
    if (0.0..=1.0).contains(&v) {
        Ok(f64::from(v))
    } else {
        Err(Error::Protocol(format!(
            "response {v} outside [0, 1] (bytes {:02x} {:02x} {:02x} {:02x})",
            bytes[0], bytes[1], bytes[2], bytes[3]
        )))
    }
}

pub const POOL_GRID: usize = 8;

/// Grayscale image averaged over an 8x8 grid of cells; cell `i` along an axis
/// of length `n` spans `floor(i n / 8) .. ceil((i + 1) n / 8)`.
pub fn pooled_gray_features(image: &Image) -> Vec<f64> {
    let (w, h, c) = (image.width(), image.height(), image.channels());
    let px = image.pixels();
    let span = |i: usize, n: usize| (i * n / POOL_GRID, ((i + 1) * n).div_ceil(POOL_GRID));
    let mut features = Vec::with_capacity(POOL_GRID * POOL_GRID);
    for gy in 0..POOL_GRID {
        let (y0, y1) = span(gy, h);
        for gx in 0..POOL_GRID {
            let (x0, x1) = span(gx, w);
            let mut acc = 0.0;
            for y in y0..y1 {
                acc += px[(y * w + x0) * c..(y * w + x1) * c].iter().sum::<f64>();
            }
            features.push(acc / ((y1 - y0) * (x1 - x0) * c) as f64);
        }
    }
    features
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Logistic model on pooled grayscale features with seeded standard-normal
/// weights. The bias puts the median uniform-noise image at the 0.5 boundary.
#[derive(Debug, Clone)]
pub struct ToyDetector {
    weights: Vec<f64>,
    bias: f64,
    queries: u64,
}

const CALIBRATION_IMAGES: usize = 255;
const CALIBRATION_SIZE: usize = 64;

impl ToyDetector {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: Vec<f64> = (0..POOL_GRID * POOL_GRID).map(|_| rng.sample(StandardNormal)).collect();
        let mut logits: Vec<f64> = (0..CALIBRATION_IMAGES)
            .map(|_| {
                let n = CALIBRATION_SIZE * CALIBRATION_SIZE * 3;
                let pixels = (0..n).map(|_| rng.random::<f64>()).collect();
                let img = Image::new(CALIBRATION_SIZE, CALIBRATION_SIZE, 3, pixels).expect("valid noise image");
                dot(&weights, &pooled_gray_features(&img))
            })
            .collect();
        logits.sort_by(f64::total_cmp);
        let bias = -logits[CALIBRATION_IMAGES / 2];
        Self { weights, bias, queries: 0 }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn logit(&self, image: &Image) -> f64 {
        dot(&self.weights, &pooled_gray_features(image)) + self.bias
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Detector for ToyDetector {
    fn score(&mut self, image: &Image) -> Result<f64> {
        self.queries += 1;
        Ok(logistic(self.logit(image)))
    }

    fn query_count(&self) -> u64 {
        self.queries
    }
}

/// Detector served by a child process (`sh -c <command>`) speaking the framed
/// protocol on its standard input and output.
pub struct SubprocessDetector {
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    responses: Receiver<std::io::Result<[u8; 4]>>,
    timeout: Duration,
    queries: u64,
    dead: bool,
}

impl SubprocessDetector {
    pub fn spawn(command: &str) -> Result<Self> {
        Self::with_timeout(command, DEFAULT_QUERY_TIMEOUT)
    }

    pub fn with_timeout(command: &str, timeout: Duration) -> Result<Self> {
        let mut shell = Command::new("sh");
        shell.arg("-c").arg(command);
        // Own process group, so that killing the detector also reaches
        // anything the shell started.
        #[cfg(unix)]
        std::os::unix::process::CommandExt::process_group(&mut shell, 0);
        let mut child = shell
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Evaluation(format!("cannot start detector `{command}`: {e}")))?;
        let stdin = child.stdin.take();
        let mut stdout = child.stdout.take().expect("stdout is piped");
        let (tx, responses) = mpsc::channel();
        thread::spawn(move || loop {
            let mut buf = [0u8; 4];
            let r = stdout.read_exact(&mut buf).map(|_| buf);
            let failed = r.is_err();
            if tx.send(r).is_err() || failed {
                break;
            }
        });
        Ok(Self { command: command.to_string(), child, stdin, responses, timeout, queries: 0, dead: false })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn kill(&mut self) {
        #[cfg(unix)]
        if let Ok(pid) = libc::pid_t::try_from(self.child.id()) {
            // SAFETY: plain syscall on the group created at spawn time.
            unsafe {
                libc::kill(-pid, libc::SIGKILL);
            }
        }
        let _ = self.child.kill();
    }

    fn fail(&mut self, message: String) -> Error {
        self.dead = true;
        self.kill();
        Error::Evaluation(format!("detector `{}`: {message}", self.command))
    }
}

impl Detector for SubprocessDetector {
    fn score(&mut self, image: &Image) -> Result<f64> {
        self.queries += 1;
        if self.dead {
            return Err(Error::Evaluation(format!("detector `{}` is no longer running", self.command)));
        }
        let frame = encode_request(image);
        let written = match self.stdin.as_mut() {
            Some(stdin) => stdin.write_all(&frame).and_then(|_| stdin.flush()),
            None => Err(std::io::ErrorKind::BrokenPipe.into()),
        };
        if let Err(e) = written {
            return Err(self.fail(format!("write failed: {e}")));
        }
        match self.responses.recv_timeout(self.timeout) {
            Ok(Ok(bytes)) => decode_response(bytes).inspect_err(|e| log::error!("detector `{}`: {e}", self.command)),
            Ok(Err(e)) => Err(self.fail(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(self.fail(format!("no response within {:?}", self.timeout))),
            Err(RecvTimeoutError::Disconnected) => Err(self.fail("response stream closed".into())),
        }
    }

    fn query_count(&self) -> u64 {
        self.queries
    }
}

impl Drop for SubprocessDetector {
    fn drop(&mut self) {
        drop(self.stdin.take());
        self.kill();
        let _ = self.child.wait();
    }
}

/// `builtin:<seed>` or `subprocess:<command>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DetectorSpec {
    Builtin(u64),
    Subprocess(String),
}

impl DetectorSpec {
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(seed) = s.strip_prefix("builtin:") {
            return seed
                .parse()
                .map(Self::Builtin)
                .map_err(|_| Error::InvalidArgument(format!("bad builtin detector seed `{seed}`")));
        }
        match s.strip_prefix("subprocess:") {
            Some(cmd) if !cmd.trim().is_empty() => Ok(Self::Subprocess(cmd.to_string())),
            _ => Err(Error::InvalidArgument(format!(
                "detector must be builtin:<seed> or subprocess:<command>, got `{s}`"
            ))),
        }
    }

    /// Opens a fresh, unshared connection.
    pub fn connect(&self) -> Result<Box<dyn Detector>> {
        Ok(match self {
            Self::Builtin(seed) => Box::new(ToyDetector::new(*seed)),
            Self::Subprocess(cmd) => Box::new(SubprocessDetector::spawn(cmd)?),
        })
    }
}

impl std::fmt::Display for DetectorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Builtin(seed) => write!(f, "builtin:{seed}"),
            Self::Subprocess(cmd) => write!(f, "subprocess:{cmd}"),
        }
    }
}
