//! Scripted detector child for exercising the subprocess protocol.
//!
//! Usage: `bbo-detector-stub <mode> [arg]` with mode one of
//! `const <v>`, `mean`, `mean-threshold`, `dump-frames <file>`,
//! `die-after <n>`, `hang`, `garbage`.

use std::fs::OpenOptions;
use std::io::{self, ErrorKind, Read, Write};
use std::process::ExitCode;
use std::time::Duration;

enum Mode {
    Const(f32),
    Mean,
    MeanThreshold,
    DumpFrames(String),
    DieAfter(u64),
    Hang,
    Garbage,
}

fn parse_mode(args: &[String]) -> Option<Mode> {
    let arg = args.get(1);
    Some(match args.first()?.as_str() {
        "const" => Mode::Const(arg?.parse().ok()?),
        "mean" => Mode::Mean,
        "mean-threshold" => Mode::MeanThreshold,
        "dump-frames" => Mode::DumpFrames(arg?.clone()),
        "die-after" => Mode::DieAfter(arg?.parse().ok()?),
        "hang" => Mode::Hang,
        "garbage" => Mode::Garbage,
        _ => return None,
    })
}

/// Reads one request; `Ok(None)` on a clean end of input.
fn read_frame(input: &mut impl Read) -> io::Result<Option<(Vec<u8>, Vec<f32>)>> {
    let mut header = [0u8; 16];
    match input.read_exact(&mut header) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    if &header[..4] != b"BBAT" {
        return Err(io::Error::new(ErrorKind::InvalidData, "bad magic"));
    }
    let dim = |i: usize| u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let n = dim(0) * dim(1) * dim(2);
    let mut body = vec![0u8; 4 * n];
    input.read_exact(&mut body)?;
    let pixels = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let mut frame = header.to_vec();
    frame.extend_from_slice(&body);
    Ok(Some((frame, pixels)))
}

fn mean(pixels: &[f32]) -> f64 {
    pixels.iter().map(|&v| f64::from(v)).sum::<f64>() / pixels.len().max(1) as f64
}

fn serve(mode: Mode) -> io::Result<()> {
    let mut input = io::stdin().lock();
    let mut output = io::stdout().lock();
    let mut served = 0u64;
    while let Some((frame, pixels)) = read_frame(&mut input)? {
        let reply: [u8; 4] = match &mode {
            Mode::Const(v) => v.to_le_bytes(),
            Mode::Mean => (mean(&pixels).clamp(0.0, 1.0) as f32).to_le_bytes(),
            Mode::MeanThreshold => (if mean(&pixels) > 0.5 { 1.0f32 } else { 0.0 }).to_le_bytes(),
            Mode::DumpFrames(path) => {
                OpenOptions::new().create(true).append(true).open(path)?.write_all(&frame)?;
                0.5f32.to_le_bytes()
            }
            Mode::DieAfter(n) if served >= *n => std::process::exit(1),
            Mode::DieAfter(_) => 0.5f32.to_le_bytes(),
            Mode::Hang => loop {
                std::thread::sleep(Duration::from_secs(3600));
            },
            Mode::Garbage => *b"abcd",
        };
        output.write_all(&reply)?;
        output.flush()?;
        served += 1;
    }
    Ok(())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(mode) = parse_mode(&args) else {
        eprintln!("usage: bbo-detector-stub const <v> | mean | mean-threshold | dump-frames <file> | die-after <n> | hang | garbage");
        return ExitCode::from(2);
    };
    match serve(mode) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bbo-detector-stub: {e}");
            ExitCode::from(3)
        }
    }
}
