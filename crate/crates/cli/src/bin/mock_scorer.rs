//! Scripted wire-protocol peer for exercising the external scorer path.
//!
//! Usage: `segpipe-mock-scorer MODE [ARG]`
//!
//! | mode           | behaviour                                               |
//! |----------------|---------------------------------------------------------|
//! | `uniform P`    | every pixel scores `P`                                  |
//! | `red`          | red channel / 255                                       |
//! | `fail-after N` | answers `N` requests with 0.5, then exits with status 1 |
//! | `short`        | sends half a response, then exits                       |
//! | `hang`         | reads requests, never answers                           |
//! | `exit-early`   | exits without reading                                   |
//! | `out-of-range` | every pixel scores 1.5                                  |
//! | `wrong-size`   | answers with one extra row                              |
//!
//! A malformed request ends the process with status 3.

use std::io::{self, BufReader, BufWriter, Write};
use std::process::ExitCode;
use std::time::Duration;

use segpipe_core::scorer::wire::{write_message, ScoreRequest, ScoreResponse};

enum Mode {
    Uniform(f32),
    Red,
    FailAfter(usize),
    Short,
    Hang,
    ExitEarly,
    OutOfRange,
    WrongSize,
}

fn parse_mode(args: &[String]) -> Option<Mode> {
    let arg = args.get(1);
    Some(match args.first()?.as_str() {
        "uniform" => Mode::Uniform(arg?.parse().ok()?),
        "red" => Mode::Red,
        "fail-after" => Mode::FailAfter(arg?.parse().ok()?),
        "short" => Mode::Short,
        "hang" => Mode::Hang,
        "exit-early" => Mode::ExitEarly,
        "out-of-range" => Mode::OutOfRange,
        "wrong-size" => Mode::WrongSize,
        _ => return None,
    })
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(mode) = parse_mode(&args) else {
        eprintln!("usage: segpipe-mock-scorer uniform P|red|fail-after N|short|hang|exit-early|out-of-range|wrong-size");
        return ExitCode::from(2);
    };
    if let Mode::ExitEarly = mode {
        return ExitCode::SUCCESS;
    }

    let mut input = BufReader::new(io::stdin().lock());
    let mut output = BufWriter::new(io::stdout().lock());
    let mut served = 0usize;
    loop {
        let req = match ScoreRequest::read_from(&mut input) {
            Ok(Some(req)) => req,
            Ok(None) => return ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("mock scorer: {e}");
                return ExitCode::from(3);
            }
        };
        let (h, w) = (req.height as usize, req.width as usize);
        let uniform = |p: f32| ScoreResponse {
            height: req.height,
            width: req.width,
            probs: vec![p; h * w],
        };
        let resp = match mode {
            Mode::Uniform(p) => uniform(p),
            Mode::Red => ScoreResponse {
                height: req.height,
                width: req.width,
                probs: req
                    .pixels
                    .chunks(req.channels as usize)
                    .map(|px| px[0] as f32 / 255.0)
                    .collect(),
            },
            Mode::FailAfter(n) if served >= n => return ExitCode::from(1),
            Mode::FailAfter(_) => uniform(0.5),
            Mode::Short => {
                let bytes = uniform(0.5).encode();
                let _ = output.write_all(&bytes[..bytes.len() / 2]);
                let _ = output.flush();
                return ExitCode::SUCCESS;
            }
            Mode::Hang => loop {
                std::thread::sleep(Duration::from_secs(3600));
            },
            Mode::OutOfRange => uniform(1.5),
            Mode::WrongSize => ScoreResponse {
                height: req.height + 1,
                width: req.width,
                probs: vec![0.5; (h + 1) * w],
            },
            Mode::ExitEarly => unreachable!(),
        };
        if write_message(&mut output, &resp.encode()).is_err() {
            return ExitCode::SUCCESS;
        }
        served += 1;
    }
}
