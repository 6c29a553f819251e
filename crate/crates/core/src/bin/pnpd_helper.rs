//! Reference denoiser process for the stdio bridge, used by tests and as a
//! template for wrapping real networks.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use clap::{Parser, ValueEnum};
use pnpdm::bridge::{read_frame, write_frame, Frame, FrameError};
use pnpdm::priors::{gaussian_denoise, GaussianPrior};
use pnpdm::Image;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    /// Return the input unchanged.
    Echo,
    /// Exact MMSE denoiser of an isotropic Gaussian prior.
    Gaussian,
    /// Answer with bytes that are not a frame.
    Garbage,
    /// Read requests but never answer.
    Hang,
    /// Exit with status 7 on the first request.
    Crash,
    /// Answer every request with an error frame.
    Error,
}

#[derive(Debug, Parser)]
#[command(name = "pnpd-helper")]
struct Args {
    #[arg(long, value_enum, default_value = "echo")]
    mode: Mode,
    #[arg(long, default_value_t = 0.5)]
    mean: f64,
    #[arg(long, default_value_t = 0.04)]
    variance: f64,
}

fn serve(args: &Args) -> io::Result<ExitCode> {
    let mut input = BufReader::new(io::stdin().lock());
    let mut output = BufWriter::new(io::stdout().lock());
    loop {
        let (sigma, image) = match read_frame(&mut input) {
            Ok(Frame::Request { sigma, image }) => (sigma, image),
            Ok(_) => {
                write_frame(
                    &mut output,
                    &Frame::Error {
                        message: "expected a request frame".into(),
                    },
                )?;
                continue;
            }
            Err(FrameError::Eof { .. }) => return Ok(ExitCode::SUCCESS),
            Err(FrameError::Malformed { offset, reason }) => {
                eprintln!("pnpd-helper: malformed frame at byte {offset}: {reason}");
                return Ok(ExitCode::from(2));
            }
            Err(FrameError::Io(e)) => return Err(e),
        };
        let reply = match args.mode {
            Mode::Echo => Frame::Response { image },
            Mode::Gaussian => match denoise(&image, sigma, args) {
                Ok(image) => Frame::Response { image },
                Err(message) => Frame::Error { message },
            },
            Mode::Error => Frame::Error {
                message: format!("refusing sigma {sigma}"),
            },
            Mode::Garbage => {
                output.write_all(b"this is not a frame at all")?;
                output.flush()?;
                continue;
            }
            Mode::Hang => {
                // keep the pipe open so the caller sees silence, not EOF
                let mut sink = Vec::new();
                let _ = input.read_to_end(&mut sink);
                loop {
                    thread::sleep(Duration::from_secs(3600));
                }
            }
            Mode::Crash => return Ok(ExitCode::from(7)),
        };
        write_frame(&mut output, &reply)?;
    }
}

fn denoise(image: &Image, sigma: f64, args: &Args) -> Result<Image, String> {
    let (h, w) = image.dims();
    let prior = GaussianPrior::isotropic(Image::filled(h, w, args.mean), args.variance).map_err(|e| e.to_string())?;
    gaussian_denoise(&prior, image, sigma).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match serve(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("pnpd-helper: {e}");
            ExitCode::from(2)
        }
    }
}
