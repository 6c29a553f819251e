//! Out-of-process denoisers over a framed stdio protocol.
//!
//! The external program reads request frames on its standard input and
//! answers each with exactly one frame on its standard output. All integers
//! and floats are little-endian.
//!
//! ```text
//! request   "PNPD" | u32 type = 1 | f64 sigma | u32 height | u32 width | f32 pixels[height*width]
//! response  "PNPD" | u32 type = 2 | u32 height | u32 width | f32 pixels[height*width]
//! error     "PNPD" | u32 type = 3 | u32 length | UTF-8 message[length]
//! ```
//!
//! Pixels are row-major. Transport is single precision: values in [-2, 2]
//! come back within 1e-6 of what an in-process `f64` denoiser produces.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::process::{Child, ChildStdin, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::error::Result;
use crate::image::Image;
use crate::prior::Denoiser;

pub const MAGIC: &[u8; 4] = b"PNPD";
pub const FRAME_REQUEST: u32 = 1;
pub const FRAME_RESPONSE: u32 = 2;
pub const FRAME_ERROR: u32 = 3;

const MAX_FRAME_PIXELS: u64 = 1 << 28;
const MAX_MESSAGE_LEN: u32 = 1 << 20;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("failed to start denoiser process `{command}`: {source}")]
    Spawn { command: String, source: io::Error },
    #[error("denoiser did not answer within {0:?}")]
    Timeout(Duration),
    #[error("denoiser process exited ({})", describe_status(.0))]
    ProcessExit(Option<ExitStatus>),
    #[error("malformed frame at byte {offset}: {reason}")]
    MalformedFrame { offset: u64, reason: String },
    #[error("denoiser reported an error: {0}")]
    Remote(String),
    #[error("response is {actual:?}, request was {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("invalid bridge config: {0}")]
    Config(String),
    #[error("bridge i/o: {0}")]
    Io(#[from] io::Error),
}

fn describe_status(status: &Option<ExitStatus>) -> String {
    match status {
        Some(s) => s.to_string(),
        None => "status unknown".into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Request { sigma: f64, image: Image },
    Response { image: Image },
    Error { message: String },
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    match frame {
        Frame::Request { sigma, image } => {
            out.extend_from_slice(&FRAME_REQUEST.to_le_bytes());
            out.extend_from_slice(&sigma.to_le_bytes());
            push_pixels(&mut out, image);
        }
        Frame::Response { image } => {
            out.extend_from_slice(&FRAME_RESPONSE.to_le_bytes());
            push_pixels(&mut out, image);
        }
        Frame::Error { message } => {
            out.extend_from_slice(&FRAME_ERROR.to_le_bytes());
            out.extend_from_slice(&(message.len() as u32).to_le_bytes());
            out.extend_from_slice(message.as_bytes());
        }
    }
    out
}

fn push_pixels(out: &mut Vec<u8>, image: &Image) {
    out.extend_from_slice(&(image.height() as u32).to_le_bytes());
    out.extend_from_slice(&(image.width() as u32).to_le_bytes());
    for &v in image.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

/// Failure to read one frame off a stream.
#[derive(Debug, Error)]
pub enum FrameError {
    /// Stream ended; `offset` is 0 when it ended cleanly between frames.
    #[error("end of stream at byte {offset}")]
    Eof { offset: u64 },
    #[error("malformed frame at byte {offset}: {reason}")]
    Malformed { offset: u64, reason: String },
    #[error(transparent)]
    Io(io::Error),
}

impl From<FrameError> for BridgeError {
    fn from(e: FrameError) -> Self {
        match e {
            FrameError::Eof { .. } => BridgeError::ProcessExit(None),
            FrameError::Malformed { offset, reason } => BridgeError::MalformedFrame { offset, reason },
            FrameError::Io(e) => BridgeError::Io(e),
        }
    }
}

struct FrameReader<'a, R> {
    inner: &'a mut R,
    offset: u64,
}

impl<R: Read> FrameReader<'_, R> {
    fn bytes<const N: usize>(&mut self) -> std::result::Result<[u8; N], FrameError> {
        let mut buf = [0u8; N];
        let mut filled = 0;
        while filled < N {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => {
                    return Err(FrameError::Eof {
                        offset: self.offset + filled as u64,
                    })
                }
                Ok(k) => filled += k,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(FrameError::Io(e)),
            }
        }
        self.offset += N as u64;
        Ok(buf)
    }

    fn u32(&mut self) -> std::result::Result<u32, FrameError> {
        self.bytes::<4>().map(u32::from_le_bytes)
    }

    fn malformed(&self, at: u64, reason: impl Into<String>) -> FrameError {
        FrameError::Malformed {
            offset: at,
            reason: reason.into(),
        }
    }

    fn image(&mut self) -> std::result::Result<Image, FrameError> {
        let dims_at = self.offset;
        let height = self.u32()?;
        let width = self.u32()?;
        let pixels = height as u64 * width as u64;
        if pixels == 0 || pixels > MAX_FRAME_PIXELS {
            return Err(self.malformed(dims_at, format!("bad dimensions {height}x{width}")));
        }
        let mut data = Vec::with_capacity(pixels as usize);
        for _ in 0..pixels {
            data.push(f32::from_le_bytes(self.bytes::<4>()?) as f64);
        }
        Image::new(height as usize, width as usize, data).map_err(|e| self.malformed(dims_at, e.to_string()))
    }
}

pub fn read_frame<R: Read>(reader: &mut R) -> std::result::Result<Frame, FrameError> {
    let mut r = FrameReader {
        inner: reader,
        offset: 0,
    };
    let magic = r.bytes::<4>()?;
    if &magic != MAGIC {
        return Err(r.malformed(0, format!("bad magic {magic:?}")));
    }
    match r.u32()? {
        FRAME_REQUEST => {
            let sigma = f64::from_le_bytes(r.bytes::<8>()?);
            let image = r.image()?;
            Ok(Frame::Request { sigma, image })
        }
        FRAME_RESPONSE => Ok(Frame::Response { image: r.image()? }),
        FRAME_ERROR => {
            let len = r.u32()?;
            if len > MAX_MESSAGE_LEN {
                return Err(r.malformed(8, format!("error message length {len} too large")));
            }
            let mut msg = vec![0u8; len as usize];
            for b in msg.iter_mut() {
                *b = r.bytes::<1>()?[0];
            }
            String::from_utf8(msg)
                .map(|message| Frame::Error { message })
                .map_err(|_| r.malformed(12, "error message is not UTF-8"))
        }
        other => Err(r.malformed(4, format!("unknown frame type {other}"))),
    }
}

pub fn write_frame<W: Write>(writer: &mut W, frame: &Frame) -> io::Result<()> {
    writer.write_all(&encode_frame(frame))?;
    writer.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeConfig {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    pub timeout: Duration,
    pub restart_on_crash: bool,
}

impl BridgeConfig {
    pub fn new(command: Vec<String>, timeout: Duration) -> Self {
        Self {
            command,
            timeout,
            restart_on_crash: false,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), BridgeError> {
        if self.command.is_empty() || self.command[0].is_empty() {
            return Err(BridgeError::Config("empty command".into()));
        }
        if self.timeout.is_zero() {
            return Err(BridgeError::Config("timeout must be positive".into()));
        }
        Ok(())
    }
}

struct Worker {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    frames: Receiver<std::result::Result<Frame, FrameError>>,
}

impl Worker {
    fn spawn(cfg: &BridgeConfig) -> std::result::Result<Self, BridgeError> {
        let mut child = Command::new(&cfg.command[0])
            .args(&cfg.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| BridgeError::Spawn {
                command: cfg.command.join(" "),
                source,
            })?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let (tx, frames) = mpsc::channel();
        thread::spawn(move || loop {
            let frame = read_frame(&mut stdout);
            let stop = frame.is_err();
            if tx.send(frame).is_err() || stop {
                break;
            }
        });
        Ok(Self { child, stdin, frames })
    }

    fn exit_status(&mut self, grace: Duration) -> Option<ExitStatus> {
        let step = Duration::from_millis(5);
        let mut waited = Duration::ZERO;
        loop {
            match self.child.try_wait() {
                Ok(Some(s)) => return Some(s),
                Ok(None) if waited < grace => {
                    thread::sleep(step);
                    waited += step;
                }
                _ => return None,
            }
        }
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

struct BridgeState {
    worker: Option<Worker>,
    crashed: bool,
}

/// A [`Denoiser`] served by an external process. One request is in flight
/// at a time; spawn one bridge per chain to parallelize.
pub struct BridgeDenoiser {
    cfg: BridgeConfig,
    state: Mutex<BridgeState>,
}

impl BridgeDenoiser {
    /// Starts the external process.
    pub fn new(cfg: BridgeConfig) -> std::result::Result<Self, BridgeError> {
        cfg.validate()?;
        let worker = Worker::spawn(&cfg)?;
        Ok(Self {
            cfg,
            state: Mutex::new(BridgeState {
                worker: Some(worker),
                crashed: false,
            }),
        })
    }

    pub fn config(&self) -> &BridgeConfig {
        &self.cfg
    }

    pub fn request(&self, x: &Image, sigma: f64) -> std::result::Result<Image, BridgeError> {
        let mut state = self.state.lock().unwrap_or_else(|p| p.into_inner());
        if state.worker.is_none() {
            if state.crashed && !self.cfg.restart_on_crash {
                return Err(BridgeError::ProcessExit(None));
            }
            state.worker = Some(Worker::spawn(&self.cfg)?);
            state.crashed = false;
        }
        let worker = state.worker.as_mut().unwrap();
        let result = exchange(worker, x, sigma, self.cfg.timeout);
        if let Err(e) = &result {
            // anything but a well-formed remote error leaves the stream in
            // an unknown position: drop the process
            if !matches!(e, BridgeError::Remote(_) | BridgeError::DimensionMismatch { .. }) {
                let mut w = state.worker.take().unwrap();
                w.kill();
                state.crashed = true;
            }
        }
        result
    }
}

fn exchange(worker: &mut Worker, x: &Image, sigma: f64, timeout: Duration) -> std::result::Result<Image, BridgeError> {
    let request = Frame::Request {
        sigma,
        image: x.clone(),
    };
    if let Err(e) = write_frame(&mut worker.stdin, &request) {
        return match e.kind() {
            io::ErrorKind::BrokenPipe => Err(BridgeError::ProcessExit(worker.exit_status(timeout))),
            _ => Err(BridgeError::Io(e)),
        };
    }
    match worker.frames.recv_timeout(timeout) {
        Ok(Ok(Frame::Response { image })) => {
            if image.dims() != x.dims() {
                return Err(BridgeError::DimensionMismatch {
                    expected: x.dims(),
                    actual: image.dims(),
                });
            }
            Ok(image)
        }
        Ok(Ok(Frame::Error { message })) => Err(BridgeError::Remote(message)),
        Ok(Ok(Frame::Request { .. })) => Err(BridgeError::MalformedFrame {
            offset: 4,
            reason: "received a request frame from the denoiser".into(),
        }),
        Ok(Err(FrameError::Eof { .. })) | Err(RecvTimeoutError::Disconnected) => {
            Err(BridgeError::ProcessExit(worker.exit_status(timeout)))
        }
        Ok(Err(e)) => Err(e.into()),
        Err(RecvTimeoutError::Timeout) => Err(BridgeError::Timeout(timeout)),
    }
}

impl Denoiser for BridgeDenoiser {
    fn denoise(&self, x: &Image, sigma: f64) -> Result<Image> {
        Ok(self.request(x, sigma)?)
    }

    fn is_concurrent(&self) -> bool {
        false
    }
}

impl Drop for BridgeDenoiser {
    fn drop(&mut self) {
        let state = self.state.get_mut().unwrap_or_else(|p| p.into_inner());
        if let Some(mut w) = state.worker.take() {
            w.kill();
        }
    }
}
