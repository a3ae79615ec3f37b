//! Margin padding, OCR rendering and the external recognizer adapter.
//!
//! The adapter runs an arbitrary command whose template contains an
//! `{input}` placeholder for the rendered PNG path, and reads the
//! recognized text from its standard output.

use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::fsutil::write_atomic;
use crate::raster::{encode_gray_png, BinaryMask};

/// 300 dots per inch in pixels per metre, rounded.
pub const OCR_PIXELS_PER_METRE: u32 = 11_811;

pub const INPUT_PLACEHOLDER: &str = "{input}";

#[derive(Debug, Error)]
pub enum RecognizeError {
    #[error("adapter command is empty")]
    EmptyCommand,

    #[error("adapter command has unbalanced quoting: {0}")]
    BadCommand(String),

    #[error("adapter timeout must be positive")]
    BadTimeout,

    #[error("storage error at {path}: {source}")]
    Storage {
        path: String,
        #[source]
        source: io::Error,
    },
}

/// A binary mask surrounded by background margins of half its size per side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddedImage {
    base: BinaryMask,
    pad_rows: usize,
    pad_cols: usize,
}

impl PaddedImage {
    pub fn base(&self) -> &BinaryMask {
        &self.base
    }

    /// Background rows added above and below.
    pub fn pad_rows(&self) -> usize {
        self.pad_rows
    }

    /// Background columns added left and right.
    pub fn pad_cols(&self) -> usize {
        self.pad_cols
    }

    pub fn width(&self) -> usize {
        self.base.width() + 2 * self.pad_cols
    }

    pub fn height(&self) -> usize {
        self.base.height() + 2 * self.pad_rows
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        let (bx, by) = (x.wrapping_sub(self.pad_cols), y.wrapping_sub(self.pad_rows));
        bx < self.base.width() && by < self.base.height() && self.base.get(bx, by)
    }

    pub fn to_mask(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width(), self.height(), |x, y| self.get(x, y))
    }

    /// Black text on white: foreground 0, background 255.
    pub fn render_png_bytes(&self) -> Vec<u8> {
        let (w, h) = (self.width(), self.height());
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(if self.get(x, y) { 0 } else { 255 });
            }
        }
        let mut out = Vec::new();
        {
            let mut encoder = png::Encoder::new(&mut out, w as u32, h as u32);
            encoder.set_color(png::ColorType::Grayscale);
            encoder.set_depth(png::BitDepth::Eight);
            encoder.set_pixel_dims(Some(png::PixelDimensions {
                xppu: OCR_PIXELS_PER_METRE,
                yppu: OCR_PIXELS_PER_METRE,
                unit: png::Unit::Meter,
            }));
            let mut writer = encoder.write_header().expect("in-memory PNG header");
            writer.write_image_data(&data).expect("in-memory PNG data");
        }
        out
    }
}

pub fn pad(mask: &BinaryMask) -> PaddedImage {
    PaddedImage {
        base: mask.clone(),
        pad_rows: mask.height().div_ceil(2),
        pad_cols: mask.width().div_ceil(2),
    }
}

pub fn render_for_ocr(padded: &PaddedImage, path: impl AsRef<Path>) -> Result<(), RecognizeError> {
    let path = path.as_ref();
    write_atomic(path, &padded.render_png_bytes()).map_err(|source| RecognizeError::Storage {
        path: path.display().to_string(),
        source,
    })
}

/// Unpadded binary mask rendered black-on-white, for the no-preprocessing
/// baseline.
pub fn render_mask_png_bytes(mask: &BinaryMask) -> Vec<u8> {
    let data: Vec<u8> = mask.bits().iter().map(|&b| if b { 0 } else { 255 }).collect();
    encode_gray_png(mask.width(), mask.height(), &data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    /// Shell-style command template, e.g. `tesseract {input} stdout`.
    pub command: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    pub engine_tag: String,
}

fn default_timeout() -> f64 {
    30.0
}

impl AdapterConfig {
    pub fn new(command: impl Into<String>, engine_tag: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            timeout_secs: default_timeout(),
            engine_tag: engine_tag.into(),
        }
    }

    pub fn validate(&self) -> Result<(), RecognizeError> {
        self.argv(Path::new("x")).map(|_| ())?;
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(RecognizeError::BadTimeout);
        }
        Ok(())
    }

    /// Tokenized command with `{input}` replaced in every token.
    pub fn argv(&self, input: &Path) -> Result<Vec<String>, RecognizeError> {
        let tokens = shlex::split(&self.command).ok_or_else(|| RecognizeError::BadCommand(self.command.clone()))?;
        if tokens.is_empty() {
            return Err(RecognizeError::EmptyCommand);
        }
        let input = input.to_string_lossy();
        Ok(tokens.into_iter().map(|t| t.replace(INPUT_PLACEHOLDER, &input)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Ok,
    EngineError,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcrResult {
    pub image_id: String,
    /// Empty unless `exit_status` is `Ok`.
    pub text: String,
    pub engine_tag: String,
    pub exit_status: ExitStatus,
    /// Short reason for a failed run, not part of the scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl OcrResult {
    fn failed(image_id: &str, cfg: &AdapterConfig, status: ExitStatus, detail: String) -> Self {
        Self {
            image_id: image_id.to_string(),
            text: String::new(),
            engine_tag: cfg.engine_tag.clone(),
            exit_status: status,
            detail: Some(detail),
        }
    }
}

/// Strip trailing `\n` / `\r\n` only; other whitespace is kept.
fn trim_trailing_newlines(s: &str) -> &str {
    s.trim_end_matches(['\n', '\r'])
}

/// Run the adapter on one rendered image. Never fails: every problem is
/// reported through `exit_status`.
pub fn recognize(input: &Path, image_id: &str, cfg: &AdapterConfig) -> OcrResult {
    let argv = match cfg.argv(input) {
        Ok(a) => a,
        Err(e) => return OcrResult::failed(image_id, cfg, ExitStatus::EngineError, e.to_string()),
    };
    let mut child = match Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
    {
        Ok(c) => c,
        Err(e) => {
            return OcrResult::failed(image_id, cfg, ExitStatus::EngineError, format!("spawn {}: {e}", argv[0]))
        }
    };

    // Drain stdout on a thread so a chatty engine cannot fill the pipe and stall.
    let mut stdout = child.stdout.take().expect("stdout piped");
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut buf = Vec::new();
        let res = stdout.read_to_end(&mut buf).map(|_| buf);
        let _ = tx.send(res);
    });

    let timeout = Duration::from_secs_f64(cfg.timeout_secs.max(0.0));
    let status = match child.wait_timeout(timeout) {
        Ok(Some(status)) => status,
        Ok(None) => {
            let _ = child.kill();
            let _ = child.wait();
            return OcrResult::failed(image_id, cfg, ExitStatus::Timeout, format!("no result after {}s", cfg.timeout_secs));
        }
        Err(e) => {
            let _ = child.kill();
            let _ = child.wait();
            return OcrResult::failed(image_id, cfg, ExitStatus::EngineError, e.to_string());
        }
    };
    if !status.success() {
        return OcrResult::failed(image_id, cfg, ExitStatus::EngineError, format!("engine exited with {status}"));
    }
    // A grandchild may still hold the pipe open; give it the same budget.
    let bytes = match rx.recv_timeout(timeout) {
        Ok(Ok(b)) => b,
        Ok(Err(e)) => return OcrResult::failed(image_id, cfg, ExitStatus::EngineError, e.to_string()),
        Err(_) => {
            return OcrResult::failed(image_id, cfg, ExitStatus::Timeout, "stdout still open after exit".into())
        }
    };
    let text = String::from_utf8_lossy(&bytes);
    OcrResult {
        image_id: image_id.to_string(),
        text: trim_trailing_newlines(&text).to_string(),
        engine_tag: cfg.engine_tag.clone(),
        exit_status: ExitStatus::Ok,
        detail: None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OcrJob {
    pub image_id: String,
    pub input: PathBuf,
}

/// Recognize every job with at most `parallelism` engine processes at once.
/// Results come back in job order.
pub fn recognize_all(jobs: &[OcrJob], cfg: &AdapterConfig, parallelism: usize) -> Vec<OcrResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        jobs.par_iter()
            .map(|job| recognize(&job.input, &job.image_id, cfg))
            .collect()
    })
}
