//! Line-delimited JSON protocol spoken with external model adapters over a
//! child process's stdin/stdout.
//!
//! Request:  `{"id": 7, "kind": "segment", "label": "road", "width": W, "height": H, "image": "<base64 PNG>"}`
//!           `{"id": 8, "kind": "expand", "target": "car"}`
//! Response: `{"id": 7, "mask": "<base64 of W*H bytes, each 0 or 1>"}`
//!           `{"id": 8, "labels": ["parking lot", "road"]}`
//!           `{"id": 9, "error": "..."}` (`id` is null when the request was unreadable)

use std::io::{self, BufRead, BufReader, BufWriter, Cursor, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::labels::{LabelBackend, StaticLabelMap};
use super::segment::{SegmentRequest, Segmenter};
use crate::error::{Error, Result};

pub const BACKEND_CMD_ENV: &str = "LMPATH_BACKEND_CMD";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Request {
    Segment { id: u64, label: String, width: u32, height: u32, image: String },
    Expand { id: u64, target: String },
}

impl Request {
    pub fn id(&self) -> u64 {
        match self {
            Request::Segment { id, .. } | Request::Expand { id, .. } => *id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Response {
    pub id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn encode_png(img: &RgbImage) -> Result<String> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(B64.encode(buf.into_inner()))
}

/// Decodes and validates a mask payload.
pub fn decode_mask(b64: &str, width: u32, height: u32) -> Result<Vec<u8>> {
    let bytes = B64.decode(b64).map_err(|e| Error::Protocol(format!("mask is not base64: {e}")))?;
    let expected = width as usize * height as usize;
    if bytes.len() != expected {
        return Err(Error::MaskShape { expected, actual: bytes.len() });
    }
    if bytes.iter().any(|&b| b > 1) {
        return Err(Error::Protocol("mask values must be 0 or 1".into()));
    }
    Ok(bytes)
}

/// One adapter process; strictly one request in flight.
pub struct ProcessBackend {
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    stdout: BufReader<ChildStdout>,
    next_id: u64,
}

impl ProcessBackend {
    /// Runs `command` through `sh -c`.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Backend(format!("cannot start '{command}': {e}")))?;
        let stdin = child.stdin.take().map(BufWriter::new);
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ProcessBackend { child, stdin, stdout, next_id: 1 })
    }

    fn next_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn call(&mut self, req: &Request) -> Result<Response> {
        let stdin = self.stdin.as_mut().ok_or_else(|| Error::Backend("backend closed".into()))?;
        let line = serde_json::to_string(req)?;
        writeln!(stdin, "{line}")
            .and_then(|_| stdin.flush())
            .map_err(|e| Error::Backend(format!("write to backend: {e}")))?;
        let mut buf = String::new();
        let n = self
            .stdout
            .read_line(&mut buf)
            .map_err(|e| Error::Backend(format!("read from backend: {e}")))?;
        if n == 0 {
            return Err(Error::Backend("backend closed its output".into()));
        }
        let resp: Response = serde_json::from_str(buf.trim_end())
            .map_err(|e| Error::Protocol(format!("unreadable response: {e}")))?;
        if resp.id != Some(req.id()) {
            return Err(Error::Protocol(format!(
                "response id {:?} does not echo request id {}",
                resp.id,
                req.id()
            )));
        }
        if let Some(err) = resp.error {
            return Err(Error::Backend(err));
        }
        Ok(resp)
    }
}

impl Drop for ProcessBackend {
    fn drop(&mut self) {
        // Closing stdin is the shutdown signal.
        self.stdin.take();
        let _ = self.child.wait();
    }
}

impl Segmenter for ProcessBackend {
    fn segment(&mut self, req: &SegmentRequest<'_>) -> Result<Vec<u8>> {
        let (w, h) = (req.rect.w as u32, req.rect.h as u32);
        let wire = Request::Segment {
            id: self.next_id(),
            label: req.label.to_string(),
            width: w,
            height: h,
            image: encode_png(&req.crop())?,
        };
        let resp = self.call(&wire)?;
        let mask = resp.mask.ok_or_else(|| Error::Protocol("segment response without mask".into()))?;
        decode_mask(&mask, w, h)
    }
}

impl LabelBackend for ProcessBackend {
    fn expand(&mut self, target: &str) -> Result<Vec<String>> {
        let wire = Request::Expand { id: self.next_id(), target: target.to_string() };
        let resp = self.call(&wire)?;
        resp.labels.ok_or_else(|| Error::Protocol("expand response without labels".into()))
    }
}

fn stub_response(line: &str, map: &StaticLabelMap) -> Response {
    let value: serde_json::Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return Response { error: Some(format!("malformed request: {e}")), ..Default::default() },
    };
    let id = value.get("id").and_then(|v| v.as_u64());
    match serde_json::from_value::<Request>(value) {
        Ok(Request::Segment { id, width, height, .. }) => Response {
            id: Some(id),
            mask: Some(B64.encode(vec![0u8; width as usize * height as usize])),
            ..Default::default()
        },
        Ok(Request::Expand { id, target }) => match map.get(&target) {
            Some(labels) => Response { id: Some(id), labels: Some(labels.to_vec()), ..Default::default() },
            None => Response {
                id: Some(id),
                error: Some(format!("no labels for '{target}'")),
                ..Default::default()
            },
        },
        Err(e) => Response { id, error: Some(format!("bad request: {e}")), ..Default::default() },
    }
}

/// Stub adapter: all-zero masks, label expansion from `map`. Serves until EOF.
pub fn serve_stub(input: impl BufRead, mut output: impl Write, map: &StaticLabelMap) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = stub_response(&line, map);
        writeln!(output, "{}", serde_json::to_string(&resp).expect("response serializes"))?;
        output.flush()?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConformanceReport {
    pub requests: usize,
    pub segment_requests: usize,
    pub expand_requests: usize,
    pub error_responses: usize,
}

fn random_request(rng: &mut ChaCha8Rng, id: u64) -> Result<Request> {
    const TARGETS: [&str; 4] = ["car", "building", "person", "unmapped-target"];
    if rng.gen_bool(0.7) {
        let (w, h) = (rng.gen_range(1..=48u32), rng.gen_range(1..=48u32));
        let mut img = RgbImage::new(w, h);
        for p in img.pixels_mut() {
            *p = image::Rgb([rng.gen(), rng.gen(), rng.gen()]);
        }
        Ok(Request::Segment {
            id,
            label: ["road", "parking lot", "building"][rng.gen_range(0..3)].to_string(),
            width: w,
            height: h,
            image: encode_png(&img)?,
        })
    } else {
        Ok(Request::Expand { id, target: TARGETS[rng.gen_range(0..TARGETS.len())].to_string() })
    }
}

/// Drives an adapter through `count` randomized requests written back to
/// back, then one malformed line, and checks framing, ordering and mask
/// shapes of every response.
pub fn run_conformance(command: &str, count: usize, seed: u64) -> Result<ConformanceReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let requests: Vec<Request> =
        (0..count).map(|i| random_request(&mut rng, 1000 + i as u64)).collect::<Result<_>>()?;
    let mut proc = ProcessBackend::spawn(command)?;
    let mut stdin = proc.stdin.take().expect("fresh backend has stdin");
    let lines: Vec<String> = requests
        .iter()
        .map(|r| serde_json::to_string(r).expect("request serializes"))
        .chain(std::iter::once("{this is not json".to_string()))
        .collect();
    let writer = std::thread::spawn(move || -> io::Result<()> {
        for l in &lines {
            writeln!(stdin, "{l}")?;
        }
        stdin.flush()
        // Dropping stdin here signals EOF.
    });

    let mut report = ConformanceReport {
        requests: count,
        segment_requests: 0,
        expand_requests: 0,
        error_responses: 0,
    };
    let mut read = |what: &str| -> Result<Response> {
        let mut buf = String::new();
        let n = proc.stdout.read_line(&mut buf).map_err(|e| Error::Backend(e.to_string()))?;
        if n == 0 {
            return Err(Error::Protocol(format!("stream ended before response to {what}")));
        }
        serde_json::from_str(buf.trim_end())
            .map_err(|e| Error::Protocol(format!("response to {what} is not one JSON line: {e}")))
    };
    for req in &requests {
        let resp = read(&format!("request {}", req.id()))?;
        if resp.id != Some(req.id()) {
            return Err(Error::Protocol(format!(
                "out of order: expected id {}, got {:?}",
                req.id(),
                resp.id
            )));
        }
        if resp.error.is_some() {
            report.error_responses += 1;
        }
        match req {
            Request::Segment { width, height, .. } => {
                report.segment_requests += 1;
                let mask = resp
                    .mask
                    .as_deref()
                    .ok_or_else(|| Error::Protocol(format!("request {} got no mask", req.id())))?;
                decode_mask(mask, *width, *height)?;
            }
            Request::Expand { .. } => {
                report.expand_requests += 1;
                match (&resp.labels, &resp.error) {
                    (Some(l), None) if !l.is_empty() => {}
                    (None, Some(_)) => {}
                    _ => {
                        return Err(Error::Protocol(format!(
                            "request {} needs non-empty labels or an error",
                            req.id()
                        )))
                    }
                }
            }
        }
    }
    let bad = read("malformed line")?;
    if bad.id.is_some() || bad.error.is_none() {
        return Err(Error::Protocol("malformed line must yield an error with null id".into()));
    }
    report.error_responses += 1;
    writer
        .join()
        .expect("writer thread")
        .map_err(|e| Error::Backend(format!("write to backend: {e}")))?;
    let mut rest = String::new();
    if proc.stdout.read_line(&mut rest).map_err(|e| Error::Backend(e.to_string()))? != 0 {
        return Err(Error::Protocol("extra output after the last response".into()));
    }
    let status = proc.child.wait().map_err(|e| Error::Backend(e.to_string()))?;
    if !status.success() {
        return Err(Error::Backend(format!("adapter exited with {status} on EOF")));
    }
    Ok(report)
}
