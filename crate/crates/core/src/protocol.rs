//! Line-delimited JSON detector protocol.
//!
//! Request, one per line:
//! `{"id": 1, "width": W, "height": H, "pixels": "<base64 of row-major 8-bit RGB>"}`
//!
//! Response, one per line, in request order:
//! `{"id": 1, "detections": [{"box": [x1, y1, x2, y2], "objectness": o, "scores": [...]}]}`
//! or `{"id": 1, "error": "..."}`.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::detection::{DetectionVector, ProposalSet};
use crate::detector::{Detector, DEFAULT_SCORE_FLOOR};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    pub pixels: String,
}

impl DetectRequest {
    pub fn from_image(id: u64, img: &ImageBuffer) -> Self {
        Self {
            id,
            width: img.width() as u32,
            height: img.height() as u32,
            pixels: BASE64.encode(img.to_rgb8()),
        }
    }

    pub fn to_image(&self) -> Result<ImageBuffer> {
        let bytes = BASE64
            .decode(&self.pixels)
            .map_err(|e| Error::Protocol(format!("request {}: bad base64: {e}", self.id)))?;
        ImageBuffer::from_rgb8(self.width as usize, self.height as usize, &bytes)
            .map_err(|e| Error::Protocol(format!("request {}: {e}", self.id)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub id: u64,
    #[serde(default)]
    pub detections: Vec<DetectionVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Client half of the protocol over any line-oriented byte stream.
pub struct JsonLinesClient<R, W> {
    reader: R,
    writer: W,
    next_id: u64,
    score_floor: f64,
    line: String,
}

impl<R: BufRead, W: Write + Send> JsonLinesClient<R, W> {
    pub fn new(reader: R, writer: W, score_floor: f64) -> Self {
        Self { reader, writer, next_id: 1, score_floor, line: String::new() }
    }

    /// Streams every request from a writer thread while reading the responses
    /// back in order, so neither side can stall on a full pipe.
    pub fn detect_many(&mut self, imgs: &[ImageBuffer]) -> Result<Vec<ProposalSet>> {
        let first = self.next_id;
        self.next_id += imgs.len() as u64;
        let writer = &mut self.writer;
        let (reader, line, floor) = (&mut self.reader, &mut self.line, self.score_floor);
        std::thread::scope(|scope| {
            let sender = scope.spawn(move || -> Result<()> {
                for (id, img) in (first..).zip(imgs) {
                    serde_json::to_writer(&mut *writer, &DetectRequest::from_image(id, img))?;
                    writer.write_all(b"\n")?;
                }
                writer.flush()?;
                Ok(())
            });
            let received = read_responses(reader, line, first, imgs.len(), floor);
            let sent = sender.join().unwrap_or_else(|_| Err(Error::Backend("writer panicked".into())));
            match (received, sent) {
                (Ok(out), Ok(())) => Ok(out),
                (Err(e), _) | (Ok(_), Err(e)) => Err(e),
            }
        })
    }
}

fn read_responses<R: BufRead>(
    reader: &mut R,
    line: &mut String,
    first: u64,
    count: usize,
    score_floor: f64,
) -> Result<Vec<ProposalSet>> {
    let mut out = Vec::with_capacity(count);
    for (index, expected) in (first..first + count as u64).enumerate() {
        let wrap = |e: Error| Error::BatchItem { index, source: Box::new(e) };
        line.clear();
        if reader.read_line(line)? == 0 {
            return Err(wrap(Error::Backend("detector closed its output stream".into())));
        }
        let resp: DetectResponse = serde_json::from_str(line.trim_end())
            .map_err(|e| wrap(Error::Protocol(format!("unparseable response: {e}"))))?;
        if resp.id != expected {
            return Err(wrap(Error::Protocol(format!(
                "response id {} does not match request id {expected}",
                resp.id
            ))));
        }
        if let Some(msg) = resp.error {
            return Err(wrap(Error::Backend(msg)));
        }
        let mut props = Vec::with_capacity(resp.detections.len());
        for d in resp.detections {
            d.validate().map_err(|e| wrap(Error::Protocol(e.to_string())))?;
            if d.confidence() >= score_floor {
                props.push(d);
            }
        }
        out.push(props);
    }
    Ok(out)
}

fn learn_classes(known: &AtomicUsize, sets: &[ProposalSet]) {
    if let Some(d) = sets.iter().flatten().next() {
        let _ = known.compare_exchange(0, d.num_classes(), Ordering::Relaxed, Ordering::Relaxed);
    }
}

fn known_classes(known: &AtomicUsize) -> Option<usize> {
    match known.load(Ordering::Relaxed) {
        0 => None,
        c => Some(c),
    }
}

type ChildClient = JsonLinesClient<BufReader<ChildStdout>, BufWriter<ChildStdin>>;

/// A detector running as a child process speaking the protocol on stdio.
pub struct SubprocessDetector {
    command: String,
    child: Mutex<Child>,
    io: Mutex<Option<ChildClient>>,
    classes: AtomicUsize,
}

impl SubprocessDetector {
    /// Spawns `command` through `sh -c`.
    pub fn spawn(command: &str, score_floor: f64) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Backend(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let client = JsonLinesClient::new(BufReader::new(stdout), BufWriter::new(stdin), score_floor);
        Ok(Self {
            command: command.to_owned(),
            child: Mutex::new(child),
            io: Mutex::new(Some(client)),
            classes: AtomicUsize::new(0),
        })
    }

    pub fn spawn_default(command: &str) -> Result<Self> {
        Self::spawn(command, DEFAULT_SCORE_FLOOR)
    }
}

impl Detector for SubprocessDetector {
    fn num_classes(&self) -> Option<usize> {
        known_classes(&self.classes)
    }

    fn detect(&self, img: &ImageBuffer) -> Result<ProposalSet> {
        let mut out = self.detect_batch(std::slice::from_ref(img)).map_err(unwrap_single)?;
        Ok(out.pop().unwrap_or_default())
    }

    fn detect_batch(&self, imgs: &[ImageBuffer]) -> Result<Vec<ProposalSet>> {
        if imgs.is_empty() {
            return Err(Error::invalid("detect_batch needs at least one image"));
        }
        let mut guard = self.io.lock().map_err(|_| Error::Backend("detector lock poisoned".into()))?;
        let client = guard.as_mut().ok_or_else(|| Error::Backend("detector shut down".into()))?;
        let sets = client.detect_many(imgs)?;
        learn_classes(&self.classes, &sets);
        Ok(sets)
    }

    fn describe(&self) -> String {
        format!("subprocess:{}", self.command)
    }
}

impl Drop for SubprocessDetector {
    fn drop(&mut self) {
        // Dropping the client closes stdin; a well-behaved server exits on EOF.
        if let Ok(mut io) = self.io.lock() {
            io.take();
        }
        if let Ok(mut child) = self.child.lock() {
            for _ in 0..50 {
                if child.try_wait().ok().flatten().is_some() {
                    return;
                }
                std::thread::sleep(std::time::Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn unwrap_single(e: Error) -> Error {
    match e {
        Error::BatchItem { source, .. } => *source,
        e => e,
    }
}

/// The protocol over a TCP connection.
pub struct TcpDetector {
    addr: String,
    io: Mutex<JsonLinesClient<BufReader<TcpStream>, BufWriter<TcpStream>>>,
    classes: AtomicUsize,
}

impl TcpDetector {
    pub fn connect(addr: &str, score_floor: f64) -> Result<Self> {
        let stream = TcpStream::connect(addr)
            .map_err(|e| Error::Backend(format!("cannot connect to {addr}: {e}")))?;
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        let client = JsonLinesClient::new(reader, BufWriter::new(stream), score_floor);
        Ok(Self { addr: addr.to_owned(), io: Mutex::new(client), classes: AtomicUsize::new(0) })
    }
}

impl Detector for TcpDetector {
    fn num_classes(&self) -> Option<usize> {
        known_classes(&self.classes)
    }

    fn detect(&self, img: &ImageBuffer) -> Result<ProposalSet> {
        let mut out = self.detect_batch(std::slice::from_ref(img)).map_err(unwrap_single)?;
        Ok(out.pop().unwrap_or_default())
    }

    fn detect_batch(&self, imgs: &[ImageBuffer]) -> Result<Vec<ProposalSet>> {
        if imgs.is_empty() {
            return Err(Error::invalid("detect_batch needs at least one image"));
        }
        let mut guard = self.io.lock().map_err(|_| Error::Backend("detector lock poisoned".into()))?;
        let sets = guard.detect_many(imgs)?;
        learn_classes(&self.classes, &sets);
        Ok(sets)
    }

    fn describe(&self) -> String {
        format!("tcp:{}", self.addr)
    }
}

/// Server half: answers requests from `reader` with `det` until EOF.
/// Malformed requests get an error response carrying the offending id
/// (0 when no id could be read).
pub fn serve<R: BufRead, W: Write>(reader: R, mut writer: W, det: &dyn Detector) -> Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<DetectRequest>(&line) {
            Ok(req) => match req.to_image().and_then(|img| det.detect(&img)) {
                Ok(detections) => DetectResponse { id: req.id, detections, error: None },
                Err(e) => DetectResponse { id: req.id, detections: vec![], error: Some(e.to_string()) },
            },
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|i| i.as_u64()))
                    .unwrap_or(0);
                DetectResponse { id, detections: vec![], error: Some(format!("malformed request: {e}")) }
            }
        };
        serde_json::to_writer(&mut writer, &resp)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}
