//! Protocol server over a synthetic detector, for exercising the external
//! transports end to end.

use std::io::{BufReader, BufWriter};
use std::net::TcpListener;

use dclose::protocol::serve;

use crate::detectors::{open_detector, parse_descriptor, Descriptor};
use crate::error::{CliError, CliResult};

pub fn run(detector: &str, listen: Option<&str>, once: bool) -> CliResult<()> {
    if !matches!(parse_descriptor(detector)?, Descriptor::Blob(Some(_))) {
        return Err(CliError::Detector("serve needs synthetic:blob:x1,y1,x2,y2".into()));
    }
    let det = open_detector(detector, None, 1)?;
    let Some(addr) = listen else {
        let stdin = std::io::stdin().lock();
        let stdout = std::io::stdout().lock();
        return serve(stdin, BufWriter::new(stdout), det.as_ref()).map_err(CliError::from);
    };
    let listener = TcpListener::bind(addr).map_err(|e| CliError::input(format!("cannot listen on {addr}: {e}")))?;
    if let Ok(local) = listener.local_addr() {
        println!("listening on {local}");
    }
    for stream in listener.incoming() {
        let stream = stream.map_err(|e| CliError::Backend(e.to_string()))?;
        let reader = BufReader::new(stream.try_clone().map_err(|e| CliError::Backend(e.to_string()))?);
        if let Err(e) = serve(reader, BufWriter::new(stream), det.as_ref()) {
            log::warn!("connection ended: {e}");
        }
        if once {
            break;
        }
    }
    Ok(())
}
