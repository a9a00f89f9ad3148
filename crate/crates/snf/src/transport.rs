//! One-client TCP delivery of a packed stream, one message per chunk.
//!
//! Every message is a `u64` little-endian length followed by that many bytes.
//! Message 0 is the header, message `k` is chunk `k`.

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};

use snf_core::codec::{split_messages, StreamDecoder};
use snf_core::StreamableNet;

use crate::error::{Result, SnfError};

/// Accepts one client on `listener` and sends the stream, flushing after
/// every message. `limit` stops after that many chunks.
pub fn serve_on(listener: &TcpListener, stream: &[u8], limit: Option<usize>) -> Result<()> {
    let (header, messages) = split_messages(stream)?;
    let (mut sock, peer) = listener.accept().map_err(SnfError::Net)?;
    log::info!("serving {} stages to {peer}", header.num_stages());
    let count = 1 + limit.unwrap_or(usize::MAX).min(messages.len() - 1);
    for msg in &messages[..count] {
        send(&mut sock, msg).map_err(SnfError::Net)?;
    }
    Ok(())
}

pub fn serve(addr: impl ToSocketAddrs, stream: &[u8]) -> Result<()> {
    let listener = TcpListener::bind(addr).map_err(SnfError::Net)?;
    serve_on(&listener, stream, None)
}

pub fn send(sock: &mut impl Write, msg: &[u8]) -> io::Result<()> {
    sock.write_all(&(msg.len() as u64).to_le_bytes())?;
    sock.write_all(msg)?;
    sock.flush()
}

#[derive(Debug)]
pub struct FetchOutcome {
    /// Stages decoded and handed to the callback.
    pub stages: usize,
    /// The stream as received: header plus the complete chunks.
    pub bytes: Vec<u8>,
    /// Set when the connection ended before `k_max` stages arrived.
    pub truncated: Option<String>,
}

enum Frame {
    Message(Vec<u8>),
    Closed,
    Partial(String),
}

fn recv(sock: &mut impl Read) -> io::Result<Frame> {
    let mut len = [0u8; 8];
    let got = read_full(sock, &mut len)?;
    if got == 0 {
        return Ok(Frame::Closed);
    }
    if got < 8 {
        return Ok(Frame::Partial(format!("length prefix cut after {got} of 8 bytes")));
    }
    let n = u64::from_le_bytes(len) as usize;
    let mut buf = vec![0u8; n];
    let got = read_full(sock, &mut buf)?;
    if got < n {
        return Ok(Frame::Partial(format!("message cut after {got} of {n} bytes")));
    }
    Ok(Frame::Message(buf))
}

fn read_full(sock: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match sock.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) if e.kind() == io::ErrorKind::ConnectionReset => break,
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Receives up to `k_max` stages, calling `on_stage(k, net)` after each
/// chunk. A connection that ends early is not an error: the stages received
/// so far are kept and the outcome carries a truncation notice.
pub fn fetch(
    addr: impl ToSocketAddrs,
    k_max: Option<usize>,
    mut on_stage: impl FnMut(usize, &StreamableNet) -> Result<()>,
) -> Result<FetchOutcome> {
    let mut sock = TcpStream::connect(addr).map_err(SnfError::Net)?;
    let header = match recv(&mut sock).map_err(SnfError::Net)? {
        Frame::Message(m) => m,
        Frame::Closed => return Err(SnfError::Net(io::Error::new(io::ErrorKind::UnexpectedEof, "no header received"))),
        Frame::Partial(why) => return Err(SnfError::Net(io::Error::new(io::ErrorKind::UnexpectedEof, why))),
    };
    let (mut dec, _) = StreamDecoder::new(&header)?;
    let k_total = dec.header().num_stages();
    let want = k_max.unwrap_or(k_total).min(k_total);
    let mut bytes = header;
    let mut truncated = None;
    while dec.stages_decoded() < want {
        match recv(&mut sock).map_err(SnfError::Net)? {
            Frame::Message(chunk) => {
                dec.push_chunk(&chunk)?;
                bytes.extend_from_slice(&chunk);
                let net = dec.net().expect("at least one stage decoded");
                on_stage(dec.stages_decoded(), &net)?;
            }
            Frame::Closed => {
                truncated = Some(format!("connection closed after {} of {want} stages", dec.stages_decoded()));
                break;
            }
            Frame::Partial(why) => {
                truncated = Some(format!("{why}; kept {} of {want} stages", dec.stages_decoded()));
                break;
            }
        }
    }
    if let Some(t) = &truncated {
        log::warn!("{t}");
    }
    Ok(FetchOutcome { stages: dec.stages_decoded(), bytes, truncated })
}
