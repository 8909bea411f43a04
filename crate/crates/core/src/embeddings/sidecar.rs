//! Client for an external encoder process.
//!
//! ```text
//! request:  "ACEM" | payload_len u32 LE | payload
//! response: "ACER" | count u32 LE | count x f32 LE
//! ```
//!
//! One request is in flight per connection at a time; the client holds a
//! single connection behind a mutex and reconnects after any failure.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::probe::Embedding;

pub const REQUEST_MAGIC: &[u8; 4] = b"ACEM";
pub const RESPONSE_MAGIC: &[u8; 4] = b"ACER";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(2);
/// Frames larger than this are refused on both sides.
pub const MAX_PAYLOAD: u32 = 16 << 20;

#[derive(Debug, Error)]
pub enum SidecarError {
    #[error("sidecar timed out after {0:?}")]
    Timeout(Duration),
    #[error("sidecar refused connection at {0}")]
    ConnectionRefused(SocketAddr),
    #[error("sidecar address `{0}` did not resolve")]
    BadAddress(String),
    #[error("sidecar i/o: {0}")]
    Io(#[from] io::Error),
    #[error("bad sidecar magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("sidecar returned {actual} values, expected {expected}")]
    Dimension { expected: usize, actual: usize },
    #[error("sidecar returned a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("sidecar response truncated: {needed} bytes needed, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("declared length {0} exceeds limit")]
    Oversized(u32),
}

pub fn encode_request(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + payload.len());
    out.extend_from_slice(REQUEST_MAGIC);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

pub fn encode_response(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * values.len());
    out.extend_from_slice(RESPONSE_MAGIC);
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes a complete response buffer and validates it against `dim`.
pub fn decode_response(buf: &[u8], dim: usize) -> Result<Embedding, SidecarError> {
    if buf.len() < 8 {
        return Err(SidecarError::Truncated {
            needed: 8,
            available: buf.len(),
        });
    }
    let magic: [u8; 4] = buf[..4].try_into().unwrap();
    if &magic != RESPONSE_MAGIC {
        return Err(SidecarError::BadMagic(magic));
    }
    let count = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    check_count(count, dim)?;
    let needed = 8 + 4 * count as usize;
    if buf.len() < needed {
        return Err(SidecarError::Truncated {
            needed,
            available: buf.len(),
        });
    }
    values_to_embedding(&buf[8..needed], dim)
}

fn check_count(count: u32, dim: usize) -> Result<(), SidecarError> {
    if count as usize != dim {
        return Err(SidecarError::Dimension {
            expected: dim,
            actual: count as usize,
        });
    }
    Ok(())
}

fn values_to_embedding(raw: &[u8], dim: usize) -> Result<Embedding, SidecarError> {
    let values: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(SidecarError::NonFinite(i));
    }
    Embedding::from_f32(&values, dim).map_err(|_| SidecarError::Dimension {
        expected: dim,
        actual: values.len(),
    })
}

/// Server side: reads one request, returns its payload. `Ok(None)` on a
/// clean end of stream.
pub fn read_request<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, SidecarError> {
    let mut header = [0u8; 8];
    match r.read_exact(&mut header) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let magic: [u8; 4] = header[..4].try_into().unwrap();
    if &magic != REQUEST_MAGIC {
        return Err(SidecarError::BadMagic(magic));
    }
    let len = u32::from_le_bytes(header[4..].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(SidecarError::Oversized(len));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok(Some(payload))
}

#[derive(Debug)]
pub struct SidecarClient {
    addr: String,
    dim: usize,
    timeout: Duration,
    conn: Mutex<Option<TcpStream>>,
}

impl SidecarClient {
    pub fn new(addr: impl Into<String>, dim: usize, timeout: Duration) -> Self {
        SidecarClient {
            addr: addr.into(),
            dim,
            timeout,
            conn: Mutex::new(None),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn connect(&self) -> Result<TcpStream, SidecarError> {
        let addr = self
            .addr
            .to_socket_addrs()
            .ok()
            .and_then(|mut a| a.next())
            .ok_or_else(|| SidecarError::BadAddress(self.addr.clone()))?;
        let stream =
            TcpStream::connect_timeout(&addr, self.timeout).map_err(|e| match e.kind() {
                io::ErrorKind::ConnectionRefused => SidecarError::ConnectionRefused(addr),
                io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock => {
                    SidecarError::Timeout(self.timeout)
                }
                _ => SidecarError::Io(e),
            })?;
        stream.set_nodelay(true)?;
        Ok(stream)
    }

    /// Sends the payload and waits for the embedding, bounded by the
    /// configured deadline.
    pub fn encode(&self, payload: &[u8]) -> Result<Embedding, SidecarError> {
        let mut guard = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        let deadline = Instant::now() + self.timeout;
        let mut stream = match guard.take() {
            Some(s) => s,
            None => self.connect()?,
        };
        let result = self.round_trip(&mut stream, payload, deadline);
        if result.is_ok() {
            *guard = Some(stream);
        }
        result
    }

    fn round_trip(
        &self,
        stream: &mut TcpStream,
        payload: &[u8],
        deadline: Instant,
    ) -> Result<Embedding, SidecarError> {
        let timed_out = |e: io::Error| match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => {
                SidecarError::Timeout(self.timeout)
            }
            _ => SidecarError::Io(e),
        };
        let remaining = || {
            deadline
                .checked_duration_since(Instant::now())
                .filter(|d| !d.is_zero())
                .ok_or(SidecarError::Timeout(self.timeout))
        };
        stream.set_write_timeout(Some(remaining()?))?;
        stream
            .write_all(&encode_request(payload))
            .map_err(timed_out)?;

        let mut read_exact = |buf: &mut [u8]| -> Result<(), SidecarError> {
            let mut filled = 0;
            while filled < buf.len() {
                stream.set_read_timeout(Some(remaining()?))?;
                match stream.read(&mut buf[filled..]) {
                    Ok(0) => {
                        return Err(SidecarError::Truncated {
                            needed: buf.len(),
                            available: filled,
                        })
                    }
                    Ok(n) => filled += n,
                    Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                    Err(e) => return Err(timed_out(e)),
                }
            }
            Ok(())
        };
        let mut header = [0u8; 8];
        read_exact(&mut header)?;
        let magic: [u8; 4] = header[..4].try_into().unwrap();
        if &magic != RESPONSE_MAGIC {
            return Err(SidecarError::BadMagic(magic));
        }
        let count = u32::from_le_bytes(header[4..].try_into().unwrap());
        check_count(count, self.dim)?;
        let mut body = vec![0u8; 4 * count as usize];
        read_exact(&mut body)?;
        values_to_embedding(&body, self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn response_decoding() {
        let e = decode_response(&encode_response(&[1.0, 2.0]), 2).unwrap();
        assert_eq!(e.values(), &[1.0, 2.0]);
        assert!(matches!(
            decode_response(&encode_response(&[1.0]), 2),
            Err(SidecarError::Dimension {
                expected: 2,
                actual: 1
            })
        ));
        assert!(matches!(
            decode_response(&encode_response(&[1.0, f32::NAN]), 2),
            Err(SidecarError::NonFinite(1))
        ));
        assert!(matches!(
            decode_response(b"ACER", 2),
            Err(SidecarError::Truncated { .. })
        ));
        assert!(matches!(
            decode_response(b"XXXX\0\0\0\0", 0),
            Err(SidecarError::BadMagic(_))
        ));
        let mut short = encode_response(&[1.0, 2.0]);
        short.pop();
        assert!(matches!(
            decode_response(&short, 2),
            Err(SidecarError::Truncated { .. })
        ));
    }

    #[test]
    fn request_framing_round_trip() {
        let wire = encode_request(b"hello");
        let mut cursor = io::Cursor::new(wire);
        assert_eq!(read_request(&mut cursor).unwrap(), Some(b"hello".to_vec()));
        assert_eq!(read_request(&mut cursor).unwrap(), None);
    }

    proptest! {
        #[test]
        fn decoder_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..64), dim in 0usize..8) {
            let _ = decode_response(&bytes, dim);
        }
    }
}
