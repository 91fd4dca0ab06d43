//! Packet framing over async byte streams.

use std::io;

use thiserror::Error;
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};
use xri_core::codec::{decode_packet, encode_packet_into, EncodeError, Packet, ProtocolError};

#[derive(Debug, Error)]
pub enum FrameError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("connection closed mid-packet")]
    UnexpectedEof,
}

pub struct FrameReader<R> {
    inner: R,
    buf: Vec<u8>,
    max_packet_size: usize,
}

impl<R: AsyncRead + Unpin> FrameReader<R> {
    pub fn new(inner: R, max_packet_size: usize) -> Self {
        Self {
            inner,
            buf: Vec::with_capacity(4096),
            max_packet_size,
        }
    }

    /// Next complete packet, or `None` on a clean end of stream. Cancel-safe:
    /// bytes already read stay buffered.
    pub async fn next(&mut self) -> Result<Option<Packet>, FrameError> {
        loop {
            if let Some((packet, used)) = decode_packet(&self.buf, self.max_packet_size)? {
                self.buf.drain(..used);
                return Ok(Some(packet));
            }
            if self.buf.capacity() - self.buf.len() < 1024 {
                self.buf.reserve(4096);
            }
            if self.inner.read_buf(&mut self.buf).await? == 0 {
                return if self.buf.is_empty() {
                    Ok(None)
                } else {
                    Err(FrameError::UnexpectedEof)
                };
            }
        }
    }
}

pub async fn write_packet<W: AsyncWrite + Unpin>(w: &mut W, packet: &Packet) -> io::Result<()> {
    let mut out = Vec::new();
    encode_packet_into(packet, &mut out).map_err(encode_io)?;
    w.write_all(&out).await
}

pub(crate) fn encode_io(e: EncodeError) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidInput, e)
}
