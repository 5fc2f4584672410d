//! Minimal blocking client for tests and tooling.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};

use crate::frame::{decode_frame, encode_frame, Frame, FrameBody, FrameError};

pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    next_id: u64,
}

impl Client {
    pub fn connect(addr: SocketAddr) -> std::io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
            next_id: 1,
        })
    }

    /// Send a body with the next monotonically increasing id; returns the id.
    pub fn send(&mut self, body: FrameBody) -> std::io::Result<u64> {
        let id = self.next_id;
        self.next_id += 1;
        self.send_frame(Frame::new(id, body))?;
        Ok(id)
    }

    pub fn send_reply(&mut self, to: u64, body: FrameBody) -> std::io::Result<u64> {
        let id = self.next_id;
        self.next_id += 1;
        self.send_frame(Frame::reply(id, to, body))?;
        Ok(id)
    }

    pub fn send_frame(&mut self, frame: Frame) -> std::io::Result<()> {
        let bytes = encode_frame(&frame)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
        self.writer.write_all(&bytes)
    }

    /// Send a raw line, bypassing the codec (for malformed-input tests).
    pub fn send_raw(&mut self, line: &str) -> std::io::Result<()> {
        self.writer.write_all(line.as_bytes())
    }

    pub fn recv(&mut self) -> Result<Frame, FrameError> {
        let mut line = String::new();
        let n = self
            .reader
            .read_line(&mut line)
            .map_err(|e| FrameError::Framing(e.to_string()))?;
        if n == 0 {
            return Err(FrameError::Framing("connection closed".into()));
        }
        decode_frame(line.as_bytes())
    }

    /// Read frames until one answers `id`; returns it plus everything seen
    /// before it (e.g. streamed task events).
    pub fn recv_until_reply(&mut self, id: u64) -> Result<(Frame, Vec<Frame>), FrameError> {
        let mut seen = Vec::new();
        loop {
            let frame = self.recv()?;
            if frame.in_reply_to == Some(id) {
                return Ok((frame, seen));
            }
            seen.push(frame);
        }
    }
}
