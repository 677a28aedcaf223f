//! Line-framed transports: an in-process duplex pair for tests and the
//! simulation harness, and TCP for the daemon. Both carry the same encoded
//! bytes, so wire-level tests see identical traffic either way.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::mpsc;
use std::sync::{Arc, Mutex};

use crate::protocol::{decode, encode, Message, MAX_MESSAGE};
use crate::CoreError;

/// An ordered, reliable, bidirectional message-line channel.
pub trait Channel: Send {
    fn send_line(&mut self, line: &[u8]) -> Result<(), CoreError>;
    /// Blocks for the next line; `None` when the peer is gone.
    fn recv_line(&mut self) -> Result<Option<Vec<u8>>, CoreError>;
}

pub fn send_msg(_chan: &mut dyn Channel, msg: &Message) -> Result<(), CoreError> {
    let line = encode(msg)?;
    _chan.send_line(&line)
}

pub fn recv_msg(chan: &mut dyn Channel) -> Result<Option<Message>, CoreError> {
    match chan.recv_line()? {
        Some(line) => Ok(Some(decode(&line)?)),
        None => Ok(None),
    }
}

/// Shared capture log for wire-level assertions.
#[derive(Debug, Clone, Default)]
pub struct CaptureLog {
    lines: Arc<Mutex<Vec<Vec<u8>>>>,
}

impl CaptureLog {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, line: &[u8]) {
        self.lines.lock().unwrap().push(line.to_vec());
    }

    pub fn lines(&self) -> Vec<Vec<u8>> {
        self.lines.lock().unwrap().clone()
    }

    /// True when `needle` occurs inside any captured line.
    pub fn contains_bytes(&self, needle: &[u8]) -> bool {
        self.lines
            .lock()
            .unwrap()
            .iter()
            .any(|line| line.windows(needle.len()).any(|w| w == needle))
    }
}

/// One end of an in-process duplex pair.
pub struct InProcChannel {
    tx: mpsc::Sender<Vec<u8>>,
    rx: mpsc::Receiver<Vec<u8>>,
    capture: Option<CaptureLog>,
}

/// Creates a connected pair of in-process channels.
pub fn duplex() -> (InProcChannel, InProcChannel) {
    let (tx_a, rx_b) = mpsc::channel();
    let (tx_b, rx_a) = mpsc::channel();
    (
        InProcChannel {
            tx: tx_a,
            rx: rx_a,
            capture: None,
        },
        InProcChannel {
            tx: tx_b,
            rx: rx_b,
            capture: None,
        },
    )
}

impl InProcChannel {
    /// Records every line passing through this end, in both directions.
    pub fn with_capture(mut self, log: CaptureLog) -> Self {
        self.capture = Some(log);
        self
    }
}

impl Channel for InProcChannel {
    fn send_line(&mut self, line: &[u8]) -> Result<(), CoreError> {
        if line.len() > MAX_MESSAGE {
            return Err(CoreError::Malformed("message exceeds 1 MiB".into()));
        }
        if let Some(log) = &self.capture {
            log.push(line);
        }
        self.tx
            .send(line.to_vec())
            .map_err(|_| CoreError::ChannelClosed)
    }

    fn recv_line(&mut self) -> Result<Option<Vec<u8>>, CoreError> {
        match self.rx.recv() {
            Ok(line) => {
                if let Some(log) = &self.capture {
                    log.push(&line);
                }
                Ok(Some(line))
            }
            Err(_) => Ok(None),
        }
    }
}

/// Newline-framed TCP transport: UTF-8 JSON, one message per line.
pub struct TcpChannel {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl TcpChannel {
    pub fn new(stream: TcpStream) -> Result<Self, CoreError> {
        let writer = stream.try_clone()?;
        Ok(TcpChannel {
            reader: BufReader::new(stream),
            writer,
        })
    }

    pub fn connect(addr: &str) -> Result<Self, CoreError> {
        Self::new(TcpStream::connect(addr)?)
    }
}

impl Channel for TcpChannel {
    fn send_line(&mut self, line: &[u8]) -> Result<(), CoreError> {
        if line.len() > MAX_MESSAGE {
            return Err(CoreError::Malformed("message exceeds 1 MiB".into()));
        }
        self.writer.write_all(line)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv_line(&mut self) -> Result<Option<Vec<u8>>, CoreError> {
        use std::io::Read;
        let mut line = Vec::new();
        let mut limited = Read::take(&mut self.reader, (MAX_MESSAGE + 1) as u64);
        let n = limited.read_until(b'\n', &mut line)?;
        if n == 0 {
            return Ok(None);
        }
        if line.last() == Some(&b'\n') {
            line.pop();
        } else if line.len() > MAX_MESSAGE {
            return Err(CoreError::Malformed("message exceeds 1 MiB".into()));
        }
        Ok(Some(line))
    }
}
