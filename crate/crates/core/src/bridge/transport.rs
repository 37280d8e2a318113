//! Stream transports for the line protocol.
//!
//! [`LineClient`] keeps many requests in flight over one duplex stream and
//! routes answers back by id; a reader thread owns the inbound half.
//! [`serve`] is the matching server loop for any in-process [`Backend`].

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use super::protocol::{decode, encode, WireRequest, WireResponse};
use super::{
    Backend, GenerateRequest, GenerateResponse, Handshake, ScoreRequest, ScoreResponse, PROB_FLOOR,
};
use crate::error::{Error, Result};

type Reply = Result<WireResponse>;

#[derive(Default)]
struct Pending {
    waiters: HashMap<u64, Sender<Reply>>,
    closed: Option<String>,
}

/// Client half of the line protocol over a child process or socket.
pub struct LineClient {
    writer: Mutex<Box<dyn Write + Send>>,
    pending: Arc<Mutex<Pending>>,
    next_id: AtomicU64,
    reader: Option<JoinHandle<()>>,
    child: Option<Mutex<Child>>,
    socket: Option<TcpStream>,
}

impl LineClient {
    pub fn from_streams<R, W>(reader: R, writer: W) -> Self
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        let pending = Arc::new(Mutex::new(Pending::default()));
        let reader = {
            let pending = Arc::clone(&pending);
            std::thread::spawn(move || read_loop(reader, pending))
        };
        Self {
            writer: Mutex::new(Box::new(writer)),
            pending,
            next_id: AtomicU64::new(1),
            reader: Some(reader),
            child: None,
            socket: None,
        }
    }

    /// Launches `command` through the shell and speaks the protocol on its stdio.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::BackendLaunch(format!("{command}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut client = Self::from_streams(BufReader::new(stdout), stdin);
        client.child = Some(Mutex::new(child));
        Ok(client)
    }

    pub fn connect_tcp(addr: &str) -> Result<Self> {
        let stream = TcpStream::connect(addr)
            .map_err(|e| Error::BackendLaunch(format!("connect {addr}: {e}")))?;
        let reader = BufReader::new(stream.try_clone()?);
        let socket = stream.try_clone()?;
        let mut client = Self::from_streams(reader, stream);
        client.socket = Some(socket);
        Ok(client)
    }

    fn call(&self, mut req: WireRequest) -> Result<WireResponse> {
        let caller_id = req.id();
        let wire_id = self.next_id.fetch_add(1, Ordering::Relaxed);
        req.set_id(wire_id);
        let (tx, rx) = mpsc::channel();
        {
            let mut pending = self.pending.lock().expect("pending lock");
            if let Some(reason) = &pending.closed {
                return Err(Error::transport(caller_id, reason.clone()));
            }
            pending.waiters.insert(wire_id, tx);
        }
        let line = encode(&req)?;
        let written = {
            let mut w = self.writer.lock().expect("writer lock");
            w.write_all(line.as_bytes()).and_then(|_| w.flush())
        };
        if let Err(e) = written {
            self.pending.lock().expect("pending lock").waiters.remove(&wire_id);
            return Err(Error::transport(caller_id, format!("write failed: {e}")));
        }
        let reply = rx
            .recv()
            .map_err(|_| Error::transport(caller_id, "backend closed the stream"))?;
        match reply {
            Ok(WireResponse::Error { kind, message, .. }) => {
                Err(WireResponse::into_error(Some(caller_id), kind, message))
            }
            Ok(mut resp) => {
                resp.set_id(caller_id);
                Ok(resp)
            }
            Err(e) => Err(e),
        }
    }
}

fn read_loop<R: BufRead>(mut reader: R, pending: Arc<Mutex<Pending>>) {
    let mut line = String::new();
    let reason = loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) => break "backend closed the stream".to_string(),
            Ok(_) => {}
            Err(e) => break format!("read failed: {e}"),
        }
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Result<WireResponse> = decode(&line);
        let mut guard = pending.lock().expect("pending lock");
        match parsed {
            Ok(resp) => match resp.id() {
                Some(id) => {
                    if let Some(tx) = guard.waiters.remove(&id) {
                        let _ = tx.send(Ok(resp));
                    }
                }
                None => {
                    // An error without an id cannot be routed; fail everything in flight.
                    let msg = match &resp {
                        WireResponse::Error { message, .. } => message.clone(),
                        _ => "unroutable response".to_string(),
                    };
                    for (id, tx) in guard.waiters.drain() {
                        let _ = tx.send(Err(Error::protocol(id, msg.clone())));
                    }
                }
            },
            Err(e) => {
                let msg = e.to_string();
                for (id, tx) in guard.waiters.drain() {
                    let _ = tx.send(Err(Error::protocol(id, msg.clone())));
                }
            }
        }
    };
    let mut guard = pending.lock().expect("pending lock");
    for (id, tx) in guard.waiters.drain() {
        let _ = tx.send(Err(Error::transport(id, reason.clone())));
    }
    guard.closed = Some(reason);
}

impl Backend for LineClient {
    fn handshake(&self) -> Result<Handshake> {
        match self.call(WireRequest::Handshake { id: 0 })? {
            WireResponse::Handshake { info, .. } => Ok(info),
            other => Err(Error::protocol(other.id(), "expected handshake response")),
        }
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        match self.call(WireRequest::Score(req.clone()))? {
            WireResponse::Score(r) => Ok(r),
            other => Err(Error::protocol(other.id(), "expected score response")),
        }
    }

    fn generate(&self, req: &GenerateRequest) -> Result<GenerateResponse> {
        match self.call(WireRequest::Generate(req.clone()))? {
            WireResponse::Generate(r) => Ok(r),
            other => Err(Error::protocol(other.id(), "expected generate response")),
        }
    }
}

impl Drop for LineClient {
    fn drop(&mut self) {
        // Closing our write half tells a well-behaved backend to exit.
        if let Ok(mut w) = self.writer.lock() {
            *w = Box::new(std::io::sink());
        }
        if let Some(socket) = self.socket.take() {
            let _ = socket.shutdown(std::net::Shutdown::Write);
        }
        if let Some(child) = self.child.take() {
            let mut child = child.into_inner().unwrap_or_else(|e| e.into_inner());
            let _ = child.wait();
            if let Some(reader) = self.reader.take() {
                let _ = reader.join();
            }
        }
    }
}

/// Answers protocol requests from `reader` until end of stream.
///
/// Requests are processed serially. Probabilities are floored at
/// [`PROB_FLOOR`] on the way out.
pub fn serve<B, R, W>(backend: &B, reader: R, mut writer: W) -> Result<()>
where
    B: Backend + ?Sized,
    R: BufRead,
    W: Write,
{
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match decode::<WireRequest>(&line) {
            Ok(req) => {
                let id = req.id();
                let result = match req {
                    WireRequest::Handshake { id } => backend
                        .handshake()
                        .map(|info| WireResponse::Handshake { id, info }),
                    WireRequest::Score(r) => r.validate().and_then(|_| backend.score(&r)).map(
                        |mut s| {
                            s.id = id;
                            for p in &mut s.target_probs {
                                *p = p.max(PROB_FLOOR);
                            }
                            WireResponse::Score(s)
                        },
                    ),
                    WireRequest::Generate(g) => {
                        g.validate().and_then(|_| backend.generate(&g)).map(|mut r| {
                            r.id = id;
                            WireResponse::Generate(r)
                        })
                    }
                };
                result.unwrap_or_else(|e| WireResponse::from_error(Some(id), &e))
            }
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(serde_json::Value::as_u64));
                WireResponse::from_error(id, &e)
            }
        };
        writer.write_all(encode(&response)?.as_bytes())?;
        writer.flush()?;
    }
    Ok(())
}
