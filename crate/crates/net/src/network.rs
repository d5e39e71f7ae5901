use std::io;
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::time::Duration;

/// How outbound connections are made. Every client path goes through this,
/// so tests can observe exactly which endpoints were contacted.
pub trait Network: Send + Sync {
    fn connect(&self, endpoint: &str, timeout: Duration) -> io::Result<TcpStream>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TcpNetwork;

impl Network for TcpNetwork {
    fn connect(&self, endpoint: &str, timeout: Duration) -> io::Result<TcpStream> {
        let mut last = io::Error::new(io::ErrorKind::NotFound, format!("no address for {endpoint}"));
        for addr in endpoint.to_socket_addrs()? {
            match TcpStream::connect_timeout(&addr, timeout) {
                Ok(s) => {
                    s.set_nodelay(true)?;
                    return Ok(s);
                }
                Err(e) => last = e,
            }
        }
        Err(last)
    }
}

/// Wraps another network and records every endpoint a connection was
/// attempted to, in order.
pub struct RecordingNetwork {
    inner: Arc<dyn Network>,
    contacted: Mutex<Vec<String>>,
}

impl RecordingNetwork {
    pub fn new(inner: Arc<dyn Network>) -> Self {
        RecordingNetwork {
            inner,
            contacted: Mutex::new(Vec::new()),
        }
    }

    pub fn contacted(&self) -> Vec<String> {
        self.contacted.lock().unwrap().clone()
    }
}

impl Network for RecordingNetwork {
    fn connect(&self, endpoint: &str, timeout: Duration) -> io::Result<TcpStream> {
        self.contacted.lock().unwrap().push(endpoint.to_string());
        self.inner.connect(endpoint, timeout)
    }
}
