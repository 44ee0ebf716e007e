//! Relay fixtures: a pipe-fed relay and a delaying TCP proxy.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use fpvgl_core::relay::{serve, RelayConfig, RelayServer};

pub fn wait_for(mut cond: impl FnMut() -> bool) {
    let deadline = Instant::now() + Duration::from_secs(10);
    while !cond() {
        assert!(Instant::now() < deadline, "timed out");
        std::thread::sleep(Duration::from_millis(2));
    }
}

/// A relay reading from an in-process pipe.
pub fn start(config: RelayConfig) -> (RelayServer, std::io::PipeWriter) {
    let (r, w) = std::io::pipe().unwrap();
    (serve(r, "127.0.0.1:0", config).unwrap(), w)
}

/// Forwards relay traffic to one client, holding every chunk for `delay`.
pub fn delay_proxy(upstream: SocketAddr, delay: Duration) -> SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let (mut down, _) = listener.accept().unwrap();
        let mut up = TcpStream::connect(upstream).unwrap();
        let (tx, rx) = mpsc::channel::<(Instant, Vec<u8>)>();
        std::thread::spawn(move || {
            for (due, chunk) in rx {
                if let Some(w) = due.checked_duration_since(Instant::now()) {
                    std::thread::sleep(w);
                }
                if down.write_all(&chunk).is_err() {
                    return;
                }
            }
        });
        let mut buf = [0u8; 4096];
        while let Ok(n) = up.read(&mut buf) {
            if n == 0 {
                break;
            }
            tx.send((Instant::now() + delay, buf[..n].to_vec())).unwrap();
        }
    });
    addr
}
