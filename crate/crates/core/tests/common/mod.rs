//! Minimal one-shot HTTP mock for client tests.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

pub struct Captured {
    pub headers: Vec<String>,
    pub body: String,
}

pub struct Mock {
    pub url: String,
    pub requests: mpsc::Receiver<Captured>,
}

/// Serves `count` requests, answering each with `status` and `body` after
/// `delay`.
pub fn serve(status: u16, body: String, delay: Duration, count: usize) -> Mock {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for _ in 0..count {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let line = line.trim_end().to_string();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap_or(0);
                }
                headers.push(line);
            }
            let mut buf = vec![0; length];
            let _ = reader.read_exact(&mut buf);
            let _ = tx.send(Captured {
                headers,
                body: String::from_utf8_lossy(&buf).into_owned(),
            });
            thread::sleep(delay);
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.flush();
        }
    });
    Mock { url, requests: rx }
}

pub fn once(body: impl Into<String>) -> Mock {
    serve(200, body.into(), Duration::ZERO, 1)
}
