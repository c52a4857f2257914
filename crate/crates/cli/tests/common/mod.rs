#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use lorlut_core::io::{write_image, ImageFormat};
use lorlut_core::lowrank::RankComponent;
use lorlut_core::{CpFactors, ImageBuffer, LorLutModel, RgbColor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lorlut"))
}

pub fn run(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    let mut cmd = bin();
    for a in args {
        cmd.arg(a);
    }
    cmd.output().expect("spawn lorlut")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn ok(o: Output) -> String {
    assert!(
        o.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        o.status,
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
    stdout(&o)
}

/// Value after `key: ` on the first line that starts with it.
pub fn field(out: &str, key: &str) -> String {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no `{key}` line in:\n{out}"))
        .to_string()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, |_, _| RgbColor::new(rng.random(), rng.random(), rng.random()))
}

pub fn save_png(dir: &Path, name: &str, img: &ImageBuffer) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, write_image(img, ImageFormat::Png).unwrap()).unwrap();
    p
}

pub fn save_text(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Rank-`rank` residual whose curves vanish at both ends of the lattice, so
/// identity plus residual stays inside the unit cube.
pub fn bump_model(rng: &mut ChaCha8Rng, g: usize, rank: usize, amp: f64) -> LorLutModel {
    let curve = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..g)
            .map(|i| {
                let t = i as f64 / (g - 1) as f64;
                (std::f64::consts::PI * t).sin() * rng.random_range(-1.0..1.0)
            })
            .collect()
    };
    let comps = (0..rank)
        .map(|_| {
            let (u, v, w) = (curve(rng), curve(rng), curve(rng));
            let mut c = [0.0; 3];
            for x in &mut c {
                *x = amp * rng.random_range(-1.0..1.0);
            }
            RankComponent { u, v, w, c }
        })
        .collect();
    LorLutModel::new(g, Vec::new(), Vec::new(), CpFactors::new(g, comps).unwrap()).unwrap()
}

/// A running `lorlut serve`, killed on drop.
pub struct Server {
    child: Child,
    pub addr: SocketAddr,
    pub banner: String,
}

impl Server {
    pub fn start(extra: &[&str]) -> Server {
        let mut child = bin()
            .args(["serve", "--port", "0"])
            .args(extra)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn server");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line
            .split("http://")
            .nth(1)
            .and_then(|s| s.split_whitespace().next())
            .unwrap_or_else(|| panic!("unexpected banner: {line}"))
            .parse()
            .unwrap();
        Server { child, addr, banner: line }
    }

    /// Minimal HTTP/1.1 exchange; returns status and body.
    pub fn request(&self, method: &str, path: &str, body: Option<&str>) -> (u16, Vec<u8>) {
        let mut s = TcpStream::connect(self.addr).unwrap();
        let body = body.unwrap_or("");
        write!(
            s,
            "{method} {path} HTTP/1.1\r\nHost: {}\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
            self.addr,
            body.len()
        )
        .unwrap();
        let mut raw = Vec::new();
        s.read_to_end(&mut raw).unwrap();
        let split = raw.windows(4).position(|w| w == b"\r\n\r\n").expect("header end");
        let head = String::from_utf8_lossy(&raw[..split]).to_ascii_lowercase();
        let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
        let mut payload = raw[split + 4..].to_vec();
        if head.contains("transfer-encoding: chunked") {
            payload = dechunk(&payload);
        }
        (status, payload)
    }
}

fn dechunk(mut data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    loop {
        let eol = data.windows(2).position(|w| w == b"\r\n").unwrap();
        let n = usize::from_str_radix(std::str::from_utf8(&data[..eol]).unwrap().trim(), 16).unwrap();
        if n == 0 {
            return out;
        }
        out.extend_from_slice(&data[eol + 2..eol + 2 + n]);
        data = &data[eol + 4 + n..];
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
