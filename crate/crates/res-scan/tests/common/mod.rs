#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_res-scan"))
}

/// Runs the binary, panics with stderr on failure, returns stdout.
pub fn run(args: &[&str]) -> Vec<u8> {
    let out = bin().args(args).output().expect("spawn res-scan");
    assert!(
        out.status.success(),
        "res-scan {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic dataset plus a bank built from its normal frames.
pub struct Fixture {
    pub dir: tempfile::TempDir,
}

impl Fixture {
    pub fn new(seed: u64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let seed = seed.to_string();
        run(&[
            "synth", "--out", s(&data), "--seed", &seed, "--normal", "6", "--per-category", "1",
            "--width", "96", "--height", "96",
        ]);
        let fx = Fixture { dir };
        run(&[
            "bank", "build", "--frames", s(&fx.data()), "--truth", s(&fx.truth()), "--out",
            s(&fx.bank()), "--limit", "4", "--seed", "1",
        ]);
        fx
    }

    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    pub fn data(&self) -> PathBuf {
        self.root().join("data")
    }

    pub fn frame(&self, id: &str) -> PathBuf {
        self.data().join("frames").join(format!("{id}.f32"))
    }

    pub fn truth(&self) -> PathBuf {
        self.data().join("truth.json")
    }

    pub fn bank(&self) -> PathBuf {
        self.root().join("bank.rbnk")
    }

    pub fn reservoir(&self) -> PathBuf {
        self.root().join("bank.r2de")
    }

    /// Center of the truth rect of a frame.
    pub fn truth_center(&self, id: &str) -> (usize, usize) {
        let truths = res_scan_core::gpr::read_truth(self.truth()).unwrap();
        let t = truths.iter().find(|t| t.frame_id == id).unwrap();
        ((t.rect.x1 + t.rect.x2) / 2, (t.rect.y1 + t.rect.y2) / 2)
    }
}
