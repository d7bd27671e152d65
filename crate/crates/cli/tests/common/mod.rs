//! Shared helpers for the command-line test suites.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tcvc_core::imaging::{save_png, Frame, Space};
use tcvc_core::tensor::Tensor;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_tcvc")
}

pub fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

pub fn tmpdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tcvc_cli_{name}_{}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Toy corpus: moving two-tone blocks so consecutive frames are related but
/// distinct, the way thumbnail animation frames would be.
pub fn write_corpus(root: &Path, episodes: &[(&str, usize)], size: usize) {
    for (episode, frames) in episodes {
        for i in 0..*frames {
            let mut t = Tensor::<f32>::zeros(&[3, size, size]);
            let shift = (i * 2) % size;
            for y in 0..size {
                for x in 0..size {
                    let block = ((x + shift) / 8 + y / 8) % 2 == 0;
                    t.set3(0, y, x, if block { 0.85 } else { 0.15 });
                    t.set3(1, y, x, if block { 0.25 } else { 0.70 });
                    t.set3(2, y, x, 0.2 + 0.6 * (y as f32 / size as f32));
                }
            }
            let f = Frame::new(t, Space::Storage).unwrap();
            save_png(&f, &root.join(episode).join(format!("{i:03}.png"))).unwrap();
        }
    }
}

pub fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

pub fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

pub fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}
