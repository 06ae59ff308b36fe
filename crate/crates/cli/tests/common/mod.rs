#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qudit_core::pulse::{synthesize, DecayFit, DecayTrace, TraceKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn qudit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qudit"))
}

pub fn run(args: &[&str], out: &Path) -> Output {
    let mut cmd = qudit();
    cmd.args(args).arg("--out").arg(out).arg("--threads").arg("1");
    cmd.output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

/// Two-pulse decay with ESEEM at twice the ¹⁴N Larmor frequency of `field_mt`.
pub fn decay_trace(field_mt: f64, noise: f64, seed: u64) -> DecayTrace {
    let nu = 2.0 * 3.0777 * field_mt * 1e-3;
    let truth = DecayFit::from_params(TraceKind::TwoPulse, 0.0, 1.0, 1.0, 0.3, 0.5, nu, 0.2);
    let t: Vec<f64> = (0..256).map(|i| 0.08 + 0.012 * i as f64).collect();
    let mut y = synthesize(&truth, &t);
    if noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, noise).unwrap();
        y.iter_mut().for_each(|v| *v += d.sample(&mut rng));
    }
    DecayTrace::new(t, y, TraceKind::TwoPulse, field_mt).unwrap()
}

/// Nutation-like signal: sum of cosines sampled every `dt` μs.
pub fn nutation_trace(components: &[(f64, f64)], n: usize, dt: f64, field_mt: f64) -> DecayTrace {
    let t: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
    let y = t.iter().map(|&x| components.iter().map(|&(f, a)| a * (std::f64::consts::TAU * f * x).cos()).sum()).collect();
    DecayTrace::new(t, y, TraceKind::TwoPulse, field_mt).unwrap()
}

/// Write `count` decay traces at fields 300, 340, … mT in shuffled file order.
pub fn write_decay_dir(dir: &Path, count: usize) -> Vec<PathBuf> {
    (0..count)
        .map(|i| {
            let field = 300.0 + 40.0 * ((i * 7) % count) as f64;
            let path = dir.join(format!("trace_{i:02}.csv"));
            std::fs::write(&path, decay_trace(field, 0.005, i as u64).to_csv()).unwrap();
            path
        })
        .collect()
}
